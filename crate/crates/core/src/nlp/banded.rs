//! Cholesky factorization of symmetric banded matrices.

use nalgebra::DMatrix;

/// Lower bandwidth of a symmetric matrix: `max |i − j|` over nonzero entries.
pub fn bandwidth(a: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let mut bw = 0;
    for i in 0..n {
        // scan row i from the left up to the diagonal
        for j in 0..i.saturating_sub(bw) {
            if a[(i, j)] != 0.0 {
                bw = i - j;
                break;
            }
        }
    }
    bw
}

/// `L Lᵀ` factor stored row-wise in band form.
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Factorizes `a + shift·I`; `None` if not positive definite.
    pub fn factor(a: &DMatrix<f64>, bw: usize, shift: f64) -> Option<Self> {
        let n = a.nrows();
        let mut f = Self { n, bw, l: vec![0.0; n * (bw + 1)] };
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = a[(i, j)];
                if i == j {
                    s += shift;
                }
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= f.l[f.idx(i, k)] * f.l[f.idx(j, k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    let id = f.idx(i, i);
                    f.l[id] = s.sqrt();
                } else {
                    let id = f.idx(i, j);
                    f.l[id] = s / f.l[f.idx(j, j)];
                }
            }
        }
        Some(f)
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[self.idx(i, k)] * b[k];
            }
            b[i] = s / self.l[self.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[self.idx(k, i)] * b[k];
            }
            b[i] = s / self.l[self.idx(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_solve() {
        let n = 12;
        let bw = 3;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let d = (i as i64 - j as i64).unsigned_abs() as usize;
            if d == 0 {
                10.0 + i as f64
            } else if d <= bw {
                1.0 / (1.0 + (i + j) as f64)
            } else {
                0.0
            }
        });
        assert_eq!(bandwidth(&a), bw);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        BandCholesky::factor(&a, bw, 0.0).unwrap().solve(&mut x);
        let r = &a * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.amax() < 1e-13);
    }

    #[test]
    fn rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(BandCholesky::factor(&a, 1, 0.0).is_none());
        assert!(BandCholesky::factor(&a, 1, 2.0).is_some());
    }
}
