//! Globally adaptive Gauss-Kronrod (7/15) quadrature for vector-valued integrands.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-12, max_intervals: 4000 }
    }
}

struct Piece {
    a: f64,
    b: f64,
    val: Vec<f64>,
    err: Vec<f64>,
}

fn kronrod<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Piece {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    f(c, buf);
    for i in 0..dim {
        k[i] = WGK[7] * buf[i];
        g[i] = WG[3] * buf[i];
    }
    for j in 0..7 {
        let dx = hl * XGK[j];
        for t in [c - dx, c + dx] {
            f(t, buf);
            for i in 0..dim {
                k[i] += WGK[j] * buf[i];
                if j % 2 == 1 {
                    g[i] += WG[j / 2] * buf[i];
                }
            }
        }
    }
    let val: Vec<f64> = k.iter().map(|v| v * hl).collect();
    let err: Vec<f64> = k
        .iter()
        .zip(&g)
        .map(|(kv, gv)| ((kv - gv) * hl).abs())
        .collect();
    Piece { a, b, val, err }
}

/// Integrates `f: R → R^dim` over `[a, b]`, splitting first at `breaks`.
///
/// Stops once every component satisfies `err_i ≤ max(abs_tol, rel_tol·|I_i|)`.
pub fn integrate<F>(mut f: F, dim: usize, a: f64, b: f64, breaks: &[f64], s: &QuadSettings) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    if dim == 0 || b <= a {
        return Ok(vec![0.0; dim]);
    }
    let mut edges = vec![a];
    edges.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut buf = vec![0.0; dim];
    let mut pieces: Vec<Piece> = edges
        .windows(2)
        .map(|w| kronrod(&mut f, w[0], w[1], dim, &mut buf))
        .collect();

    loop {
        let mut total = vec![0.0; dim];
        let mut err = vec![0.0; dim];
        for p in &pieces {
            for i in 0..dim {
                total[i] += p.val[i];
                err[i] += p.err[i];
            }
        }
        let tol: Vec<f64> = total
            .iter()
            .map(|v| s.abs_tol.max(s.rel_tol * v.abs()))
            .collect();
        if (0..dim).all(|i| err[i] <= tol[i]) {
            return Ok(total);
        }
        if pieces.len() >= s.max_intervals {
            let best = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Err(Error::NumericalFailure {
                msg: format!("quadrature did not converge on [{a}, {b}]"),
                best_estimate: best,
            });
        }
        // split the piece contributing most to the worst relative shortfall
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let r = (0..dim).map(|i| p.err[i] / tol[i]).fold(0.0, f64::max);
                (j, r)
            })
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let p = pieces.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        if !(m > p.a && m < p.b) {
            let best = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Err(Error::NumericalFailure {
                msg: "quadrature interval underflow".into(),
                best_estimate: best,
            });
        }
        pieces.push(kronrod(&mut f, p.a, m, dim, &mut buf));
        pieces.push(kronrod(&mut f, m, p.b, dim, &mut buf));
    }
}

/// Scalar convenience wrapper.
pub fn integrate_scalar<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, s: &QuadSettings) -> Result<f64> {
    integrate(|t, out| out[0] = f(t), 1, a, b, &[], s).map(|v| v[0])
}
