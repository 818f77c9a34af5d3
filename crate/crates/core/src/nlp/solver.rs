//! Augmented-Lagrangian solver for `min F(z)` s.t. `c(z) = 0`, `l ≤ z ≤ u`.
//!
//! Each subproblem minimizes `F + λᵀc + ρ/2‖c‖²` over the box with a
//! projected Newton method (Bertsekas-style active set, damped Cholesky on the
//! free variables, Armijo search along the projection arc).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::banded::{bandwidth, BandCholesky};

/// Sparse rows `(column, value)`; repeated columns are summed.
pub type SparseRows = Vec<Vec<(usize, f64)>>;

/// Problem oracle consumed by [`solve_al`].
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn objective(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64], g: &mut [f64]);
    fn constraints(&self, z: &[f64], c: &mut [f64]);
    fn jacobian(&self, z: &[f64]) -> SparseRows;
    /// `∇²F + Σ_j μ_j ∇²c_j`.
    fn hessian(&self, z: &[f64], mu: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// KKT tolerance on the projected Lagrangian gradient.
    pub tolerance: f64,
    /// Tolerance on `‖c‖_∞`.
    pub constraint_tolerance: f64,
    /// Cap on Newton iterations summed over all subproblems.
    pub max_iter: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            constraint_tolerance: 1e-10,
            max_iter: 500,
            penalty_init: 100.0,
            penalty_growth: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlResult {
    pub z: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

const MAX_PENALTY: f64 = 1e14;

fn project(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..z.len() {
        z[i] = z[i].clamp(lo[i], hi[i]);
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// `‖z − P(z − g)‖_∞`.
fn projected_gradient(z: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..z.len())
        .map(|i| (z[i] - (z[i] - g[i]).clamp(lo[i], hi[i])).abs())
        .fold(0.0, f64::max)
}

struct Merit<'a, P: NlpProblem> {
    prob: &'a P,
    lambda: &'a [f64],
    rho: f64,
    c: Vec<f64>,
}

impl<P: NlpProblem> Merit<'_, P> {
    fn value(&mut self, z: &[f64]) -> f64 {
        self.prob.constraints(z, &mut self.c);
        let f = self.prob.objective(z);
        let lin: f64 = self.lambda.iter().zip(&self.c).map(|(l, c)| l * c).sum();
        let sq: f64 = self.c.iter().map(|c| c * c).sum();
        f + lin + 0.5 * self.rho * sq
    }
}

fn jt_times(jac: &SparseRows, v: &[f64], out: &mut [f64]) {
    for (r, row) in jac.iter().enumerate() {
        for &(col, val) in row {
            out[col] += val * v[r];
        }
    }
}

/// Runs the method of multipliers from `z0`.
pub fn solve_al<P: NlpProblem>(prob: &P, z0: &[f64], lambda0: Option<&[f64]>, s: &SolverSettings) -> AlResult {
    let nv = prob.num_vars();
    let ne = prob.num_eq();
    let (lo, hi) = (prob.lower().to_vec(), prob.upper().to_vec());
    let mut z = z0.to_vec();
    project(&mut z, &lo, &hi);
    let mut lambda = match lambda0 {
        Some(l) if l.len() == ne => l.to_vec(),
        _ => vec![0.0; ne],
    };
    let fixed: Vec<bool> = (0..nv).map(|i| lo[i] == hi[i]).collect();
    let mut rho = s.penalty_init;
    let mut iters = 0usize;
    let mut c = vec![0.0; ne];
    prob.constraints(&z, &mut c);
    let mut cnorm = inf_norm(&c);
    let mut prev_cnorm = cnorm;
    let mut g = vec![0.0; nv];
    let mut grad_f = vec![0.0; nv];
    let mut status = SolveStatus::MaxIter;
    let mut kkt = f64::INFINITY;

    'outer: for _outer in 0..200 {
        let omega = (0.1 * s.tolerance).max(cnorm.min(1e-3));
        // inner projected Newton on the merit function
        loop {
            prob.constraints(&z, &mut c);
            let mu: Vec<f64> = lambda.iter().zip(&c).map(|(l, ci)| l + rho * ci).collect();
            prob.gradient(&z, &mut grad_f);
            g.copy_from_slice(&grad_f);
            let jac = prob.jacobian(&z);
            jt_times(&jac, &mu, &mut g);
            let pg = projected_gradient(&z, &g, &lo, &hi);
            if pg <= omega {
                break;
            }
            if iters >= s.max_iter {
                status = SolveStatus::MaxIter;
                break 'outer;
            }
            iters += 1;

            let mut hess = prob.hessian(&z, &mu);
            for row in &jac {
                for &(a, va) in row {
                    for &(b, vb) in row {
                        hess[(a, b)] += rho * va * vb;
                    }
                }
            }

            let eps = pg.min(1e-3);
            let mut free = Vec::with_capacity(nv);
            let mut dir = vec![0.0; nv];
            for i in 0..nv {
                if fixed[i] {
                    continue;
                }
                let at_lo = z[i] <= lo[i] + eps && g[i] > 0.0;
                let at_hi = z[i] >= hi[i] - eps && g[i] < 0.0;
                if at_lo || at_hi {
                    dir[i] = -g[i] / hess[(i, i)].abs().max(1e-12);
                } else {
                    free.push(i);
                }
            }
            let nf = free.len();
            if nf > 0 {
                let hf = DMatrix::from_fn(nf, nf, |a, b| hess[(free[a], free[b])]);
                let bw = bandwidth(&hf);
                let dmax = (0..nf).map(|i| hf[(i, i)].abs()).fold(1.0, f64::max);
                let mut shift = 0.0;
                let mut chol = None;
                for _ in 0..40 {
                    if let Some(f) = BandCholesky::factor(&hf, bw, shift) {
                        chol = Some(f);
                        break;
                    }
                    shift = if shift == 0.0 { 1e-10 * dmax } else { shift * 10.0 };
                }
                let mut rhs: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
                match chol {
                    Some(f) => f.solve(&mut rhs),
                    None => {
                        for (a, &i) in free.iter().enumerate() {
                            rhs[a] = -g[i] / hess[(i, i)].abs().max(1.0);
                        }
                    }
                }
                for (a, &i) in free.iter().enumerate() {
                    dir[i] = rhs[a];
                }
            }

            let mut merit = Merit { prob, lambda: &lambda, rho, c: vec![0.0; ne] };
            let psi0 = merit.value(&z);
            let mut alpha = 1.0;
            let mut accepted = false;
            let mut trial = z.clone();
            for _ in 0..50 {
                for i in 0..nv {
                    trial[i] = (z[i] + alpha * dir[i]).clamp(lo[i], hi[i]);
                }
                let slope: f64 = (0..nv).map(|i| g[i] * (trial[i] - z[i])).sum();
                let psi = merit.value(&trial);
                if psi <= psi0 + 1e-4 * slope + 1e-15 * (1.0 + psi0.abs()) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // stalled on round-off; let the multiplier update take over
                break;
            }
            std::mem::swap(&mut z, &mut trial);
        }

        prob.constraints(&z, &mut c);
        cnorm = inf_norm(&c);
        for (l, ci) in lambda.iter_mut().zip(&c) {
            *l += rho * ci;
        }
        prob.gradient(&z, &mut g);
        let jac = prob.jacobian(&z);
        jt_times(&jac, &lambda, &mut g);
        let pgl = projected_gradient(&z, &g, &lo, &hi);
        kkt = pgl.max(cnorm);
        if cnorm <= s.constraint_tolerance && pgl <= s.tolerance {
            status = SolveStatus::Optimal;
            break;
        }
        if iters >= s.max_iter {
            status = SolveStatus::MaxIter;
            break;
        }
        if cnorm > s.constraint_tolerance && cnorm > 0.25 * prev_cnorm {
            rho *= s.penalty_growth;
        }
        if rho > MAX_PENALTY {
            status = SolveStatus::Infeasible;
            break;
        }
        prev_cnorm = cnorm;
    }

    prob.constraints(&z, &mut c);
    let cv = inf_norm(&c);
    AlResult {
        objective: prob.objective(&z),
        z,
        multipliers: lambda,
        kkt_residual: kkt.max(cv),
        constraint_violation: cv,
        iterations: iters,
        status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (z0-1)² + (z1-2)² s.t. z0 + z1 = 1, z1 ≤ 0.8
    struct Toy {
        lo: Vec<f64>,
        hi: Vec<f64>,
    }

    impl NlpProblem for Toy {
        fn num_vars(&self) -> usize {
            2
        }
        fn num_eq(&self) -> usize {
            1
        }
        fn lower(&self) -> &[f64] {
            &self.lo
        }
        fn upper(&self) -> &[f64] {
            &self.hi
        }
        fn objective(&self, z: &[f64]) -> f64 {
            (z[0] - 1.0).powi(2) + (z[1] - 2.0).powi(2)
        }
        fn gradient(&self, z: &[f64], g: &mut [f64]) {
            g[0] = 2.0 * (z[0] - 1.0);
            g[1] = 2.0 * (z[1] - 2.0);
        }
        fn constraints(&self, z: &[f64], c: &mut [f64]) {
            c[0] = z[0] + z[1] - 1.0;
        }
        fn jacobian(&self, _z: &[f64]) -> SparseRows {
            vec![vec![(0, 1.0), (1, 1.0)]]
        }
        fn hessian(&self, _z: &[f64], _mu: &[f64]) -> DMatrix<f64> {
            DMatrix::from_diagonal_element(2, 2, 2.0)
        }
    }

    #[test]
    fn equality_and_bound() {
        let p = Toy { lo: vec![-10.0, -10.0], hi: vec![10.0, 0.8] };
        let r = solve_al(&p, &[0.0, 0.0], None, &SolverSettings::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.z[1] - 0.8).abs() < 1e-9);
        assert!((r.z[0] - 0.2).abs() < 1e-9);
        // warm restart at the solution takes no further steps
        let again = solve_al(&p, &r.z, Some(&r.multipliers), &SolverSettings::default());
        assert_eq!(again.status, SolveStatus::Optimal);
        assert!(again.iterations <= 2);
    }

    #[test]
    fn unconstrained_by_bounds() {
        let p = Toy { lo: vec![-10.0; 2], hi: vec![10.0; 2] };
        let r = solve_al(&p, &[5.0, 5.0], None, &SolverSettings::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.z[0] - 0.0).abs() < 1e-9 && (r.z[1] - 1.0).abs() < 1e-9);
    }
}
