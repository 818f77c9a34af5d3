//! Piecewise-polynomial trajectories, collocation schemes and error certificates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsModel;
use crate::error::{invalid, Result};
use crate::mesh::{Mesh, POINT_TOL};
use crate::norm::p_norm;
use crate::quadrature::{integrate, QuadSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[serde(alias = "fe")]
    ForwardEuler,
    #[serde(alias = "trap")]
    Trapezoidal,
    #[serde(alias = "hs")]
    HermiteSimpson,
}

impl Scheme {
    pub fn state_degree(self) -> usize {
        match self {
            Scheme::ForwardEuler => 1,
            Scheme::Trapezoidal => 2,
            Scheme::HermiteSimpson => 3,
        }
    }

    pub fn input_degree(self) -> usize {
        match self {
            Scheme::ForwardEuler => 0,
            Scheme::Trapezoidal => 1,
            Scheme::HermiteSimpson => 2,
        }
    }

    /// Times at which the ODE is enforced on segment `(a, b)`.
    pub fn collocation_points(self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Scheme::ForwardEuler => vec![a],
            Scheme::Trapezoidal => vec![a, b],
            Scheme::HermiteSimpson => vec![a, 0.5 * (a + b), b],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::ForwardEuler => "FE",
            Scheme::Trapezoidal => "TRAP",
            Scheme::HermiteSimpson => "HS",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fe" | "forward_euler" | "euler" => Ok(Scheme::ForwardEuler),
            "trap" | "trapezoidal" => Ok(Scheme::Trapezoidal),
            "hs" | "hermite_simpson" => Ok(Scheme::HermiteSimpson),
            other => Err(invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

type StatePoly = [f64; 4];
type InputPoly = [f64; 3];

/// Continuous piecewise-polynomial state and piecewise-polynomial input.
///
/// Coefficients are monomial in the local time `s = t - τ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTrajectory {
    mesh: Mesh,
    scheme: Scheme,
    n: usize,
    m: usize,
    state: Vec<StatePoly>,
    input: Vec<InputPoly>,
}

#[inline]
fn horner4(c: &StatePoly, s: f64) -> f64 {
    c[0] + s * (c[1] + s * (c[2] + s * c[3]))
}

#[inline]
fn horner4_d(c: &StatePoly, s: f64) -> f64 {
    c[1] + s * (2.0 * c[2] + s * 3.0 * c[3])
}

#[inline]
fn horner3(c: &InputPoly, s: f64) -> f64 {
    c[0] + s * (c[1] + s * c[2])
}

impl PiecewiseTrajectory {
    /// Raw constructor; `state[k][i]` and `input[k][j]` hold coefficients in `s = t - τ_k`.
    pub fn from_coefficients(
        mesh: Mesh,
        scheme: Scheme,
        state: Vec<Vec<Vec<f64>>>,
        input: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let k = mesh.num_segments();
        if state.len() != k || input.len() != k {
            return Err(invalid("need one coefficient block per segment"));
        }
        let n = state[0].len();
        let m = input[0].len();
        let mut sp = Vec::with_capacity(k * n);
        let mut ip = Vec::with_capacity(k * m);
        for seg in 0..k {
            if state[seg].len() != n || input[seg].len() != m {
                return Err(invalid("inconsistent dimensions across segments"));
            }
            for c in &state[seg] {
                if c.len() > scheme.state_degree() + 1 {
                    return Err(invalid("state polynomial degree too high for scheme"));
                }
                let mut p = [0.0; 4];
                p[..c.len()].copy_from_slice(c);
                sp.push(p);
            }
            for c in &input[seg] {
                if c.len() > scheme.input_degree() + 1 {
                    return Err(invalid("input polynomial degree too high for scheme"));
                }
                let mut p = [0.0; 3];
                p[..c.len()].copy_from_slice(c);
                ip.push(p);
            }
        }
        Ok(Self { mesh, scheme, n, m, state: sp, input: ip })
    }

    /// Builds the scheme's interpolant from node values.
    ///
    /// `x` holds the `K+1` mesh-point states. `u` holds the input nodes: `K`
    /// left endpoints for FE, `K+1` mesh points otherwise. `um` holds the
    /// `K` segment-midpoint inputs (HS only).
    pub fn from_nodes(
        mesh: Mesh,
        scheme: Scheme,
        model: &DynamicsModel,
        x: &[Vec<f64>],
        u: &[Vec<f64>],
        um: &[Vec<f64>],
    ) -> Result<Self> {
        let k = mesh.num_segments();
        let (n, m) = (model.state_dim, model.input_dim);
        let nu = if scheme == Scheme::ForwardEuler { k } else { k + 1 };
        if x.len() != k + 1 || (m > 0 && u.len() != nu) {
            return Err(invalid("node count does not match mesh and scheme"));
        }
        if scheme == Scheme::HermiteSimpson && m > 0 && um.len() != k {
            return Err(invalid("Hermite-Simpson needs one midpoint input per segment"));
        }
        let empty: Vec<f64> = Vec::new();
        let ui = |j: usize| -> &[f64] { if m == 0 { &empty } else { &u[j] } };
        let mut fk = vec![0.0; n];
        let mut fk1 = vec![0.0; n];
        let mut state = Vec::with_capacity(k * n);
        let mut input = Vec::with_capacity(k * m);
        for seg in 0..k {
            let (a, b) = mesh.segment(seg);
            let h = b - a;
            model.eval_into(a, &x[seg], ui(seg), &mut fk);
            match scheme {
                Scheme::ForwardEuler => {
                    for i in 0..n {
                        state.push([x[seg][i], fk[i], 0.0, 0.0]);
                    }
                    for j in 0..m {
                        input.push([u[seg][j], 0.0, 0.0]);
                    }
                }
                Scheme::Trapezoidal => {
                    model.eval_into(b, &x[seg + 1], ui(seg + 1), &mut fk1);
                    for i in 0..n {
                        state.push([x[seg][i], fk[i], (fk1[i] - fk[i]) / (2.0 * h), 0.0]);
                    }
                    for j in 0..m {
                        input.push([u[seg][j], (u[seg + 1][j] - u[seg][j]) / h, 0.0]);
                    }
                }
                Scheme::HermiteSimpson => {
                    model.eval_into(b, &x[seg + 1], ui(seg + 1), &mut fk1);
                    for i in 0..n {
                        let (x0, x1) = (x[seg][i], x[seg + 1][i]);
                        let c2 = (3.0 * (x1 - x0) / h - 2.0 * fk[i] - fk1[i]) / h;
                        let c3 = (2.0 * (x0 - x1) / h + fk[i] + fk1[i]) / (h * h);
                        state.push([x0, fk[i], c2, c3]);
                    }
                    for j in 0..m {
                        let (u0, u1, uh) = (u[seg][j], u[seg + 1][j], um[seg][j]);
                        input.push([
                            u0,
                            (-3.0 * u0 + 4.0 * uh - u1) / h,
                            (2.0 * u0 - 4.0 * uh + 2.0 * u1) / (h * h),
                        ]);
                    }
                }
            }
        }
        Ok(Self { mesh, scheme, n, m, state, input })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    fn check(&self, t: f64) -> Result<()> {
        if self.mesh.contains(t) {
            Ok(())
        } else {
            Err(invalid(format!(
                "t = {t} outside horizon [{}, {}]",
                self.mesh.t0(),
                self.mesh.tf()
            )))
        }
    }

    /// State coefficients of segment `k`, state `i`.
    pub fn state_coeffs(&self, k: usize, i: usize) -> [f64; 4] {
        self.state[k * self.n + i]
    }

    pub fn input_coeffs(&self, k: usize, j: usize) -> [f64; 3] {
        self.input[k * self.m + j]
    }

    /// State on segment `k` at local time `s`.
    #[inline]
    pub fn state_on(&self, k: usize, s: f64, out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = horner4(&self.state[k * self.n + i], s);
        }
    }

    #[inline]
    pub fn derivative_on(&self, k: usize, s: f64, out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = horner4_d(&self.state[k * self.n + i], s);
        }
    }

    #[inline]
    pub fn input_on(&self, k: usize, s: f64, out: &mut [f64]) {
        for j in 0..self.m {
            out[j] = horner3(&self.input[k * self.m + j], s);
        }
    }

    pub fn eval_state(&self, t: f64) -> Result<DVector<f64>> {
        self.check(t)?;
        let k = self.mesh.locate(t);
        let mut out = DVector::zeros(self.n);
        self.state_on(k, t - self.mesh.points()[k], out.as_mut_slice());
        Ok(out)
    }

    pub fn eval_state_derivative(&self, t: f64) -> Result<DVector<f64>> {
        self.check(t)?;
        let k = self.mesh.locate(t);
        let mut out = DVector::zeros(self.n);
        self.derivative_on(k, t - self.mesh.points()[k], out.as_mut_slice());
        Ok(out)
    }

    pub fn eval_input(&self, t: f64) -> Result<DVector<f64>> {
        self.check(t)?;
        let k = self.mesh.locate(t);
        let mut out = DVector::zeros(self.m);
        self.input_on(k, t - self.mesh.points()[k], out.as_mut_slice());
        Ok(out)
    }

    /// Input at `t`, clamped into the horizon.
    pub fn input_clamped(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(self.mesh.t0(), self.mesh.tf());
        let k = self.mesh.locate(t);
        self.input_on(k, t - self.mesh.points()[k], out);
    }

    pub fn state_clamped(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(self.mesh.t0(), self.mesh.tf());
        let k = self.mesh.locate(t);
        self.state_on(k, t - self.mesh.points()[k], out);
    }

    /// Largest jump between the left and right limits at interior mesh points.
    pub fn continuity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut l = vec![0.0; self.n];
        let mut r = vec![0.0; self.n];
        for k in 1..self.mesh.num_segments() {
            self.state_on(k - 1, self.mesh.segment_len(k - 1), &mut l);
            self.state_on(k, 0.0, &mut r);
            for i in 0..self.n {
                worst = worst.max((l[i] - r[i]).abs());
            }
        }
        worst
    }

    /// Local error `ε = ẋ̃ − f(t, x̃, u)` on segment `k` at local time `s`.
    pub fn local_error_on(&self, model: &DynamicsModel, k: usize, s: f64, out: &mut [f64]) {
        let t = self.mesh.points()[k] + s;
        let mut x = vec![0.0; self.n];
        let mut u = vec![0.0; self.m];
        let mut f = vec![0.0; self.n];
        self.state_on(k, s, &mut x);
        self.input_on(k, s, &mut u);
        self.derivative_on(k, s, out);
        model.eval_into(t, &x, &u, &mut f);
        for i in 0..self.n {
            out[i] -= f[i];
        }
    }
}

/// `ε(t) = ẋ̃(t) − f(t, x̃(t), u(t))`.
pub fn local_error(traj: &PiecewiseTrajectory, model: &DynamicsModel, t: f64) -> Result<DVector<f64>> {
    traj.check(t)?;
    let k = traj.mesh.locate(t);
    let mut out = DVector::zeros(traj.n);
    traj.local_error_on(model, k, t - traj.mesh.points()[k], out.as_mut_slice());
    Ok(out)
}

/// Local error at `t` using the polynomials of segment `k` (for one-sided limits).
pub fn local_error_segment(traj: &PiecewiseTrajectory, model: &DynamicsModel, k: usize, t: f64) -> DVector<f64> {
    let mut out = DVector::zeros(traj.n);
    traj.local_error_on(model, k, t - traj.mesh.points()[k], out.as_mut_slice());
    out
}

/// Collocation times of segment `k` of `mesh`.
pub fn collocation_points(scheme: Scheme, a: f64, b: f64) -> Vec<f64> {
    scheme.collocation_points(a, b)
}

/// `η_{k,i} = ∫_{T_k} |ε_i(τ)| dτ` for every state.
pub fn quadrature(traj: &PiecewiseTrajectory, model: &DynamicsModel, k: usize, s: &QuadSettings) -> Result<Vec<f64>> {
    let (a, b) = traj.mesh.segment(k);
    let n = traj.n;
    let mut x = vec![0.0; n];
    let mut u = vec![0.0; traj.m];
    let mut f = vec![0.0; n];
    let breaks: Vec<f64> = traj.scheme.collocation_points(0.0, b - a);
    integrate(
        |sl, out| {
            traj.state_on(k, sl, &mut x);
            traj.input_on(k, sl, &mut u);
            traj.derivative_on(k, sl, out);
            model.eval_into(a + sl, &x, &u, &mut f);
            for i in 0..n {
                out[i] = (out[i] - f[i]).abs();
            }
        },
        n,
        0.0,
        b - a,
        &breaks,
        s,
    )
}

/// `w_i = max_{t ∈ 𝒯_m} max{|ẋ̃_i(t)|, |x̃_i(t)|}` over `τ_0 … τ_{K-1}`.
pub fn scaling_weights(traj: &PiecewiseTrajectory) -> DVector<f64> {
    let n = traj.n;
    let mut w = DVector::zeros(n);
    let mut x = vec![0.0; n];
    let mut d = vec![0.0; n];
    for k in 0..traj.mesh.num_segments() {
        traj.state_on(k, 0.0, &mut x);
        traj.derivative_on(k, 0.0, &mut d);
        for i in 0..n {
            w[i] = f64::max(w[i], x[i].abs().max(d[i].abs()));
        }
    }
    w
}

/// Per-segment, per-state error quadratures and their relative forms.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCertificate {
    pub mesh: Mesh,
    /// `K × n` absolute quadratures `η_{k,i}`.
    pub eta: DMatrix<f64>,
    pub weights: DVector<f64>,
    /// `ε_{k,i} = η_{k,i} / (w_i + 1)`.
    pub epsilon_rel: DMatrix<f64>,
    pub collocation_points: Vec<Vec<f64>>,
}

impl ErrorCertificate {
    pub fn from_parts(mesh: Mesh, eta: DMatrix<f64>, weights: DVector<f64>, scheme: Scheme) -> Self {
        let mut eps = eta.clone();
        for (i, mut col) in eps.column_iter_mut().enumerate() {
            col /= weights[i] + 1.0;
        }
        let collocation_points = (0..mesh.num_segments())
            .map(|k| {
                let (a, b) = mesh.segment(k);
                scheme.collocation_points(a, b)
            })
            .collect();
        Self { mesh, eta, weights, epsilon_rel: eps, collocation_points }
    }

    pub fn num_segments(&self) -> usize {
        self.eta.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.eta.ncols()
    }

    /// Largest `η_{k,i}` over all segments and states.
    pub fn max_eta(&self) -> f64 {
        self.eta.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_eps_rel(&self) -> f64 {
        self.epsilon_rel.iter().cloned().fold(0.0, f64::max)
    }

    pub fn eta_row(&self, k: usize) -> Vec<f64> {
        self.eta.row(k).iter().cloned().collect()
    }
}

/// Computes the certificate of `traj`, one quadrature per segment.
pub fn certify(traj: &PiecewiseTrajectory, model: &DynamicsModel, s: &QuadSettings) -> Result<ErrorCertificate> {
    let k = traj.mesh.num_segments();
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|seg| quadrature(traj, model, seg, s))
        .collect::<Result<_>>()?;
    let eta = DMatrix::from_fn(k, traj.n, |r, c| rows[r][c]);
    Ok(ErrorCertificate::from_parts(
        traj.mesh.clone(),
        eta,
        scaling_weights(traj),
        traj.scheme,
    ))
}

/// `ε_k = max_i ε_{k,i}` per segment.
pub fn max_relative_error(cert: &ErrorCertificate) -> Vec<f64> {
    cert.epsilon_rel
        .row_iter()
        .map(|r| r.iter().cloned().fold(0.0, f64::max))
        .collect()
}

/// Number of Chebyshev-Lobatto samples used for `L_{p,k}`.
pub const LIPSCHITZ_SAMPLES: usize = 65;
/// Inflation applied to the sampled maximum.
pub const LIPSCHITZ_SAFETY: f64 = 1.05;

/// `L_{p,k}`: sampled max of `‖ẋ̃‖_p` on segment `k`, inflated by 5%.
pub fn segment_poly_lipschitz(traj: &PiecewiseTrajectory, k: usize, p: f64) -> f64 {
    let l = traj.mesh.segment_len(k);
    let mut d = vec![0.0; traj.n];
    let mut worst = 0.0f64;
    for j in 0..LIPSCHITZ_SAMPLES {
        let theta = std::f64::consts::PI * j as f64 / (LIPSCHITZ_SAMPLES - 1) as f64;
        let s = 0.5 * l * (1.0 - theta.cos());
        traj.derivative_on(k, s, &mut d);
        worst = worst.max(p_norm(&d, p));
    }
    worst * LIPSCHITZ_SAFETY
}

/// Largest `|ε_i|` at collocation points, using one-sided polynomials at segment ends.
pub fn collocation_residual(traj: &PiecewiseTrajectory, model: &DynamicsModel) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..traj.mesh.num_segments() {
        let (a, b) = traj.mesh.segment(k);
        for t in traj.scheme.collocation_points(a, b) {
            let e = local_error_segment(traj, model, k, t);
            worst = worst.max(e.amax());
        }
    }
    worst
}

/// True when `t` coincides with a mesh point.
pub fn is_mesh_point(mesh: &Mesh, t: f64) -> bool {
    mesh.points().iter().any(|p| (p - t).abs() <= POINT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin_linear_model;

    fn single_fe(x0: f64, slope: f64) -> PiecewiseTrajectory {
        let mesh = Mesh::new(vec![0.0, 1.0]).unwrap();
        PiecewiseTrajectory::from_coefficients(
            mesh,
            Scheme::ForwardEuler,
            vec![vec![vec![x0, slope]]],
            vec![vec![]],
        )
        .unwrap()
    }

    #[test]
    fn collocation_point_sets() {
        assert_eq!(collocation_points(Scheme::ForwardEuler, 0.0, 1.5), vec![0.0]);
        assert_eq!(collocation_points(Scheme::HermiteSimpson, 0.0, 1.5), vec![0.0, 0.75, 1.5]);
        assert_eq!(collocation_points(Scheme::Trapezoidal, 0.0, 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn fe_eval() {
        let tr = single_fe(1.0, 2.0);
        assert_eq!(tr.eval_state(0.5).unwrap()[0], 2.0);
        assert_eq!(tr.eval_state_derivative(0.3).unwrap()[0], 2.0);
        assert!(tr.eval_state(1.5).is_err());
        let c = single_fe(3.0, 0.0);
        assert_eq!(c.eval_state_derivative(0.7).unwrap()[0], 0.0);
    }

    #[test]
    fn degree_checked() {
        let mesh = Mesh::new(vec![0.0, 1.0]).unwrap();
        let r = PiecewiseTrajectory::from_coefficients(
            mesh,
            Scheme::ForwardEuler,
            vec![vec![vec![1.0, 2.0, 3.0]]],
            vec![vec![]],
        );
        assert!(r.is_err());
    }

    #[test]
    fn fe_linear_local_error_closed_form() {
        // one FE segment from x_k: ε(τ_k + s) = −A f(x_k) s
        let model = builtin_linear_model(f64::INFINITY);
        let mesh = Mesh::new(vec![0.0, 1.5]).unwrap();
        let xk = vec![10.0, 10.0];
        let fk = model.eval(0.0, &xk, &[]).unwrap();
        let x1: Vec<f64> = (0..2).map(|i| xk[i] + 1.5 * fk[i]).collect();
        let tr = PiecewiseTrajectory::from_nodes(mesh, Scheme::ForwardEuler, &model, &[xk, x1], &[], &[]).unwrap();
        let s = 0.9;
        let e = local_error(&tr, &model, s).unwrap();
        let af = model.eval(0.0, fk.as_slice(), &[]).unwrap();
        assert!((e[0] + af[0] * s).abs() < 1e-13);
        assert!((e[1] + af[1] * s).abs() < 1e-13);
        // η_i = |A f|_i ℓ²/2
        let eta = quadrature(&tr, &model, 0, &QuadSettings::default()).unwrap();
        assert!((eta[0] - af[0].abs() * 1.125).abs() < 1e-10);
    }

    #[test]
    fn certificate_identity() {
        let mesh = Mesh::uniform(0.0, 2.0, 2).unwrap();
        let eta = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let w = DVector::from_vec(vec![0.0, 3.0]);
        let c = ErrorCertificate::from_parts(mesh, eta.clone(), w, Scheme::Trapezoidal);
        assert_eq!(c.epsilon_rel[(0, 0)], 0.1);
        assert_eq!(c.epsilon_rel[(1, 1)] * 4.0, 0.4);
        assert_eq!(max_relative_error(&c), vec![0.1, 0.3]);
    }

    #[test]
    fn weights_of_constant() {
        let tr = single_fe(-2.5, 0.0);
        assert_eq!(scaling_weights(&tr)[0], 2.5);
        let z = single_fe(0.0, 0.0);
        assert_eq!(scaling_weights(&z)[0], 0.0);
    }

    #[test]
    fn lipschitz_of_linear_segment() {
        let tr = single_fe(1.0, -3.0);
        assert!((segment_poly_lipschitz(&tr, 0, 2.0) - 3.15).abs() < 1e-12);
        assert_eq!(segment_poly_lipschitz(&single_fe(1.0, 0.0), 0, 2.0), 0.0);
    }
}
