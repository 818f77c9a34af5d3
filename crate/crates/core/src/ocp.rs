//! Optimal control problems in Bolza form.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dynamics::DynamicsModel;
use crate::error::{invalid, Result};
use crate::tightening::BoxSet;

/// Integrand `L(t, x, u)` of the Lagrange term.
pub trait StageCost: Send + Sync {
    fn value(&self, t: f64, x: &[f64], u: &[f64]) -> f64;

    /// Gradient w.r.t. `(x, u)`, stacked.
    fn gradient(&self, t: f64, x: &[f64], u: &[f64], g: &mut [f64]) {
        fd_gradient(|z| self.value(t, &z[..x.len()], &z[x.len()..]), &stack(x, u), g)
    }

    /// Hessian w.r.t. stacked `(x, u)`.
    fn hessian(&self, t: f64, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        fd_hessian(
            |z, g| self.gradient(t, &z[..n], &z[n..], g),
            &stack(x, u),
        )
    }
}

/// Mayer term `Φ(x(t0), x(tf))`.
pub trait BoundaryCost: Send + Sync {
    fn value(&self, x0: &[f64], xf: &[f64]) -> f64;

    fn gradient(&self, x0: &[f64], xf: &[f64], g: &mut [f64]) {
        fd_gradient(|z| self.value(&z[..x0.len()], &z[x0.len()..]), &stack(x0, xf), g)
    }

    fn hessian(&self, x0: &[f64], xf: &[f64]) -> DMatrix<f64> {
        let n = x0.len();
        fd_hessian(|z, g| self.gradient(&z[..n], &z[n..], g), &stack(x0, xf))
    }
}

/// Equality constraints `φ(x(t0), x(tf)) = 0`.
pub trait BoundaryConstraint: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x0: &[f64], xf: &[f64], out: &mut [f64]);

    /// `dim × 2n` Jacobian w.r.t. stacked `(x0, xf)`.
    fn jacobian(&self, x0: &[f64], xf: &[f64]) -> DMatrix<f64> {
        let n = x0.len();
        let z = stack(x0, xf);
        let q = self.dim();
        let mut jac = DMatrix::zeros(q, 2 * n);
        let (mut p, mut m) = (vec![0.0; q], vec![0.0; q]);
        let mut zz = z.clone();
        for j in 0..2 * n {
            let h = 1e-6 * (1.0 + z[j].abs());
            zz[j] = z[j] + h;
            self.value(&zz[..n], &zz[n..], &mut p);
            zz[j] = z[j] - h;
            self.value(&zz[..n], &zz[n..], &mut m);
            zz[j] = z[j];
            for i in 0..q {
                jac[(i, j)] = (p[i] - m[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// Hessian of `μᵀφ` w.r.t. stacked `(x0, xf)`.
    fn weighted_hessian(&self, x0: &[f64], xf: &[f64], mu: &[f64]) -> DMatrix<f64> {
        let n = x0.len();
        fd_hessian(
            |z, g| {
                let j = self.jacobian(&z[..n], &z[n..]);
                let v = j.transpose() * nalgebra::DVector::from_column_slice(mu);
                g.copy_from_slice(v.as_slice());
            },
            &stack(x0, xf),
        )
    }
}

fn stack(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut z = a.to_vec();
    z.extend_from_slice(b);
    z
}

fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], g: &mut [f64]) {
    let mut zz = z.to_vec();
    for j in 0..z.len() {
        let h = 1e-6 * (1.0 + z[j].abs());
        zz[j] = z[j] + h;
        let fp = f(&zz);
        zz[j] = z[j] - h;
        let fm = f(&zz);
        zz[j] = z[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
}

/// Symmetrized central-difference Jacobian of a gradient map.
pub(crate) fn fd_hessian<G: Fn(&[f64], &mut [f64])>(grad: G, z: &[f64]) -> DMatrix<f64> {
    let d = z.len();
    let mut hess = DMatrix::zeros(d, d);
    let (mut gp, mut gm) = (vec![0.0; d], vec![0.0; d]);
    let mut zz = z.to_vec();
    for j in 0..d {
        let h = 1e-5 * (1.0 + z[j].abs());
        zz[j] = z[j] + h;
        grad(&zz, &mut gp);
        zz[j] = z[j] - h;
        grad(&zz, &mut gm);
        zz[j] = z[j];
        for i in 0..d {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    (&hess + hess.transpose()) * 0.5
}

/// `L = Σ_j weight·u_j²`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticInputCost {
    pub weight: f64,
}

impl StageCost for QuadraticInputCost {
    fn value(&self, _t: f64, _x: &[f64], u: &[f64]) -> f64 {
        self.weight * u.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, _t: f64, x: &[f64], u: &[f64], g: &mut [f64]) {
        let n = x.len();
        g[..n].iter_mut().for_each(|v| *v = 0.0);
        for (j, uj) in u.iter().enumerate() {
            g[n + j] = 2.0 * self.weight * uj;
        }
    }

    fn hessian(&self, _t: f64, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut h = DMatrix::zeros(n + u.len(), n + u.len());
        for j in 0..u.len() {
            h[(n + j, n + j)] = 2.0 * self.weight;
        }
        h
    }
}

/// `L = Σ_i q_i x_i² + Σ_j r_j u_j²`.
#[derive(Debug, Clone)]
pub struct DiagonalQuadraticCost {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

impl StageCost for DiagonalQuadraticCost {
    fn value(&self, _t: f64, x: &[f64], u: &[f64]) -> f64 {
        let a: f64 = x.iter().zip(&self.q).map(|(v, w)| w * v * v).sum();
        let b: f64 = u.iter().zip(&self.r).map(|(v, w)| w * v * v).sum();
        a + b
    }

    fn gradient(&self, _t: f64, x: &[f64], u: &[f64], g: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            g[i] = 2.0 * self.q[i] * x[i];
        }
        for j in 0..u.len() {
            g[n + j] = 2.0 * self.r[j] * u[j];
        }
    }

    fn hessian(&self, _t: f64, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut h = DMatrix::zeros(n + u.len(), n + u.len());
        for i in 0..n {
            h[(i, i)] = 2.0 * self.q[i];
        }
        for j in 0..u.len() {
            h[(n + j, n + j)] = 2.0 * self.r[j];
        }
        h
    }
}

/// Continuous-time OCP on `[t0, tf]` with box path constraints.
#[derive(Clone)]
pub struct BolzaOcp {
    pub model: DynamicsModel,
    pub t0: f64,
    pub tf: f64,
    pub stage_cost: Option<Arc<dyn StageCost>>,
    pub boundary_cost: Option<Arc<dyn BoundaryCost>>,
    pub state_box: BoxSet,
    pub input_box: BoxSet,
    pub boundary_constraints: Option<Arc<dyn BoundaryConstraint>>,
    /// Fixed terminal state, enforced through variable bounds.
    pub terminal_state: Option<Vec<f64>>,
    /// Measured state `x̂(t0)`.
    pub initial_state: Vec<f64>,
}

impl std::fmt::Debug for BolzaOcp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BolzaOcp")
            .field("model", &self.model.name)
            .field("horizon", &(self.t0, self.tf))
            .field("state_box", &self.state_box)
            .field("input_box", &self.input_box)
            .field("terminal_state", &self.terminal_state)
            .field("initial_state", &self.initial_state)
            .finish()
    }
}

impl BolzaOcp {
    /// Unconstrained, cost-free problem: only the dynamics and `x(t0)` remain.
    pub fn feasibility(model: DynamicsModel, t0: f64, tf: f64, initial_state: Vec<f64>) -> Result<Self> {
        let n = model.state_dim;
        let m = model.input_dim;
        let ocp = Self {
            model,
            t0,
            tf,
            stage_cost: None,
            boundary_cost: None,
            state_box: BoxSet::unbounded(n),
            input_box: BoxSet::unbounded(m),
            boundary_constraints: None,
            terminal_state: None,
            initial_state,
        };
        ocp.validate()?;
        Ok(ocp)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.model.state_dim, self.model.input_dim);
        if !(self.tf > self.t0) {
            return Err(invalid("OCP horizon must satisfy tf > t0"));
        }
        if self.initial_state.len() != n {
            return Err(invalid("initial state dimension mismatch"));
        }
        if self.state_box.dim() != n || self.input_box.dim() != m {
            return Err(invalid("constraint box dimension mismatch"));
        }
        if self.state_box.is_empty() || self.input_box.is_empty() {
            return Err(invalid("constraint boxes must be non-empty"));
        }
        if let Some(xf) = &self.terminal_state {
            if xf.len() != n {
                return Err(invalid("terminal state dimension mismatch"));
            }
        }
        Ok(())
    }

    /// Same problem re-anchored at a new measured state and start time.
    pub fn shifted(&self, t0: f64, initial_state: Vec<f64>) -> Self {
        let len = self.tf - self.t0;
        Self { t0, tf: t0 + len, initial_state, ..self.clone() }
    }
}
