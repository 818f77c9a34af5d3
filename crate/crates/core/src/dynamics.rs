//! Plant and prediction dynamics `ẋ = f(t, x, u)` plus the two built-in systems.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::norm::{induced_matrix_norm, p_norm};

/// Right-hand side of an ODE.
pub trait Dynamics: Send + Sync {
    /// Writes `f(t, x, u)` into `dx`.
    fn eval(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]);

    /// Analytic Jacobians `(∂f/∂x, ∂f/∂u)`. `None` selects central differences.
    fn jacobian(&self, _t: f64, _x: &[f64], _u: &[f64]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }
}

/// Bounds on the exogenous signals: `‖v(t)‖ ≤ v_hat`, `‖θ(t)‖ ≤ theta_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBounds {
    pub v_hat: f64,
    pub theta_hat: f64,
}

impl NoiseBounds {
    pub fn new(v_hat: f64, theta_hat: f64) -> Result<Self> {
        if !(v_hat >= 0.0 && v_hat.is_finite() && theta_hat >= 0.0 && theta_hat.is_finite()) {
            return Err(invalid("noise bounds must be finite and non-negative"));
        }
        Ok(Self { v_hat, theta_hat })
    }

    pub fn zero() -> Self {
        Self { v_hat: 0.0, theta_hat: 0.0 }
    }
}

/// Region in which the stored constants are claimed to hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingBox {
    pub state: Vec<(f64, f64)>,
    pub input: Vec<(f64, f64)>,
}

impl OperatingBox {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let draw = |b: &[(f64, f64)], rng: &mut R| -> Vec<f64> {
            b.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
        };
        let x = draw(&self.state, rng);
        let u = draw(&self.input, rng);
        (x, u)
    }
}

/// A dynamics model with its Lipschitz data.
#[derive(Clone)]
pub struct DynamicsModel {
    pub name: String,
    pub state_dim: usize,
    pub input_dim: usize,
    /// `L_x`, valid in the `lipschitz_p`-norm on `operating_box`.
    pub lipschitz_x: f64,
    /// `L_f ≥ ‖f‖` on `operating_box`.
    pub f_bound: f64,
    pub lipschitz_p: f64,
    pub operating_box: OperatingBox,
    /// Default exogenous bounds; run configs may override them.
    pub noise: NoiseBounds,
    rhs: Arc<dyn Dynamics>,
}

impl fmt::Debug for DynamicsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicsModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("lipschitz_x", &self.lipschitz_x)
            .field("f_bound", &self.f_bound)
            .finish()
    }
}

impl DynamicsModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        lipschitz_x: f64,
        f_bound: f64,
        lipschitz_p: f64,
        operating_box: OperatingBox,
        noise: NoiseBounds,
        rhs: Arc<dyn Dynamics>,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(invalid("state dimension must be positive"));
        }
        if !(lipschitz_x >= 0.0 && f_bound >= 0.0) {
            return Err(invalid("Lipschitz constants must be non-negative"));
        }
        if operating_box.state.len() != state_dim || operating_box.input.len() != input_dim {
            return Err(invalid("operating box dimension mismatch"));
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            input_dim,
            lipschitz_x,
            f_bound,
            lipschitz_p,
            operating_box,
            noise,
            rhs,
        })
    }

    pub fn is_autonomous(&self) -> bool {
        self.input_dim == 0
    }

    /// Checked evaluation of the nominal `f`.
    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.state_dim {
            return Err(invalid(format!(
                "state has dimension {}, model {} expects {}",
                x.len(),
                self.name,
                self.state_dim
            )));
        }
        if u.len() != self.input_dim {
            return Err(invalid(format!(
                "input has dimension {}, model {} expects {}",
                u.len(),
                self.name,
                self.input_dim
            )));
        }
        let mut dx = DVector::zeros(self.state_dim);
        self.rhs.eval(t, x, u, dx.as_mut_slice());
        Ok(dx)
    }

    /// Unchecked evaluation for inner loops.
    #[inline]
    pub fn eval_into(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        self.rhs.eval(t, x, u, dx)
    }

    /// `(∂f/∂x, ∂f/∂u)`, analytic when available.
    pub fn jacobian(&self, t: f64, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        if let Some(j) = self.rhs.jacobian(t, x, u) {
            return j;
        }
        self.fd_jacobian(t, x, u)
    }

    /// Central differences with step `1e-6·(1+|z_j|)`.
    pub fn fd_jacobian(&self, t: f64, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, m) = (self.state_dim, self.input_dim);
        let mut fx = DMatrix::zeros(n, n);
        let mut fu = DMatrix::zeros(n, m);
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        let mut xp = x.to_vec();
        for j in 0..n {
            let h = 1e-6 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            self.rhs.eval(t, &xp, u, &mut fp);
            xp[j] = x[j] - h;
            self.rhs.eval(t, &xp, u, &mut fm);
            xp[j] = x[j];
            for i in 0..n {
                fx[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let mut up = u.to_vec();
        for j in 0..m {
            let h = 1e-6 * (1.0 + u[j].abs());
            up[j] = u[j] + h;
            self.rhs.eval(t, x, &up, &mut fp);
            up[j] = u[j] - h;
            self.rhs.eval(t, x, &up, &mut fm);
            up[j] = u[j];
            for i in 0..n {
                fu[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        (fx, fu)
    }

    /// Largest sampled ratio `‖f(x1,u) − f(x2,u)‖ / ‖x1 − x2‖` over `samples`
    /// random pairs in the operating box, measured in the model's norm.
    pub fn sampled_lipschitz<R: Rng>(&self, samples: usize, rng: &mut R) -> f64 {
        let n = self.state_dim;
        let (mut f1, mut f2) = (vec![0.0; n], vec![0.0; n]);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let (x1, u) = self.operating_box.sample(rng);
            let (x2, _) = self.operating_box.sample(rng);
            self.rhs.eval(0.0, &x1, &u, &mut f1);
            self.rhs.eval(0.0, &x2, &u, &mut f2);
            let df: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
            let dx: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
            let den = p_norm(&dx, self.lipschitz_p);
            if den > 1e-12 {
                worst = worst.max(p_norm(&df, self.lipschitz_p) / den);
            }
        }
        worst
    }

    /// Largest sampled `‖f(x,u)‖` in the operating box.
    pub fn sampled_f_bound<R: Rng>(&self, samples: usize, rng: &mut R) -> f64 {
        let mut f = vec![0.0; self.state_dim];
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let (x, u) = self.operating_box.sample(rng);
            self.rhs.eval(0.0, &x, &u, &mut f);
            worst = worst.max(p_norm(&f, self.lipschitz_p));
        }
        worst
    }
}

/// `ẋ = A x`. The constant disturbance `E ŵ` is kept out of the nominal model.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub e: DVector<f64>,
    pub w_hat: f64,
}

impl LinearSystem {
    pub fn paper_example() -> Self {
        Self {
            a: DMatrix::from_row_slice(2, 2, &[0.05, 0.5, 0.0, -0.5]),
            e: DVector::from_vec(vec![1.0, 1.0]),
            w_hat: 0.01,
        }
    }

    /// Constant disturbance vector `E ŵ`.
    pub fn disturbance(&self) -> DVector<f64> {
        &self.e * self.w_hat
    }
}

impl Dynamics for LinearSystem {
    fn eval(&self, _t: f64, x: &[f64], _u: &[f64], dx: &mut [f64]) {
        let n = self.a.nrows();
        for i in 0..n {
            dx[i] = (0..n).map(|j| self.a[(i, j)] * x[j]).sum();
        }
    }

    fn jacobian(&self, _t: f64, _x: &[f64], _u: &[f64]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((self.a.clone(), DMatrix::zeros(self.a.nrows(), 0)))
    }
}

/// Initial state of the linear example.
pub const LINEAR_X0: [f64; 2] = [10.0, 10.0];

/// Autonomous 2-state LTI example; `L_x`, `L_f` and `v̂` are expressed in the `p`-norm.
pub fn builtin_linear_model(p: f64) -> DynamicsModel {
    let sys = LinearSystem::paper_example();
    let lx = induced_matrix_norm(&sys.a, p);
    let radius = 12.0;
    let v_hat = p_norm(sys.disturbance().as_slice(), p);
    DynamicsModel {
        name: "linear2d".into(),
        state_dim: 2,
        input_dim: 0,
        lipschitz_x: lx,
        f_bound: lx * radius * p_norm(&[1.0, 1.0], p),
        lipschitz_p: p,
        operating_box: OperatingBox {
            state: vec![(-radius, radius); 2],
            input: vec![],
        },
        noise: NoiseBounds { v_hat, theta_hat: 0.0 },
        rhs: Arc::new(sys),
    }
}

/// Planar two-link arm, state `[ω_α, ω_β, θ, β]`, input `[u_1, u_2]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoLinkArm;

impl TwoLinkArm {
    fn parts(x: &[f64], u: &[f64]) -> (f64, f64, f64, f64, f64) {
        let (wa, wb, th) = (x[0], x[1], x[2]);
        let (s, c) = th.sin_cos();
        let d = 31.0 / 36.0 + 2.25 * s * s;
        let n1 = 2.25 * s * c * wa * wa + 2.0 * wb * wb + 4.0 / 3.0 * u[0]
            - 4.0 / 3.0 * u[1]
            - 1.5 * c * u[1];
        let n2 = 2.25 * s * c * wb * wb + 3.5 * wa * wa - 7.0 / 3.0 * u[1]
            + 1.5 * c * (u[0] - u[1]);
        (s, c, d, n1, n2)
    }
}

impl Dynamics for TwoLinkArm {
    fn eval(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let (_, _, d, n1, n2) = Self::parts(x, u);
        dx[0] = n1 / d;
        dx[1] = n2 / d;
        dx[2] = x[0] - x[1];
        dx[3] = x[1];
    }

    fn jacobian(&self, _t: f64, x: &[f64], u: &[f64]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let (wa, wb) = (x[0], x[1]);
        let (s, c, d, n1, n2) = Self::parts(x, u);
        let dd = 4.5 * s * c;
        let c2 = c * c - s * s;
        let mut fx = DMatrix::zeros(4, 4);
        let mut fu = DMatrix::zeros(4, 2);
        fx[(0, 0)] = 4.5 * s * c * wa / d;
        fx[(0, 1)] = 4.0 * wb / d;
        let dn1 = 2.25 * c2 * wa * wa + 1.5 * s * u[1];
        fx[(0, 2)] = (dn1 * d - n1 * dd) / (d * d);
        fx[(1, 0)] = 7.0 * wa / d;
        fx[(1, 1)] = 4.5 * s * c * wb / d;
        let dn2 = 2.25 * c2 * wb * wb - 1.5 * s * (u[0] - u[1]);
        fx[(1, 2)] = (dn2 * d - n2 * dd) / (d * d);
        fx[(2, 0)] = 1.0;
        fx[(2, 1)] = -1.0;
        fx[(3, 1)] = 1.0;
        fu[(0, 0)] = 4.0 / 3.0 / d;
        fu[(0, 1)] = (-4.0 / 3.0 - 1.5 * c) / d;
        fu[(1, 0)] = 1.5 * c / d;
        fu[(1, 1)] = (-7.0 / 3.0 - 1.5 * c) / d;
        Some((fx, fu))
    }
}

/// The stored arm Lipschitz constant.
pub const ARM_LIPSCHITZ: f64 = 4.5309;

/// Two-link arm with `L_x = 4.5309` in the 1-norm.
///
/// The constant only holds on a region with small joint rates and inputs:
/// the operating box is `|ω| ≤ 0.4`, `|θ|, |β| ≤ π`, `|u| ≤ 0.3`.
pub fn builtin_two_link_arm() -> DynamicsModel {
    DynamicsModel {
        name: "two_link_arm".into(),
        state_dim: 4,
        input_dim: 2,
        lipschitz_x: ARM_LIPSCHITZ,
        // 1-norm bound of f over the operating box
        f_bound: 6.0,
        lipschitz_p: 1.0,
        operating_box: OperatingBox {
            state: vec![
                (-0.4, 0.4),
                (-0.4, 0.4),
                (-std::f64::consts::PI, std::f64::consts::PI),
                (-std::f64::consts::PI, std::f64::consts::PI),
            ],
            input: vec![(-0.3, 0.3); 2],
        },
        noise: NoiseBounds { v_hat: 5e-3, theta_hat: 0.0 },
        rhs: Arc::new(TwoLinkArm),
    }
}

type ModelFactory = Arc<dyn Fn(f64) -> DynamicsModel + Send + Sync>;

/// Name → model lookup. Factories receive the configured norm exponent.
#[derive(Clone)]
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("linear2d", builtin_linear_model);
        r.register("two_link_arm", |_| builtin_two_link_arm());
        r
    }
}

impl ModelRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(f64) -> DynamicsModel + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn build(&self, name: &str, p: f64) -> Result<DynamicsModel> {
        self.factories
            .get(name)
            .map(|f| f(p))
            .ok_or_else(|| invalid(format!("unknown model '{name}'")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}
