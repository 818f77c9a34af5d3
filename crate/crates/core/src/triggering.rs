//! Event condition and inter-update-time bounds: the offline minimum, the
//! collocation-based bound and the quadrature-error bound.

use serde::{Deserialize, Serialize};

use crate::collocation::{segment_poly_lipschitz, ErrorCertificate, PiecewiseTrajectory};
use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::{integrate, QuadSettings};
use crate::tightening::BoxSet;

pub use crate::norm::{induced_weight_norm, weighted_norm, NormConfig};

/// Bisection width for bound crossings, in seconds.
pub const CROSSING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    /// Threshold `Δ` on `‖δ‖_M`.
    pub delta: f64,
    pub norm: NormConfig,
    /// Cap `T_op` on every reported time.
    pub horizon: f64,
}

impl TriggerConfig {
    pub fn new(delta: f64, norm: NormConfig, horizon: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(invalid("delta must be positive"));
        }
        if !(horizon > 0.0) {
            return Err(invalid("horizon must be positive"));
        }
        Ok(Self { delta, norm, horizon })
    }
}

/// Model-side constants entering every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBounds {
    pub lipschitz_x: f64,
    pub v_hat: f64,
    pub theta_hat: f64,
}

/// `F = Δ − ‖x̃(t) − y‖_M`; fires when `F ≤ 0`. Returns `(fired, margin)`.
pub fn event_condition(pred: &PiecewiseTrajectory, measured: &[f64], t: f64, cfg: &TriggerConfig) -> Result<(bool, f64)> {
    if measured.len() != pred.state_dim() {
        return Err(invalid("measured state dimension mismatch"));
    }
    let x = pred.eval_state(t)?;
    let d: Vec<f64> = x.iter().zip(measured).map(|(a, b)| a - b).collect();
    let margin = cfg.delta - cfg.norm.norm(&d);
    Ok((margin <= 0.0, margin))
}

/// Error tolerance the minimum IUT is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceBound {
    Relative { eps_hat: Vec<f64>, w_hat: Vec<f64> },
    Absolute { eta_hat: Vec<f64> },
}

impl ToleranceBound {
    /// `ξ̂ = (ŵ+1)ε̂` or `η̂`.
    pub fn xi_hat(&self) -> Vec<f64> {
        match self {
            ToleranceBound::Relative { eps_hat, w_hat } => {
                eps_hat.iter().zip(w_hat).map(|(e, w)| (w + 1.0) * e).collect()
            }
            ToleranceBound::Absolute { eta_hat } => eta_hat.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinIutInputs {
    pub bound: ToleranceBound,
    pub sigma: f64,
    pub h: f64,
    pub model: ModelBounds,
}

/// Guaranteed minimum inter-update time
/// `τ = (Δ − ‖ξ̂‖_M − c·2θ̂) / (‖ξ̂‖_M/(σh) + c(L_x Δ + v̂))`, capped at `T_op`.
pub fn min_iut(inp: &MinIutInputs, cfg: &TriggerConfig) -> Result<f64> {
    let c = cfg.norm.induced_constant();
    let xi = cfg.norm.norm(&inp.bound.xi_hat());
    if cfg.delta.is_infinite() {
        return Ok(cfg.horizon);
    }
    let floor = xi + c * 2.0 * inp.model.theta_hat;
    let num = cfg.delta - floor;
    if !(num > 0.0) {
        return Err(Error::ThresholdTooSmall { min_delta: floor });
    }
    let den = xi / (inp.sigma * inp.h) + c * (inp.model.lipschitz_x * cfg.delta + inp.model.v_hat);
    if den <= 0.0 {
        return Ok(cfg.horizon);
    }
    Ok((num / den).min(cfg.horizon))
}

/// Which certificate entries the quadrature-error bound uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QetMode {
    /// `(w+1)·max_i ε_{k,i}` per segment.
    Relative,
    /// `η_k` per segment.
    Absolute,
}

/// `sup{τ > 0 : (‖Σ_{k∈𝒦_τ} q_k‖_M + c(2θ̂ + v̂τ))·e^{L_x τ} ≤ Δ}` for per-segment vectors `q_k`.
///
/// The left side is increasing in `τ` and jumps up when `τ` crosses into a new
/// segment, so a sweep over segment ends plus bisection inside the first
/// failing segment finds the supremum.
pub fn crossing_time(q: &[Vec<f64>], mesh: &Mesh, model: &ModelBounds, cfg: &TriggerConfig) -> Result<f64> {
    let c = cfg.norm.induced_constant();
    let noise0 = c * 2.0 * model.theta_hat;
    if noise0 >= cfg.delta {
        return Err(Error::ThresholdTooSmall { min_delta: noise0 });
    }
    if q.len() != mesh.num_segments() {
        return Err(invalid("need one error vector per segment"));
    }
    let n = cfg.norm.dim();
    let bound = |sum: f64, tau: f64| (sum + c * (2.0 * model.theta_hat + model.v_hat * tau)) * (model.lipschitz_x * tau).exp();
    let t0 = mesh.t0();
    let mut acc = vec![0.0; n];
    for (j, qj) in q.iter().enumerate() {
        for i in 0..n {
            acc[i] += qj[i];
        }
        let s = cfg.norm.norm(&acc);
        let (a, b) = mesh.segment(j);
        let (lo, hi) = (a - t0, b - t0);
        if lo >= cfg.horizon {
            return Ok(cfg.horizon);
        }
        if bound(s, lo) > cfg.delta {
            return Ok(lo.min(cfg.horizon));
        }
        if bound(s, hi) <= cfg.delta {
            continue;
        }
        let (mut l, mut r) = (lo, hi);
        while r - l > CROSSING_TOL {
            let m = 0.5 * (l + r);
            if bound(s, m) <= cfg.delta {
                l = m;
            } else {
                r = m;
            }
        }
        return Ok(l.min(cfg.horizon));
    }
    Ok((mesh.tf() - t0).min(cfg.horizon))
}

/// Quadrature-error triggering time from a realized certificate.
pub fn qet_time(cert: &ErrorCertificate, model: &ModelBounds, cfg: &TriggerConfig, mode: QetMode) -> Result<f64> {
    let q: Vec<Vec<f64>> = match mode {
        QetMode::Absolute => (0..cert.num_segments()).map(|k| cert.eta_row(k)).collect(),
        QetMode::Relative => (0..cert.num_segments())
            .map(|k| {
                let ek = cert.epsilon_rel.row(k).iter().cloned().fold(0.0, f64::max);
                cert.weights.iter().map(|w| (w + 1.0) * ek).collect()
            })
            .collect(),
    };
    crossing_time(&q, &cert.mesh, model, cfg)
}

/// Per-segment collocation-bound integrals
/// `∫_{T_k} L_{p,k}|τ − t_col| + L_x|x̃_i(t_col) − x̃_i(τ)| dτ`, using the nearest collocation point.
pub fn ct_integrals(traj: &PiecewiseTrajectory, lipschitz_x: f64, p: f64, quad: &QuadSettings) -> Result<Vec<Vec<f64>>> {
    let mesh = traj.mesh();
    let n = traj.state_dim();
    (0..mesh.num_segments())
        .map(|k| {
            let (a, b) = mesh.segment(k);
            let l = b - a;
            let cols = traj.scheme().collocation_points(0.0, l);
            let lpk = segment_poly_lipschitz(traj, k, p);
            let mut xc: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
            for &s in &cols {
                let mut v = vec![0.0; n];
                traj.state_on(k, s, &mut v);
                xc.push(v);
            }
            let mut breaks = cols.clone();
            breaks.extend(cols.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            let mut x = vec![0.0; n];
            integrate(
                |s, out| {
                    let (ci, _) = cols
                        .iter()
                        .enumerate()
                        .map(|(i, c)| (i, (s - c).abs()))
                        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                    traj.state_on(k, s, &mut x);
                    let dt = (s - cols[ci]).abs();
                    for i in 0..n {
                        out[i] = lpk * dt + lipschitz_x * (xc[ci][i] - x[i]).abs();
                    }
                },
                n,
                0.0,
                l,
                &breaks,
                quad,
            )
        })
        .collect()
}

/// Which collocation-bound variant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtVariant {
    /// Absolute integrals; a valid bound on `∫|ε|`.
    Absolute,
    /// Integrals divided by `(w+1)`, as the bound is sometimes written.
    Scaled,
}

/// Collocation-triggering time.
pub fn ct_time(
    traj: &PiecewiseTrajectory,
    weights: &[f64],
    model: &ModelBounds,
    cfg: &TriggerConfig,
    variant: CtVariant,
    quad: &QuadSettings,
) -> Result<f64> {
    let mut q = ct_integrals(traj, model.lipschitz_x, cfg.norm.p, quad)?;
    if variant == CtVariant::Scaled {
        for row in &mut q {
            for (v, w) in row.iter_mut().zip(weights) {
                *v /= w + 1.0;
            }
        }
    }
    crossing_time(&q, traj.mesh(), model, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBoundMode {
    /// From state and rate boxes.
    RateBox,
    /// From the state box and `L_x`, for an equilibrium at the origin.
    Lipschitz,
}

/// Upper bound `ŵ` on the scaling weights.
pub fn scaling_weight_bound(
    state_box: &BoxSet,
    rate_box: Option<&BoxSet>,
    lipschitz_x: f64,
    mode: WeightBoundMode,
) -> Result<Vec<f64>> {
    let n = state_box.dim();
    (0..n)
        .map(|i| {
            let (lo, hi) = (state_box.lower[i], state_box.upper[i]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::UnboundedWeight { axis: i });
            }
            let base = lo.abs().max(hi.abs());
            match mode {
                WeightBoundMode::RateBox => {
                    let r = rate_box.ok_or_else(|| invalid("rate box required"))?;
                    let (rl, rh) = (r.lower[i], r.upper[i]);
                    if !rl.is_finite() || !rh.is_finite() {
                        return Err(Error::UnboundedWeight { axis: i });
                    }
                    Ok(base.max(rl.abs()).max(rh.abs()))
                }
                WeightBoundMode::Lipschitz => Ok(base.max(lipschitz_x * lo.abs()).max(lipschitz_x * hi.abs())),
            }
        })
        .collect()
}

/// All three bounds for one prediction, with their inputs echoed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerReport {
    pub tau_min: Option<f64>,
    pub tau_ct: f64,
    pub tau_ct_scaled: f64,
    pub tau_qet: f64,
    pub qet_mode: QetMode,
    pub xi_hat_norm: f64,
    pub first_segment_eta_norm: f64,
    pub lipschitz_x: f64,
    pub v_hat: f64,
    pub theta_hat: f64,
    pub sigma: f64,
    pub h: f64,
    pub weights: Vec<f64>,
}

/// Computes every bound for `traj` and its certificate.
///
/// `tau_min` is `None` when the threshold is below the admissible minimum.
pub fn trigger_report(
    traj: &PiecewiseTrajectory,
    cert: &ErrorCertificate,
    bound: &ToleranceBound,
    model: &ModelBounds,
    cfg: &TriggerConfig,
    qet_mode: QetMode,
    quad: &QuadSettings,
) -> Result<TriggerReport> {
    let mp = cert.mesh.parameters();
    let tau_min = match min_iut(&MinIutInputs { bound: bound.clone(), sigma: mp.sigma, h: mp.h, model: *model }, cfg) {
        Ok(t) => Some(t),
        Err(Error::ThresholdTooSmall { .. }) => None,
        Err(e) => return Err(e),
    };
    let weights: Vec<f64> = cert.weights.iter().cloned().collect();
    Ok(TriggerReport {
        tau_min,
        tau_ct: ct_time(traj, &weights, model, cfg, CtVariant::Absolute, quad)?,
        tau_ct_scaled: ct_time(traj, &weights, model, cfg, CtVariant::Scaled, quad)?,
        tau_qet: qet_time(cert, model, cfg, qet_mode)?,
        qet_mode,
        xi_hat_norm: cfg.norm.norm(&bound.xi_hat()),
        first_segment_eta_norm: cfg.norm.norm(&cert.eta_row(0)),
        lipschitz_x: model.lipschitz_x,
        v_hat: model.v_hat,
        theta_hat: model.theta_hat,
        sigma: mp.sigma,
        h: mp.h,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::Scheme;
    use nalgebra::{DMatrix, DVector};

    fn inf_cfg(delta: f64, horizon: f64, n: usize) -> TriggerConfig {
        TriggerConfig::new(delta, NormConfig::identity(f64::INFINITY, n), horizon).unwrap()
    }

    #[test]
    fn min_iut_without_errors_is_inverse_lipschitz() {
        let inp = MinIutInputs {
            bound: ToleranceBound::Absolute { eta_hat: vec![0.0, 0.0] },
            sigma: 1.0,
            h: 1.0,
            model: ModelBounds { lipschitz_x: 0.5, v_hat: 0.0, theta_hat: 0.0 },
        };
        assert!((min_iut(&inp, &inf_cfg(1.0, 10.0, 2)).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(min_iut(&inp, &inf_cfg(1.0, 1.5, 2)).unwrap(), 1.5);
    }

    #[test]
    fn min_iut_at_threshold_errors() {
        let inp = MinIutInputs {
            bound: ToleranceBound::Absolute { eta_hat: vec![0.5] },
            sigma: 1.0,
            h: 1.0,
            model: ModelBounds { lipschitz_x: 0.5, v_hat: 0.0, theta_hat: 0.0 },
        };
        match min_iut(&inp, &inf_cfg(0.5, 10.0, 1)) {
            Err(Error::ThresholdTooSmall { min_delta }) => assert_eq!(min_delta, 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn qet_zero_certificate_hits_cap() {
        let mesh = Mesh::uniform(0.0, 6.0, 4).unwrap();
        let cert = ErrorCertificate::from_parts(mesh, DMatrix::zeros(4, 2), DVector::zeros(2), Scheme::ForwardEuler);
        let mb = ModelBounds { lipschitz_x: 0.55, v_hat: 0.0, theta_hat: 0.0 };
        assert_eq!(qet_time(&cert, &mb, &inf_cfg(1.0, 6.0, 2), QetMode::Absolute).unwrap(), 6.0);
        let noisy = ModelBounds { theta_hat: 0.6, ..mb };
        assert!(matches!(
            qet_time(&cert, &noisy, &inf_cfg(1.0, 6.0, 2), QetMode::Absolute),
            Err(Error::ThresholdTooSmall { .. })
        ));
    }

    #[test]
    fn qet_jump_at_segment_boundary() {
        // first segment alone fits, adding the second exceeds Δ immediately
        let mesh = Mesh::uniform(0.0, 2.0, 2).unwrap();
        let cert = ErrorCertificate::from_parts(
            mesh,
            DMatrix::from_row_slice(2, 1, &[0.1, 1.0]),
            DVector::zeros(1),
            Scheme::Trapezoidal,
        );
        let mb = ModelBounds { lipschitz_x: 0.0, v_hat: 0.0, theta_hat: 0.0 };
        assert_eq!(qet_time(&cert, &mb, &inf_cfg(0.5, 2.0, 1), QetMode::Absolute).unwrap(), 1.0);
    }

    #[test]
    fn event_condition_margin() {
        let mesh = Mesh::new(vec![0.0, 1.0]).unwrap();
        let tr = PiecewiseTrajectory::from_coefficients(mesh, Scheme::ForwardEuler, vec![vec![vec![1.0, 1.0]]], vec![vec![]])
            .unwrap();
        let cfg = inf_cfg(0.5, 1.0, 1);
        assert_eq!(event_condition(&tr, &[1.0], 0.0, &cfg).unwrap(), (false, 0.5));
        assert_eq!(event_condition(&tr, &[1.0], 0.5, &cfg).unwrap(), (true, 0.0));
    }

    #[test]
    fn weight_bounds() {
        let b = BoxSet::new(vec![-1.0], vec![1.0]).unwrap();
        let r = BoxSet::new(vec![-2.0], vec![2.0]).unwrap();
        assert_eq!(scaling_weight_bound(&b, Some(&r), 0.0, WeightBoundMode::RateBox).unwrap(), vec![2.0]);
        assert_eq!(scaling_weight_bound(&b, None, 0.5, WeightBoundMode::Lipschitz).unwrap(), vec![1.0]);
        assert_eq!(scaling_weight_bound(&b, None, 1.0, WeightBoundMode::Lipschitz).unwrap(), vec![1.0]);
        assert!(matches!(
            scaling_weight_bound(&BoxSet::unbounded(1), None, 1.0, WeightBoundMode::Lipschitz),
            Err(Error::UnboundedWeight { axis: 0 })
        ));
    }
}
