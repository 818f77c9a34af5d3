//! Box constraint sets, Pontryagin differences with weighted-norm balls, and
//! the time-varying tightening radius.

use serde::{Deserialize, Serialize};

use crate::collocation::PiecewiseTrajectory;
use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::norm::{p_norm, NormConfig};

/// Axis-aligned box; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(invalid("box bound lengths differ"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(invalid("box needs lower <= upper"));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|l| l.is_infinite()) && self.upper.iter().all(|u| u.is_infinite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &BoxSet) -> bool {
        self.lower.iter().zip(&other.lower).all(|(a, b)| a >= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a <= b)
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }
}

/// `box ⊖ {x : ‖x‖_M ≤ radius}`: finite bounds move inward by `radius / M_i^{1/p}`.
pub fn pontryagin_box_minus_ball(b: &BoxSet, radius: f64, norm: &NormConfig) -> Result<BoxSet> {
    if !(radius >= 0.0) {
        return Err(invalid("ball radius must be non-negative"));
    }
    let mut out = b.clone();
    for i in 0..b.dim() {
        let e = radius * norm.axis_extent(i);
        out.lower[i] = b.lower[i] + e;
        out.upper[i] = b.upper[i] - e;
        if out.lower[i] > out.upper[i] {
            let width = b.upper[i] - b.lower[i];
            if out.lower[i] - out.upper[i] <= 1e-12 * (1.0 + width.abs()) {
                let mid = 0.5 * (out.lower[i] + out.upper[i]);
                out.lower[i] = mid;
                out.upper[i] = mid;
            } else {
                return Err(Error::EmptySet { axis: i });
            }
        }
    }
    Ok(out)
}

/// Signed distance from `x` to `b` in the unweighted `p`-norm.
///
/// Inside, the nearest boundary point lies along a coordinate axis for every
/// p-norm, so the value is minus the smallest face distance.
pub fn signed_distance(x: &[f64], b: &BoxSet, p: f64) -> f64 {
    if b.contains(x) {
        let face = x
            .iter()
            .zip(b.lower.iter().zip(&b.upper))
            .map(|(v, (l, u))| (v - l).min(u - v))
            .fold(f64::INFINITY, f64::min);
        -face
    } else {
        let excess: Vec<f64> = x
            .iter()
            .zip(b.lower.iter().zip(&b.upper))
            .map(|(v, (l, u))| if v < l { l - v } else if v > u { v - u } else { 0.0 })
            .collect();
        p_norm(&excess, p)
    }
}

/// Data of the time-varying tightening ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TighteningParams {
    /// Per-segment tolerance `ξ̂` (`η̂`, or `(ŵ+1)ε̂`).
    pub xi_hat: Vec<f64>,
    pub norm: NormConfig,
    pub lipschitz_x: f64,
    pub f_bound: f64,
    pub v_hat: f64,
    pub theta_hat: f64,
    pub delta: f64,
}

impl TighteningParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.lipschitz_x, self.f_bound, self.v_hat, self.theta_hat];
        if vals.iter().any(|v| !(*v >= 0.0)) || self.xi_hat.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("tightening parameters must be non-negative"));
        }
        if !(self.delta > 0.0) {
            return Err(invalid("delta must be positive"));
        }
        Ok(())
    }

    pub fn xi_norm(&self) -> f64 {
        self.norm.norm(&self.xi_hat)
    }

    /// `‖Σ_{k∈𝒦_t} ξ̂‖_M` for the segments covering `[t0, t]`.
    pub fn prefix(&self, mesh: &Mesh, t: f64) -> Result<f64> {
        let count = mesh.covering_prefix(t)?.len();
        Ok(count as f64 * self.xi_norm())
    }

    /// `r(t)` for absolute time `t` on the prediction mesh.
    pub fn radius_at(&self, mesh: &Mesh, t: f64) -> Result<f64> {
        let pre = self.prefix(mesh, t)?;
        Ok(ball_radius(t - mesh.t0(), self, pre))
    }

    /// Radii at every mesh point.
    pub fn node_radii(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.points()
            .iter()
            .map(|&t| self.radius_at(mesh, t).expect("mesh point inside mesh"))
            .collect()
    }
}

/// `r(s) = min{(β + c·v̂·s)·e^{L_x s}, Δ}` with `β = eta_prefix + c·2θ̂`.
pub fn ball_radius(s: f64, params: &TighteningParams, eta_prefix: f64) -> f64 {
    let c = params.norm.induced_constant();
    let beta = eta_prefix + c * 2.0 * params.theta_hat;
    let r = (beta + c * params.v_hat * s) * (params.lipschitz_x * s).exp();
    r.min(params.delta)
}

/// `g(later, earlier) = r(later) − r(earlier)`, clamped at zero.
pub fn radius_gap(r_later: f64, r_earlier: f64) -> f64 {
    (r_later - r_earlier).max(0.0)
}

/// `α_k = ‖ξ̂‖ + L_f |T_k| + g(t_{k+1}, t_k)`.
pub fn alpha_k(params: &TighteningParams, seg_len: f64, r_next: f64, r_this: f64) -> f64 {
    params.xi_norm() + params.f_bound * seg_len + radius_gap(r_next, r_this)
}

/// Samples per segment for the displacement maximum.
pub const UPSILON_SAMPLES: usize = 129;

/// Which mesh point of a segment receives its tightening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TighteningDirection {
    /// Anchor at the left point (displacement from `x̃(t_k)`).
    #[default]
    Forward,
    /// Anchor at the right point (displacement from `x̃(t_{k+1})`).
    Backward,
}

/// `Υ(x̃, T_k) = max_{s∈T_k} ‖x̃(s) − x̃(anchor)‖_M + g`, by dense sampling.
pub fn upsilon(
    traj: &PiecewiseTrajectory,
    k: usize,
    norm: &NormConfig,
    gap: f64,
    direction: TighteningDirection,
) -> f64 {
    let l = traj.mesh().segment_len(k);
    let n = traj.state_dim();
    let mut anchor = vec![0.0; n];
    let s_anchor = match direction {
        TighteningDirection::Forward => 0.0,
        TighteningDirection::Backward => l,
    };
    traj.state_on(k, s_anchor, &mut anchor);
    let mut x = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut worst = 0.0f64;
    for j in 0..UPSILON_SAMPLES {
        let s = l * j as f64 / (UPSILON_SAMPLES - 1) as f64;
        traj.state_on(k, s, &mut x);
        for i in 0..n {
            d[i] = x[i] - anchor[i];
        }
        worst = worst.max(norm.norm(&d));
    }
    worst + gap
}

/// How the between-points displacement is turned into a mesh-point shrink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpsilonMetric {
    /// Ball of radius `Υ`: every axis shrinks by `Υ / M_i^{1/p}`.
    Norm,
    /// Each axis shrinks by its own largest displacement plus `g / M_i^{1/p}`.
    /// Also sound for boxes, and does not let motion along unconstrained
    /// axes tighten the constrained ones.
    #[default]
    PerAxis,
}

/// Per-axis shrink for segment `k` under `metric`, in state units.
pub fn upsilon_shrink(
    traj: &PiecewiseTrajectory,
    k: usize,
    norm: &NormConfig,
    gap: f64,
    direction: TighteningDirection,
    metric: UpsilonMetric,
) -> Vec<f64> {
    let n = traj.state_dim();
    match metric {
        UpsilonMetric::Norm => {
            let u = upsilon(traj, k, norm, gap, direction);
            (0..n).map(|i| u * norm.axis_extent(i)).collect()
        }
        UpsilonMetric::PerAxis => {
            let l = traj.mesh().segment_len(k);
            let mut anchor = vec![0.0; n];
            let s_anchor = match direction {
                TighteningDirection::Forward => 0.0,
                TighteningDirection::Backward => l,
            };
            traj.state_on(k, s_anchor, &mut anchor);
            let mut x = vec![0.0; n];
            let mut worst = vec![0.0f64; n];
            for j in 0..UPSILON_SAMPLES {
                let s = l * j as f64 / (UPSILON_SAMPLES - 1) as f64;
                traj.state_on(k, s, &mut x);
                for i in 0..n {
                    worst[i] = worst[i].max((x[i] - anchor[i]).abs());
                }
            }
            (0..n).map(|i| worst[i] + gap * norm.axis_extent(i)).collect()
        }
    }
}

/// Moves every finite bound inward by `shrink[i]`.
pub fn shrink_box(b: &BoxSet, shrink: &[f64]) -> Result<BoxSet> {
    let mut out = b.clone();
    for i in 0..b.dim() {
        out.lower[i] += shrink[i];
        out.upper[i] -= shrink[i];
        if out.lower[i] > out.upper[i] {
            return Err(Error::EmptySet { axis: i });
        }
    }
    Ok(out)
}

/// Per-mesh-point sets `𝕏 ⊖ 𝔹_{r(t_k)}`, further shrunk by the accumulated
/// per-axis amounts `extra[k]`.
///
/// With the ball metric the amounts are `Υ_k / M_i^{1/p}`, which is
/// `𝕏 ⊖ (𝔹_{r(t_k)} ⊕ 𝔹_{Υ_k})` since radii of balls in one norm add.
pub fn tightened_boxes_at_mesh_points(
    b: &BoxSet,
    mesh: &Mesh,
    params: &TighteningParams,
    extra: &[Vec<f64>],
) -> Result<Vec<BoxSet>> {
    let radii = params.node_radii(mesh);
    if extra.len() != radii.len() {
        return Err(invalid("need one tightening amount per mesh point"));
    }
    radii
        .iter()
        .zip(extra)
        .enumerate()
        .map(|(k, (r, e))| {
            pontryagin_box_minus_ball(b, *r, &params.norm)
                .and_then(|bb| shrink_box(&bb, e))
                .map_err(|_| Error::InfeasibleTightening { point: k })
        })
        .collect()
}

/// Checks that `𝕏 ⊖ 𝔹_Δ` is non-empty.
pub fn check_assumption(b: &BoxSet, params: &TighteningParams) -> Result<()> {
    pontryagin_box_minus_ball(b, params.delta, &params.norm).map(|_| ())
}
