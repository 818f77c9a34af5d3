//! Error-driven mesh refinement followed by iterative constraint tightening.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::collocation::{certify, ErrorCertificate, Scheme};
use crate::error::{invalid, Error, Result};
use crate::mesh::{Mesh, POINT_TOL};
use crate::nlp::{solve_nlp, transcribe, NlpSolution, SolveStatus, SolverSettings};
use crate::ocp::BolzaOcp;
use crate::quadrature::QuadSettings;
use crate::tightening::{
    check_assumption, pontryagin_box_minus_ball, radius_gap, shrink_box, tightened_boxes_at_mesh_points,
    upsilon_shrink, BoxSet, TighteningDirection, TighteningParams, UpsilonMetric,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMode {
    /// Bounds `ε_{k,i} ≤ ε̂_i`.
    Relative,
    /// Bounds `η_{k,i} ≤ η̂_i`.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub mode: ToleranceMode,
    pub tolerance: Vec<f64>,
    pub max_iterations: usize,
    /// Cap on points added to one segment per iteration.
    pub max_points_per_segment: usize,
    pub quadrature: QuadSettingsConfig,
    pub solver: SolverSettings,
}

/// Serializable mirror of [`QuadSettings`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSettingsConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadSettingsConfig {
    fn default() -> Self {
        let q = QuadSettings::default();
        Self { rel_tol: q.rel_tol, abs_tol: q.abs_tol, max_intervals: q.max_intervals }
    }
}

impl From<QuadSettingsConfig> for QuadSettings {
    fn from(q: QuadSettingsConfig) -> Self {
        QuadSettings { rel_tol: q.rel_tol, abs_tol: q.abs_tol, max_intervals: q.max_intervals }
    }
}

impl RefinementConfig {
    pub fn new(mode: ToleranceMode, tolerance: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            mode,
            tolerance,
            max_iterations: 15,
            max_points_per_segment: 4,
            quadrature: QuadSettingsConfig::default(),
            solver: SolverSettings::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_empty() || self.tolerance.iter().any(|t| !(*t > 0.0) || t.is_nan()) {
            return Err(invalid("tolerances must be strictly positive"));
        }
        if self.max_points_per_segment == 0 {
            return Err(invalid("max_points_per_segment must be at least 1"));
        }
        Ok(())
    }

    /// `max_i` of the per-state violation ratios on segment `k`.
    pub fn segment_ratio(&self, cert: &ErrorCertificate, k: usize) -> f64 {
        let m = match self.mode {
            ToleranceMode::Absolute => &cert.eta,
            ToleranceMode::Relative => &cert.epsilon_rel,
        };
        (0..m.ncols())
            .map(|i| m[(k, i)] / self.tolerance[i])
            .fold(0.0, f64::max)
    }

    pub fn max_ratio(&self, cert: &ErrorCertificate) -> f64 {
        (0..cert.num_segments()).map(|k| self.segment_ratio(cert, k)).fold(0.0, f64::max)
    }

    pub fn satisfied(&self, cert: &ErrorCertificate) -> bool {
        self.max_ratio(cert) <= 1.0
    }

    /// Per-segment bound `ξ̂`: `η̂`, or `(ŵ+1)ε̂` in relative mode.
    pub fn xi_hat(&self, w_hat: Option<&[f64]>) -> Result<Vec<f64>> {
        match self.mode {
            ToleranceMode::Absolute => Ok(self.tolerance.clone()),
            ToleranceMode::Relative => {
                let w = w_hat.ok_or_else(|| invalid("relative tolerances need a weight bound"))?;
                Ok(self.tolerance.iter().zip(w).map(|(e, w)| (w + 1.0) * e).collect())
            }
        }
    }
}

/// `⌈log₂ ratio⌉` points for every violating segment, capped.
pub fn plan_subdivision(cert: &ErrorCertificate, cfg: &RefinementConfig) -> BTreeMap<usize, usize> {
    let mut plan = BTreeMap::new();
    for k in 0..cert.num_segments() {
        let r = cfg.segment_ratio(cert, k);
        if r > 1.0 {
            let pts = (r.log2().ceil() as usize).clamp(1, cfg.max_points_per_segment);
            plan.insert(k, pts);
        }
    }
    plan
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Refine,
    Tighten,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Refine => "refine",
            Phase::Tighten => "tighten",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub mesh: Mesh,
    pub certificate: ErrorCertificate,
    pub status: SolveStatus,
    pub nlp_iters: usize,
    pub objective: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct RefinementReport {
    pub iterations: Vec<IterationRecord>,
    pub solution: NlpSolution,
    pub certificate: ErrorCertificate,
    pub tightening_iterations: usize,
    /// State box imposed at each mesh point of the final solve.
    pub node_boxes: Vec<BoxSet>,
    /// Accumulated per-axis shrink at each mesh point, beyond the ball `𝔹_{r(t_k)}`.
    pub tightening_amounts: Vec<Vec<f64>>,
}

impl RefinementReport {
    pub fn mesh(&self) -> &Mesh {
        self.solution.trajectory.mesh()
    }

    pub fn total_nlp_iterations(&self) -> usize {
        self.iterations.iter().map(|r| r.nlp_iters).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TighteningConfig {
    pub params: TighteningParams,
    pub direction: TighteningDirection,
    pub metric: UpsilonMetric,
    pub max_iterations: usize,
}

impl TighteningConfig {
    pub fn new(params: TighteningParams) -> Self {
        Self { params, direction: TighteningDirection::Forward, metric: UpsilonMetric::default(), max_iterations: 20 }
    }
}

/// Phase 1 only: solve, certify, subdivide until every segment meets the tolerance.
pub fn refine(ocp: &BolzaOcp, initial_mesh: &Mesh, scheme: Scheme, cfg: &RefinementConfig) -> Result<RefinementReport> {
    run(ocp, initial_mesh, scheme, cfg, None, None)
}

/// Phase 1 followed by tightening at mesh points until the sampled trajectory
/// clears every tightened set between mesh points.
pub fn refine_with_tightening(
    ocp: &BolzaOcp,
    initial_mesh: &Mesh,
    scheme: Scheme,
    cfg: &RefinementConfig,
    tight: &TighteningConfig,
    warm: Option<&NlpSolution>,
) -> Result<RefinementReport> {
    run(ocp, initial_mesh, scheme, cfg, Some(tight), warm)
}

/// Carries tightening amounts across a subdivision: new points take the larger
/// amount of the old segment's ends.
fn remap_amounts(old: &Mesh, amounts: &[Vec<f64>], new: &Mesh) -> Vec<Vec<f64>> {
    new.points()
        .iter()
        .map(|&t| {
            if let Some(j) = old.points().iter().position(|p| (p - t).abs() <= POINT_TOL) {
                amounts[j].clone()
            } else {
                let j = old.locate(t);
                amounts[j].iter().zip(&amounts[j + 1]).map(|(a, b)| a.max(*b)).collect()
            }
        })
        .collect()
}

fn run(
    ocp: &BolzaOcp,
    initial_mesh: &Mesh,
    scheme: Scheme,
    cfg: &RefinementConfig,
    tight: Option<&TighteningConfig>,
    warm: Option<&NlpSolution>,
) -> Result<RefinementReport> {
    cfg.validate()?;
    if cfg.tolerance.len() != ocp.model.state_dim {
        return Err(invalid("tolerance vector length must equal the state dimension"));
    }
    let quad: QuadSettings = cfg.quadrature.into();
    // phase 2 is a no-op without finite state bounds
    let tight = tight.filter(|_| !ocp.state_box.is_unbounded());
    if let Some(t) = tight {
        t.params.validate()?;
        check_assumption(&ocp.state_box, &t.params)?;
    }
    let mut mesh = initial_mesh.clone();
    let n = ocp.model.state_dim;
    let mut amounts = vec![vec![0.0; n]; mesh.points().len()];
    let mut warm: Option<NlpSolution> = warm.cloned();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut refine_iters = 0usize;
    let mut tight_iters = 0usize;
    let mut phase = Phase::Refine;
    let k_last = |m: &Mesh| m.num_segments();

    loop {
        // phase 1
        let (sol, cert, boxes) = loop {
            let boxes = match tight {
                Some(t) => tightened_boxes_at_mesh_points(&ocp.state_box, &mesh, &t.params, &amounts)?,
                None => vec![ocp.state_box.clone(); mesh.points().len()],
            };
            let nlp = transcribe(ocp, &mesh, scheme, Some(&boxes))?;
            let sol = solve_nlp(&nlp, warm.as_ref(), &cfg.solver)?;
            if sol.status != SolveStatus::Optimal {
                return Err(Error::Solver { iteration: records.len(), status: sol.status });
            }
            let cert = certify(&sol.trajectory, &ocp.model, &quad)?;
            let plan = plan_subdivision(&cert, cfg);
            records.push(IterationRecord {
                iteration: records.len(),
                phase,
                mesh: mesh.clone(),
                certificate: cert.clone(),
                status: sol.status,
                nlp_iters: sol.iterations,
                objective: sol.objective,
                max_ratio: cfg.max_ratio(&cert),
            });
            phase = Phase::Refine;
            if plan.is_empty() {
                break (sol, cert, boxes);
            }
            if refine_iters >= cfg.max_iterations {
                let report = RefinementReport {
                    iterations: records,
                    certificate: cert,
                    solution: sol,
                    tightening_iterations: tight_iters,
                    node_boxes: boxes,
                    tightening_amounts: amounts,
                };
                return Err(Error::RefinementFailure { iterations: refine_iters, report: Box::new(report) });
            }
            refine_iters += 1;
            let new_mesh = mesh.subdivide(&plan)?;
            amounts = remap_amounts(&mesh, &amounts, &new_mesh);
            mesh = new_mesh;
            warm = Some(sol);
        };

        let Some(t) = tight else {
            return Ok(RefinementReport {
                iterations: records,
                solution: sol,
                certificate: cert,
                tightening_iterations: 0,
                node_boxes: boxes,
                tightening_amounts: amounts,
            });
        };

        // phase 2
        let radii = t.params.node_radii(&mesh);
        let kk = k_last(&mesh);
        let fixed = |node: usize| node == 0 || (node == kk && ocp.terminal_state.is_some());
        let mut violated = false;
        let mut xa = vec![0.0; ocp.model.state_dim];
        for k in 0..kk {
            let anchor = match t.direction {
                TighteningDirection::Forward => k,
                TighteningDirection::Backward => k + 1,
            };
            if fixed(anchor) {
                continue;
            }
            let gap = radius_gap(radii[k + 1], radii[k]);
            let shrink = upsilon_shrink(&sol.trajectory, k, &t.params.norm, gap, t.direction, t.metric);
            let s_anchor = if anchor == k { 0.0 } else { mesh.segment_len(k) };
            sol.trajectory.state_on(k, s_anchor, &mut xa);
            let ok = match pontryagin_box_minus_ball(&ocp.state_box, radii[anchor], &t.params.norm)
                .and_then(|b| shrink_box(&b, &shrink))
            {
                Ok(set) => set.contains(&xa),
                Err(_) => false,
            };
            if !ok {
                violated = true;
                for (a, s) in amounts[anchor].iter_mut().zip(&shrink) {
                    *a = a.max(*s);
                }
            }
        }
        if !violated {
            return Ok(RefinementReport {
                iterations: records,
                solution: sol,
                certificate: cert,
                tightening_iterations: tight_iters,
                node_boxes: boxes,
                tightening_amounts: amounts,
            });
        }
        if tight_iters >= t.max_iterations {
            let report = RefinementReport {
                iterations: records,
                solution: sol,
                certificate: cert,
                tightening_iterations: tight_iters,
                node_boxes: boxes,
                tightening_amounts: amounts,
            };
            return Err(Error::TighteningFailure { iterations: tight_iters, report: Box::new(report) });
        }
        tight_iters += 1;
        phase = Phase::Tighten;
        warm = Some(sol);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn cert_with(eta: &[f64]) -> ErrorCertificate {
        let k = eta.len();
        let mesh = Mesh::uniform(0.0, k as f64, k).unwrap();
        ErrorCertificate::from_parts(
            mesh,
            DMatrix::from_column_slice(k, 1, eta),
            DVector::from_element(1, 0.0),
            Scheme::Trapezoidal,
        )
    }

    #[test]
    fn plan_rules() {
        let cfg = RefinementConfig::new(ToleranceMode::Absolute, vec![1.0]).unwrap();
        assert!(plan_subdivision(&cert_with(&[0.5, 1.0]), &cfg).is_empty());
        assert_eq!(plan_subdivision(&cert_with(&[3.0]), &cfg), BTreeMap::from([(0, 2)]));
        assert_eq!(plan_subdivision(&cert_with(&[0.1, 100.0]), &cfg), BTreeMap::from([(1, 4)]));
        assert_eq!(plan_subdivision(&cert_with(&[1.2]), &cfg), BTreeMap::from([(0, 1)]));
    }

    #[test]
    fn rejects_bad_tolerances() {
        assert!(RefinementConfig::new(ToleranceMode::Absolute, vec![0.0]).is_err());
        assert!(RefinementConfig::new(ToleranceMode::Absolute, vec![f64::NAN]).is_err());
        assert!(RefinementConfig::new(ToleranceMode::Absolute, vec![f64::INFINITY]).is_ok());
    }

    #[test]
    fn remap_takes_max_of_neighbours() {
        let old = Mesh::new(vec![0.0, 1.0, 2.0]).unwrap();
        let new = old.subdivide(&BTreeMap::from([(1, 1)])).unwrap();
        let a = [vec![0.0], vec![0.1], vec![0.3]];
        assert_eq!(remap_amounts(&old, &a, &new), vec![vec![0.0], vec![0.1], vec![0.3], vec![0.3]]);
    }
}
