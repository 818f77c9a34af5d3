//! Open-loop comparison of schemes on an autonomous system: certificates,
//! first event time and the three inter-update-time bounds.

use serde::{Deserialize, Serialize};

use crate::collocation::{certify, ErrorCertificate, PiecewiseTrajectory, Scheme};
use crate::dynamics::DynamicsModel;
use crate::error::{invalid, Result};
use crate::mesh::Mesh;
use crate::nlp::{solve_nlp, transcribe, SolveStatus, SolverSettings};
use crate::norm::NormConfig;
use crate::ocp::BolzaOcp;
use crate::quadrature::QuadSettings;
use crate::sim::noise::NoiseSignal;
use crate::sim::plant::{integrate_plant, PlantSimulator, PlantTrace};
use crate::triggering::{trigger_report, ModelBounds, QetMode, ToleranceBound, TriggerConfig, TriggerReport};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopCase {
    pub scheme: Scheme,
    /// Event threshold; `null` in configs means no threshold.
    #[serde(with = "crate::config::inf_f64")]
    pub delta: f64,
    /// Tabulated tolerance fed to the minimum-IUT bound alongside the realized errors.
    pub eta_hat: f64,
}

#[derive(Debug, Clone)]
pub struct OpenLoopSetup {
    pub model: DynamicsModel,
    pub initial_state: Vec<f64>,
    pub horizon: f64,
    pub mesh_segments: usize,
    pub norm: NormConfig,
    /// Constant disturbance added to the plant.
    pub disturbance: Vec<f64>,
    pub model_bounds: ModelBounds,
    pub cases: Vec<OpenLoopCase>,
    pub solver: SolverSettings,
    pub quad: QuadSettings,
}

#[derive(Debug, Clone)]
pub struct OpenLoopResult {
    pub case: OpenLoopCase,
    pub trajectory: PiecewiseTrajectory,
    pub certificate: ErrorCertificate,
    pub plant: PlantTrace,
    /// `‖x̃(t) − x(t)‖_M` on the plant grid.
    pub delta_norms: Vec<f64>,
    pub first_event: Option<f64>,
    /// Per-state tolerance used for the minimum IUT: `max(η̂, max_k η_{k,i})`.
    pub eta_hat_used: Vec<f64>,
    pub trigger: TriggerReport,
}

impl OpenLoopResult {
    /// Largest per-segment 2-norm of `η_k`.
    pub fn max_segment_eta(&self) -> f64 {
        (0..self.certificate.num_segments())
            .map(|k| self.certificate.eta.row(k).norm())
            .fold(0.0, f64::max)
    }
}

/// Collocation approximation of the autonomous flow from `x0` on a uniform mesh.
pub fn approximate(model: &DynamicsModel, x0: &[f64], horizon: f64, k: usize, scheme: Scheme, solver: &SolverSettings) -> Result<PiecewiseTrajectory> {
    let ocp = BolzaOcp::feasibility(model.clone(), 0.0, horizon, x0.to_vec())?;
    let mesh = Mesh::uniform(0.0, horizon, k)?;
    let nlp = transcribe(&ocp, &mesh, scheme, None)?;
    let sol = solve_nlp(&nlp, None, solver)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver { iteration: 0, status: sol.status });
    }
    Ok(sol.trajectory)
}

pub fn run_open_loop_experiment(setup: &OpenLoopSetup) -> Result<Vec<OpenLoopResult>> {
    if !setup.model.is_autonomous() {
        return Err(invalid("the open-loop experiment needs an autonomous model"));
    }
    let mut sim = PlantSimulator::new(setup.model.clone());
    sim.disturbance = NoiseSignal::constant(setup.disturbance.clone());
    let plant = integrate_plant(&sim, &setup.initial_state, None, 0.0, setup.horizon)?;

    setup
        .cases
        .iter()
        .map(|case| {
            let traj = approximate(&setup.model, &setup.initial_state, setup.horizon, setup.mesh_segments, case.scheme, &setup.solver)?;
            let cert = certify(&traj, &setup.model, &setup.quad)?;
            let n = setup.model.state_dim;
            let mut xt = vec![0.0; n];
            let delta_norms: Vec<f64> = plant
                .times
                .iter()
                .zip(&plant.states)
                .map(|(&t, x)| {
                    traj.state_clamped(t, &mut xt);
                    let d: Vec<f64> = xt.iter().zip(x).map(|(a, b)| a - b).collect();
                    setup.norm.norm(&d)
                })
                .collect();
            let first_event = plant.times.iter().zip(&delta_norms).find(|(_, d)| **d >= case.delta).map(|(t, _)| *t);
            let eta_hat_used: Vec<f64> = (0..n)
                .map(|i| cert.eta.column(i).iter().cloned().fold(case.eta_hat, f64::max))
                .collect();
            let cfg = TriggerConfig::new(case.delta, setup.norm.clone(), setup.horizon)?;
            let trigger = trigger_report(
                &traj,
                &cert,
                &ToleranceBound::Absolute { eta_hat: eta_hat_used.clone() },
                &setup.model_bounds,
                &cfg,
                QetMode::Absolute,
                &setup.quad,
            )?;
            Ok(OpenLoopResult {
                case: case.clone(),
                trajectory: traj,
                certificate: cert,
                plant: plant.clone(),
                delta_norms,
                first_event,
                eta_hat_used,
                trigger,
            })
        })
        .collect()
}
