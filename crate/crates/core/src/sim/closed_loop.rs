//! Receding-horizon loop with event-triggered or self-triggered updates.

use serde::{Deserialize, Serialize};

use crate::collocation::{PiecewiseTrajectory, Scheme};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::nlp::NlpSolution;
use crate::ocp::BolzaOcp;
use crate::quadrature::QuadSettings;
use crate::refinement::{refine, refine_with_tightening, RefinementConfig, RefinementReport, TighteningConfig};
use crate::sim::plant::{InputSignal, PlantSimulator};
use crate::tightening::{signed_distance, BoxSet};
use crate::triggering::{trigger_report, ModelBounds, QetMode, ToleranceBound, TriggerConfig, TriggerReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    /// Monitor the event condition and update when it fires.
    #[default]
    Etc,
    /// Schedule the next update at the quadrature-error time.
    StcQet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateReason {
    Initial,
    Event,
    Scheduled,
    HorizonEnd,
}

impl UpdateReason {
    pub fn label(self) -> &'static str {
        match self {
            UpdateReason::Initial => "initial",
            UpdateReason::Event => "event",
            UpdateReason::Scheduled => "scheduled",
            UpdateReason::HorizonEnd => "horizon_end",
        }
    }
}

/// Everything a closed-loop run needs.
#[derive(Clone)]
pub struct ClosedLoopSetup {
    /// Problem on `[0, T_op]`; re-anchored at every update.
    pub ocp: BolzaOcp,
    pub scheme: Scheme,
    pub mesh_segments: usize,
    pub refinement: RefinementConfig,
    pub tightening: Option<TighteningConfig>,
    pub trigger: TriggerConfig,
    pub mode: TriggerMode,
    pub qet_mode: QetMode,
    pub tolerance_bound: ToleranceBound,
    pub model_bounds: ModelBounds,
    pub sim_time: f64,
    pub monitor_step_ms: u64,
    pub plant: PlantSimulator,
}

#[derive(Debug, Clone)]
pub struct UpdateRecord {
    pub index: usize,
    pub time: f64,
    pub reason: UpdateReason,
    pub measured: Vec<f64>,
    pub report: RefinementReport,
    pub trigger: TriggerReport,
    /// Time the loop intended to update next.
    pub commanded_next: f64,
    /// Largest `‖δ‖_M` seen before the next update.
    pub max_delta: f64,
    pub cost_so_far: f64,
}

impl UpdateRecord {
    pub fn trajectory(&self) -> &PiecewiseTrajectory {
        &self.report.solution.trajectory
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    pub u: Vec<f64>,
    pub delta_norm: f64,
}

#[derive(Debug, Default)]
pub struct ClosedLoopLog {
    pub updates: Vec<UpdateRecord>,
    pub trace: Vec<TraceRow>,
    pub cost: f64,
    /// Simulated time; shorter than requested when the run stopped on a failure.
    pub sim_time: f64,
    /// Largest signed distance of the plant state outside the state box.
    pub max_constraint_excess: f64,
    pub constraint_violations: usize,
    /// Points where `‖δ‖_M > Δ` before a scheduled (not event) update.
    pub delta_violations: usize,
    pub failure: Option<Error>,
}

impl ClosedLoopLog {
    pub fn update_times(&self) -> Vec<f64> {
        self.updates.iter().map(|u| u.time).collect()
    }

    /// Simulated time divided by the number of updates.
    pub fn mean_iut(&self) -> f64 {
        if self.updates.is_empty() {
            return f64::NAN;
        }
        self.sim_time / self.updates.len() as f64
    }

    pub fn total_nlp_iterations(&self) -> usize {
        self.updates.iter().map(|u| u.report.total_nlp_iterations()).sum()
    }
}

fn ms(t: f64) -> u64 {
    (t * 1e3 + 1e-6).floor().max(0.0) as u64
}

/// One refinement solve for the OCP re-anchored at `(t, y)`.
pub fn solve_update(setup: &ClosedLoopSetup, t: f64, y: Vec<f64>, warm: Option<&NlpSolution>) -> Result<RefinementReport> {
    let ocp = setup.ocp.shifted(t, y);
    let mesh = Mesh::uniform(ocp.t0, ocp.tf, setup.mesh_segments)?;
    match &setup.tightening {
        Some(tc) => refine_with_tightening(&ocp, &mesh, setup.scheme, &setup.refinement, tc, warm),
        None => refine(&ocp, &mesh, setup.scheme, &setup.refinement),
    }
}

/// Runs the loop for `sim_time` seconds. Solver failures stop the run and are
/// stored in [`ClosedLoopLog::failure`] with everything logged up to then.
pub fn run_closed_loop(setup: &ClosedLoopSetup) -> Result<ClosedLoopLog> {
    let plant = &setup.plant;
    let n = plant.model.state_dim;
    let norm = &setup.trigger.norm;
    let delta = setup.trigger.delta;
    let x_box: BoxSet = setup.ocp.state_box.clone();
    let quad: QuadSettings = setup.refinement.quadrature.into();
    let total_ms = ms(setup.sim_time);
    let horizon_ms = ms(setup.ocp.tf - setup.ocp.t0).max(1);
    let step_ms = setup.monitor_step_ms.max(1);

    let mut log = ClosedLoopLog { sim_time: setup.sim_time, ..Default::default() };
    let mut x = setup.ocp.initial_state.clone();
    let mut t_ms = 0u64;
    let mut reason = UpdateReason::Initial;
    let mut warm: Option<NlpSolution> = None;
    let mut xt = vec![0.0; n];
    let mut uu = vec![0.0; plant.model.input_dim];

    let check_state = |x: &[f64], log: &mut ClosedLoopLog| {
        if !x_box.contains(x) {
            log.constraint_violations += 1;
            log.max_constraint_excess = log.max_constraint_excess.max(signed_distance(x, &x_box, norm.p));
        }
    };
    check_state(&x, &mut log);

    loop {
        let t = t_ms as f64 / 1e3;
        let y = plant.measure(t, &x);
        let report = match solve_update(setup, t, y.clone(), warm.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                log.failure = Some(e);
                log.sim_time = t;
                break;
            }
        };
        let traj = report.solution.trajectory.clone();
        let trig = match trigger_report(
            &traj,
            &report.certificate,
            &setup.tolerance_bound,
            &setup.model_bounds,
            &setup.trigger,
            setup.qet_mode,
            &quad,
        ) {
            Ok(r) => r,
            Err(e) => {
                log.failure = Some(e);
                log.sim_time = t;
                break;
            }
        };
        let scheduled_ms = match setup.mode {
            TriggerMode::Etc => t_ms + horizon_ms,
            TriggerMode::StcQet => t_ms + ms(trig.tau_qet).clamp(1, horizon_ms),
        };
        let end_ms = scheduled_ms.min(total_ms);

        let delta_at = |tt: f64, xs: &[f64], xt: &mut Vec<f64>| {
            traj.state_clamped(tt, xt);
            let ym = plant.measure(tt, xs);
            let d: Vec<f64> = xt.iter().zip(&ym).map(|(a, b)| a - b).collect();
            norm.norm(&d)
        };
        if log.trace.is_empty() {
            traj.input_clamped(t, &mut uu);
            let d = delta_at(t, &x, &mut xt);
            log.trace.push(TraceRow { t, x: x.clone(), x_tilde: xt.clone(), u: uu.clone(), delta_norm: d });
        }

        let cost_at_update = log.cost;
        let mut max_delta: f64 = 0.0;
        let mut now = t_ms;
        let mut fired = false;
        while now < end_ms {
            let b_ms = (now + step_ms).min(end_ms);
            let (a, b) = (now as f64 / 1e3, b_ms as f64 / 1e3);
            let seg = match plant.advance(&x, a, b, &traj, &[b]) {
                Ok(s) => s,
                Err(e) => {
                    log.failure = Some(e);
                    break;
                }
            };
            log.cost += seg.cost;
            x = seg.x_end;
            for (ts, xs) in &seg.steps {
                check_state(xs, &mut log);
                let d = delta_at(*ts, xs, &mut xt);
                max_delta = max_delta.max(d);
                if setup.mode == TriggerMode::StcQet && d > delta {
                    log.delta_violations += 1;
                }
            }
            let d = delta_at(b, &x, &mut xt);
            InputSignal::eval(&traj, b, 0.5 * (a + b), &mut uu);
            log.trace.push(TraceRow { t: b, x: x.clone(), x_tilde: xt.clone(), u: uu.clone(), delta_norm: d });
            now = b_ms;
            if setup.mode == TriggerMode::Etc && d >= delta {
                fired = true;
                break;
            }
        }
        log.updates.push(UpdateRecord {
            index: log.updates.len(),
            time: t,
            reason,
            measured: y,
            report,
            trigger: trig,
            commanded_next: scheduled_ms as f64 / 1e3,
            max_delta,
            cost_so_far: cost_at_update,
        });
        if log.failure.is_some() || now >= total_ms {
            break;
        }
        reason = match (setup.mode, fired) {
            (_, true) => UpdateReason::Event,
            (TriggerMode::StcQet, false) if now < t_ms + horizon_ms => UpdateReason::Scheduled,
            _ => UpdateReason::HorizonEnd,
        };
        warm = log.updates.last().map(|u| u.report.solution.clone());
        t_ms = now;
    }
    Ok(log)
}
