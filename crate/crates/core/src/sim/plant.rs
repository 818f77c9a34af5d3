//! Ground-truth plant: `ẋ = f(t, x, u(t)) + v(t)`, measured as `y = x + θ(t)`.

use std::sync::Arc;

use crate::collocation::PiecewiseTrajectory;
use crate::dynamics::DynamicsModel;
use crate::error::{invalid, Result};
use crate::ocp::StageCost;
use crate::sim::integrator::{integrate, OdeSettings};
use crate::sim::noise::NoiseSignal;

/// Output grid spacing of dense traces, in seconds.
pub const GRID_STEP: f64 = 1e-3;

/// An input applied to the plant, possibly with jumps at known instants.
pub trait InputSignal: Sync {
    fn dim(&self) -> usize;

    /// Value at `t`, taking the branch that is active at `mid` when `t` sits on a jump.
    fn eval(&self, t: f64, mid: f64, out: &mut [f64]);

    /// Jump instants strictly inside `(a, b)`.
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroInput(pub usize);

impl InputSignal for ZeroInput {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, _t: f64, _mid: f64, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn breakpoints(&self, _a: f64, _b: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// The input polynomials of a prediction; the final value is held past the horizon.
impl InputSignal for PiecewiseTrajectory {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn eval(&self, t: f64, mid: f64, out: &mut [f64]) {
        let mesh = self.mesh();
        let k = mesh.locate(mid.clamp(mesh.t0(), mesh.tf()));
        let (a, b) = mesh.segment(k);
        self.input_on(k, t.clamp(a, b) - a, out);
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.mesh().points().iter().copied().filter(|&t| t > a && t < b).collect()
    }
}

#[derive(Clone)]
pub struct PlantSimulator {
    pub model: DynamicsModel,
    pub ode: OdeSettings,
    pub disturbance: NoiseSignal,
    pub measurement: NoiseSignal,
    /// Integrated alongside the state as an extra component.
    pub running_cost: Option<Arc<dyn StageCost>>,
}

/// One call to [`PlantSimulator::advance`].
#[derive(Debug, Clone, Default)]
pub struct PlantSegment {
    pub samples: Vec<Vec<f64>>,
    /// `(t, x)` at every accepted integrator step.
    pub steps: Vec<(f64, Vec<f64>)>,
    pub x_end: Vec<f64>,
    pub cost: f64,
}

impl PlantSimulator {
    pub fn new(model: DynamicsModel) -> Self {
        let n = model.state_dim;
        Self {
            model,
            ode: OdeSettings::default(),
            disturbance: NoiseSignal::zero(n),
            measurement: NoiseSignal::zero(n),
            running_cost: None,
        }
    }

    pub fn measure(&self, t: f64, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.measurement.at(t)).map(|(a, b)| a + b).collect()
    }

    /// Advances from `t_a` to `t_b`, restarting the integrator at every
    /// disturbance switch and input jump. `out_times` must be sorted.
    pub fn advance(
        &self,
        x: &[f64],
        t_a: f64,
        t_b: f64,
        input: &dyn InputSignal,
        out_times: &[f64],
    ) -> Result<PlantSegment> {
        let n = self.model.state_dim;
        if x.len() != n || input.dim() != self.model.input_dim {
            return Err(invalid("plant state or input dimension mismatch"));
        }
        let mut breaks = self.disturbance.breakpoints(t_a, t_b);
        breaks.extend(input.breakpoints(t_a, t_b));
        breaks.push(t_a);
        breaks.push(t_b);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

        let mut seg = PlantSegment::default();
        let mut y: Vec<f64> = x.iter().copied().chain(std::iter::once(0.0)).collect();
        let mut next_out = 0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let v = self.disturbance.at(mid).to_vec();
            let last = b >= t_b;
            let start = next_out;
            while next_out < out_times.len() && (out_times[next_out] < b || (last && out_times[next_out] <= b)) {
                next_out += 1;
            }
            let rhs = |t: f64, z: &[f64], dz: &mut [f64]| {
                let mut uu = vec![0.0; input.dim()];
                input.eval(t, mid, &mut uu);
                self.model.eval_into(t, &z[..n], &uu, &mut dz[..n]);
                for i in 0..n {
                    dz[i] += v[i];
                }
                dz[n] = self.running_cost.as_ref().map_or(0.0, |c| c.value(t, &z[..n], &uu));
            };
            let out = integrate(rhs, a, &y, b, &out_times[start..next_out], &self.ode)?;
            seg.samples.extend(out.samples.into_iter().map(|mut s| {
                s.truncate(n);
                s
            }));
            seg.steps.extend(out.steps.into_iter().map(|(t, mut s)| {
                s.truncate(n);
                (t, s)
            }));
            y = out.y_end;
        }
        seg.cost = y[n];
        y.truncate(n);
        seg.x_end = y;
        Ok(seg)
    }
}

/// Dense plant trace on a uniform grid.
#[derive(Debug, Clone, Default)]
pub struct PlantTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps: Vec<(f64, Vec<f64>)>,
    pub cost: f64,
}

/// Integrates the plant on `[t0, t1]` with output every [`GRID_STEP`].
pub fn integrate_plant(sim: &PlantSimulator, x0: &[f64], input: Option<&dyn InputSignal>, t0: f64, t1: f64) -> Result<PlantTrace> {
    let zero = ZeroInput(sim.model.input_dim);
    let input = input.unwrap_or(&zero);
    let count = ((t1 - t0) / GRID_STEP).round() as usize;
    let times: Vec<f64> = (0..=count).map(|i| t0 + i as f64 * GRID_STEP).filter(|&t| t <= t1 + 1e-12).collect();
    let seg = sim.advance(x0, t0, t1, input, &times)?;
    Ok(PlantTrace { times, states: seg.samples, steps: seg.steps, cost: seg.cost })
}
