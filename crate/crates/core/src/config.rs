//! JSON run configuration and its translation into experiment setups.
//!
//! Infinite values (norm exponent, bounds, thresholds) are written as `null`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collocation::Scheme;
use crate::dynamics::{DynamicsModel, LinearSystem, ModelRegistry, LINEAR_X0};
use crate::error::{Error, Result};
use crate::nlp::SolverSettings;
use crate::norm::NormConfig;
use crate::ocp::{BolzaOcp, QuadraticInputCost};
use crate::refinement::{QuadSettingsConfig, RefinementConfig, TighteningConfig, ToleranceMode};
use crate::sim::closed_loop::{ClosedLoopSetup, TriggerMode};
use crate::sim::noise::{sample_noise, seeded_rng, NOISE_PERIOD};
use crate::sim::open_loop::{OpenLoopCase, OpenLoopSetup};
use crate::sim::plant::PlantSimulator;
use crate::tightening::{BoxSet, TighteningDirection, TighteningParams, UpsilonMetric};
use crate::triggering::{scaling_weight_bound, ModelBounds, QetMode, ToleranceBound, TriggerConfig, WeightBoundMode};

/// `f64` where `null` means `+∞`.
pub mod inf_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Interval bound pair; `null` entries are unbounded.
pub type Bound = [Option<f64>; 2];

fn to_box(bounds: &[Bound]) -> Result<BoxSet> {
    let lo = bounds.iter().map(|b| b[0].unwrap_or(f64::NEG_INFINITY)).collect();
    let hi = bounds.iter().map(|b| b[1].unwrap_or(f64::INFINITY)).collect();
    BoxSet::new(lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    #[serde(with = "inf_f64")]
    pub p: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub mode: ToleranceMode,
    pub values: Vec<f64>,
    /// Weight bound `ŵ` for relative tolerances; derived from the state box when absent.
    #[serde(default)]
    pub weight_bound: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Overrides the model's disturbance bound.
    pub v_hat: Option<f64>,
    pub theta_hat: Option<f64>,
    pub period: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { v_hat: None, theta_hat: None, period: NOISE_PERIOD, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinementSpec {
    pub max_iterations: usize,
    pub max_points_per_segment: usize,
    pub quadrature: QuadSettingsConfig,
}

impl Default for RefinementSpec {
    fn default() -> Self {
        Self { max_iterations: 15, max_points_per_segment: 4, quadrature: QuadSettingsConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TighteningSpec {
    pub enabled: bool,
    pub direction: TighteningDirection,
    pub metric: UpsilonMetric,
    pub max_iterations: usize,
}

impl Default for TighteningSpec {
    fn default() -> Self {
        Self { enabled: true, direction: TighteningDirection::Forward, metric: UpsilonMetric::PerAxis, max_iterations: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenLoopSpec {
    pub cases: Vec<OpenLoopCase>,
    /// Constant plant disturbance; defaults to zero.
    #[serde(default)]
    pub disturbance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub deltas: Vec<f64>,
    /// Scalar tolerances applied to every state; `null` is an infinite tolerance.
    pub tolerances: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    pub scheme: Scheme,
    /// Prediction horizon `T_op`.
    pub horizon: f64,
    pub sim_time: f64,
    pub mesh_segments: usize,
    pub initial_state: Vec<f64>,
    #[serde(default)]
    pub terminal_state: Option<Vec<f64>>,
    #[serde(default)]
    pub state_bounds: Option<Vec<Bound>>,
    #[serde(default)]
    pub input_bounds: Option<Vec<Bound>>,
    #[serde(default = "one")]
    pub input_weight: f64,
    pub tolerance: ToleranceSpec,
    #[serde(with = "inf_f64")]
    pub delta: f64,
    pub norm: NormSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub trigger: TriggerMode,
    #[serde(default = "qet_default")]
    pub qet_mode: QetMode,
    #[serde(default = "one_ms")]
    pub monitor_step_ms: u64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub refinement: RefinementSpec,
    #[serde(default)]
    pub tightening: TighteningSpec,
    #[serde(default)]
    pub open_loop: Option<OpenLoopSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn one() -> f64 {
    1.0
}

fn one_ms() -> u64 {
    1
}

fn qet_default() -> QetMode {
    QetMode::Absolute
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Two-link arm regulated to the origin from a 0.6 rad elbow offset.
    pub fn arm_default() -> Self {
        let n = 4;
        Self {
            model: "two_link_arm".into(),
            scheme: Scheme::Trapezoidal,
            horizon: 4.0,
            sim_time: 8.0,
            mesh_segments: 40,
            initial_state: vec![0.0, 0.0, 0.0, 0.6],
            terminal_state: Some(vec![0.0; n]),
            state_bounds: Some(vec![[Some(-0.3), Some(0.3)], [None, None], [None, None], [None, None]]),
            input_bounds: None,
            input_weight: 1.0,
            tolerance: ToleranceSpec { mode: ToleranceMode::Absolute, values: vec![1e-3; n], weight_bound: None },
            delta: 7e-3,
            norm: NormSpec { p: 1.0, weights: None },
            noise: NoiseSpec::default(),
            trigger: TriggerMode::Etc,
            qet_mode: QetMode::Absolute,
            monitor_step_ms: 1,
            solver: SolverSettings::default(),
            refinement: RefinementSpec::default(),
            tightening: TighteningSpec::default(),
            open_loop: None,
            sweep: None,
        }
    }

    /// The autonomous linear system compared under two schemes.
    pub fn linear_default() -> Self {
        let d = LinearSystem::paper_example().disturbance();
        Self {
            model: "linear2d".into(),
            scheme: Scheme::ForwardEuler,
            horizon: 6.0,
            sim_time: 6.0,
            mesh_segments: 4,
            initial_state: LINEAR_X0.to_vec(),
            terminal_state: None,
            state_bounds: None,
            input_bounds: None,
            input_weight: 0.0,
            tolerance: ToleranceSpec { mode: ToleranceMode::Absolute, values: vec![0.1; 2], weight_bound: None },
            delta: 5.0,
            norm: NormSpec { p: f64::INFINITY, weights: None },
            noise: NoiseSpec::default(),
            trigger: TriggerMode::Etc,
            qet_mode: QetMode::Absolute,
            monitor_step_ms: 1,
            solver: SolverSettings::default(),
            refinement: RefinementSpec::default(),
            tightening: TighteningSpec { enabled: false, ..Default::default() },
            open_loop: Some(OpenLoopSpec {
                cases: vec![
                    OpenLoopCase { scheme: Scheme::ForwardEuler, delta: 5.0, eta_hat: 0.1 },
                    OpenLoopCase { scheme: Scheme::HermiteSimpson, delta: 0.5, eta_hat: 0.045 },
                ],
                disturbance: Some(d.as_slice().to_vec()),
            }),
            sweep: None,
        }
    }

    pub fn norm_config(&self, n: usize) -> Result<NormConfig> {
        let w = self.norm.weights.clone().unwrap_or_else(|| vec![1.0; n]);
        if w.len() != n {
            return Err(cfg_err("norm weights must match the state dimension"));
        }
        NormConfig::new(self.norm.p, w).map_err(|e| cfg_err(e.to_string()))
    }

    /// Model with the configured noise overrides applied.
    pub fn build_model(&self, registry: &ModelRegistry) -> Result<DynamicsModel> {
        let mut model = registry.build(&self.model, self.norm.p).map_err(|e| cfg_err(e.to_string()))?;
        if let Some(v) = self.noise.v_hat {
            model.noise.v_hat = v;
        }
        if let Some(t) = self.noise.theta_hat {
            model.noise.theta_hat = t;
        }
        if !(model.noise.v_hat >= 0.0 && model.noise.theta_hat >= 0.0) {
            return Err(cfg_err("noise bounds must be non-negative"));
        }
        Ok(model)
    }

    /// Checks everything that does not need a solve.
    pub fn validate(&self, registry: &ModelRegistry) -> Result<()> {
        let model = self.build_model(registry)?;
        let (n, m) = (model.state_dim, model.input_dim);
        self.norm_config(n)?;
        let positive = [("horizon", self.horizon), ("sim_time", self.sim_time), ("delta", self.delta)];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(cfg_err(format!("{name} must be positive")));
            }
        }
        if self.mesh_segments == 0 {
            return Err(cfg_err("mesh_segments must be at least 1"));
        }
        if self.initial_state.len() != n {
            return Err(cfg_err(format!("initial_state needs {n} entries")));
        }
        if self.terminal_state.as_ref().is_some_and(|x| x.len() != n) {
            return Err(cfg_err(format!("terminal_state needs {n} entries")));
        }
        if self.state_bounds.as_ref().is_some_and(|b| b.len() != n) {
            return Err(cfg_err(format!("state_bounds needs {n} entries")));
        }
        if self.input_bounds.as_ref().is_some_and(|b| b.len() != m) {
            return Err(cfg_err(format!("input_bounds needs {m} entries")));
        }
        if self.tolerance.values.len() != n {
            return Err(cfg_err(format!("tolerance.values needs {n} entries")));
        }
        if self.noise.period <= 0.0 {
            return Err(cfg_err("noise.period must be positive"));
        }
        if let Some(ol) = &self.open_loop {
            if ol.cases.is_empty() {
                return Err(cfg_err("open_loop.cases must not be empty"));
            }
            if ol.disturbance.as_ref().is_some_and(|d| d.len() != n) {
                return Err(cfg_err(format!("open_loop.disturbance needs {n} entries")));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.deltas.is_empty() || sw.tolerances.is_empty() {
                return Err(cfg_err("sweep lists must not be empty"));
            }
        }
        self.refinement_config().map_err(|e| cfg_err(e.to_string()))?;
        Ok(())
    }

    pub fn refinement_config(&self) -> Result<RefinementConfig> {
        let cfg = RefinementConfig {
            mode: self.tolerance.mode,
            tolerance: self.tolerance.values.clone(),
            max_iterations: self.refinement.max_iterations,
            max_points_per_segment: self.refinement.max_points_per_segment,
            quadrature: self.refinement.quadrature,
            solver: self.solver,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn state_box(&self, n: usize) -> Result<BoxSet> {
        match &self.state_bounds {
            Some(b) => to_box(b),
            None => Ok(BoxSet::unbounded(n)),
        }
    }

    /// Per-segment tolerance `ξ̂` and the matching bound for the minimum IUT.
    fn tolerance_bound(&self, model: &DynamicsModel, x_box: &BoxSet) -> Result<ToleranceBound> {
        Ok(match self.tolerance.mode {
            ToleranceMode::Absolute => ToleranceBound::Absolute { eta_hat: self.tolerance.values.clone() },
            ToleranceMode::Relative => {
                let w = match &self.tolerance.weight_bound {
                    Some(w) => w.clone(),
                    None => scaling_weight_bound(x_box, None, model.lipschitz_x, WeightBoundMode::Lipschitz)?,
                };
                ToleranceBound::Relative { eps_hat: self.tolerance.values.clone(), w_hat: w }
            }
        })
    }

    pub fn closed_loop_setup(&self, registry: &ModelRegistry) -> Result<ClosedLoopSetup> {
        self.validate(registry)?;
        let model = self.build_model(registry)?;
        let n = model.state_dim;
        let norm = self.norm_config(n)?;
        let x_box = self.state_box(n)?;
        let u_box = match &self.input_bounds {
            Some(b) => to_box(b)?,
            None => BoxSet::unbounded(model.input_dim),
        };
        let ocp = BolzaOcp {
            model: model.clone(),
            t0: 0.0,
            tf: self.horizon,
            stage_cost: Some(std::sync::Arc::new(QuadraticInputCost { weight: self.input_weight })),
            boundary_cost: None,
            state_box: x_box.clone(),
            input_box: u_box,
            boundary_constraints: None,
            terminal_state: self.terminal_state.clone(),
            initial_state: self.initial_state.clone(),
        };
        ocp.validate()?;
        let bound = self.tolerance_bound(&model, &x_box)?;
        let model_bounds = ModelBounds {
            lipschitz_x: model.lipschitz_x,
            v_hat: model.noise.v_hat,
            theta_hat: model.noise.theta_hat,
        };
        let tightening = self.tightening.enabled.then(|| TighteningConfig {
            params: TighteningParams {
                xi_hat: bound.xi_hat(),
                norm: norm.clone(),
                lipschitz_x: model.lipschitz_x,
                f_bound: model.f_bound,
                v_hat: model.noise.v_hat,
                theta_hat: model.noise.theta_hat,
                delta: self.delta,
            },
            direction: self.tightening.direction,
            metric: self.tightening.metric,
            max_iterations: self.tightening.max_iterations,
        });
        let mut plant = PlantSimulator::new(model.clone());
        let end = self.sim_time + self.horizon;
        plant.disturbance = sample_noise(model.noise.v_hat, &norm, 0.0, end, self.noise.period, &mut seeded_rng(self.noise.seed, 1));
        plant.measurement =
            sample_noise(model.noise.theta_hat, &norm, 0.0, end, self.noise.period, &mut seeded_rng(self.noise.seed, 2));
        plant.running_cost = ocp.stage_cost.clone();
        Ok(ClosedLoopSetup {
            ocp,
            scheme: self.scheme,
            mesh_segments: self.mesh_segments,
            refinement: self.refinement_config()?,
            tightening,
            trigger: TriggerConfig::new(self.delta, norm, self.horizon)?,
            mode: self.trigger,
            qet_mode: self.qet_mode,
            tolerance_bound: bound,
            model_bounds,
            sim_time: self.sim_time,
            monitor_step_ms: self.monitor_step_ms,
            plant,
        })
    }

    pub fn open_loop_setup(&self, registry: &ModelRegistry) -> Result<OpenLoopSetup> {
        self.validate(registry)?;
        let model = self.build_model(registry)?;
        let n = model.state_dim;
        let spec = self.open_loop.clone().unwrap_or_else(|| OpenLoopSpec {
            cases: vec![OpenLoopCase { scheme: self.scheme, delta: self.delta, eta_hat: self.tolerance.values[0] }],
            disturbance: None,
        });
        Ok(OpenLoopSetup {
            model_bounds: ModelBounds {
                lipschitz_x: model.lipschitz_x,
                v_hat: model.noise.v_hat,
                theta_hat: model.noise.theta_hat,
            },
            initial_state: self.initial_state.clone(),
            horizon: self.horizon,
            mesh_segments: self.mesh_segments,
            norm: self.norm_config(n)?,
            disturbance: spec.disturbance.unwrap_or_else(|| vec![0.0; n]),
            cases: spec.cases,
            solver: self.solver,
            quad: self.refinement.quadrature.into(),
            model,
        })
    }
}
