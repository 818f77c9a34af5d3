//! Full-factorial closed-loop runs over thresholds and tolerances.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dynamics::ModelRegistry;
use crate::error::{invalid, Result};
use crate::sim::closed_loop::run_closed_loop;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub delta: f64,
    /// `None` is an infinite tolerance.
    pub tolerance: Option<f64>,
    pub updates: usize,
    pub nlp_iterations: usize,
    pub wall_time_s: f64,
    pub cost: f64,
    pub mean_iut: f64,
    pub error: Option<String>,
}

/// The config used for one cell.
pub fn cell_config(base: &RunConfig, delta: f64, tolerance: Option<f64>) -> RunConfig {
    let mut cfg = base.clone();
    cfg.delta = delta;
    let n = cfg.tolerance.values.len();
    cfg.tolerance.values = vec![tolerance.unwrap_or(f64::INFINITY); n];
    cfg.sweep = None;
    cfg
}

/// Runs every `(Δ, tolerance)` pair in parallel; a failing cell is recorded and
/// the sweep continues. Rows are ordered by `Δ`, then tolerance.
pub fn sweep_thresholds(base: &RunConfig, deltas: &[f64], tolerances: &[Option<f64>], registry: &ModelRegistry) -> Result<Vec<SweepCell>> {
    if deltas.is_empty() || tolerances.is_empty() {
        return Err(invalid("sweep lists must not be empty"));
    }
    let cells: Vec<(f64, Option<f64>)> = deltas.iter().flat_map(|&d| tolerances.iter().map(move |&t| (d, t))).collect();
    Ok(cells
        .par_iter()
        .map(|&(delta, tolerance)| {
            let start = Instant::now();
            let mut cell = SweepCell {
                delta,
                tolerance,
                updates: 0,
                nlp_iterations: 0,
                wall_time_s: 0.0,
                cost: f64::NAN,
                mean_iut: f64::NAN,
                error: None,
            };
            match cell_config(base, delta, tolerance).closed_loop_setup(registry).and_then(|s| run_closed_loop(&s)) {
                Ok(log) => {
                    cell.updates = log.updates.len();
                    cell.nlp_iterations = log.total_nlp_iterations();
                    cell.cost = log.cost;
                    cell.mean_iut = log.mean_iut();
                    cell.error = log.failure.map(|e| e.to_string());
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell.wall_time_s = start.elapsed().as_secs_f64();
            cell
        })
        .collect())
}
