//! Weighted p-norms `‖x‖_M = (Σ M_i |x_i|^p)^{1/p}` with diagonal `M`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    /// Exponent in `[1, ∞]`; `f64::INFINITY` selects the max-norm.
    pub p: f64,
    /// Positive diagonal weights, one per state.
    pub weights: Vec<f64>,
}

impl NormConfig {
    pub fn new(p: f64, weights: Vec<f64>) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(invalid(format!("norm exponent must be >= 1, got {p}")));
        }
        if weights.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(invalid("norm weights must be positive and finite"));
        }
        Ok(Self { p, weights })
    }

    /// Unweighted p-norm on `n` states.
    pub fn identity(p: f64, n: usize) -> Self {
        Self { p, weights: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_inf(&self) -> bool {
        self.p.is_infinite()
    }

    /// `‖x‖_M`.
    pub fn norm(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        if self.is_inf() {
            x.iter()
                .zip(&self.weights)
                .map(|(v, m)| m * v.abs())
                .fold(0.0, f64::max)
        } else if self.p == 1.0 {
            x.iter().zip(&self.weights).map(|(v, m)| m * v.abs()).sum()
        } else {
            let s: f64 = x
                .iter()
                .zip(&self.weights)
                .map(|(v, m)| m * v.abs().powf(self.p))
                .sum();
            s.powf(1.0 / self.p)
        }
    }

    /// Constant `c = max_i M_i^{1/p}` with `‖x‖_M ≤ c ‖x‖_p`, attained on a coordinate axis.
    pub fn induced_constant(&self) -> f64 {
        self.weights
            .iter()
            .map(|&m| self.axis_scale(m))
            .fold(0.0, f64::max)
    }

    /// Per-axis extent of the unit `M`-ball: `max |x_i|` over `‖x‖_M ≤ 1`, i.e. `M_i^{-1/p}`.
    pub fn axis_extent(&self, i: usize) -> f64 {
        1.0 / self.axis_scale(self.weights[i])
    }

    fn axis_scale(&self, m: f64) -> f64 {
        if self.is_inf() {
            m
        } else {
            m.powf(1.0 / self.p)
        }
    }
}

/// Unweighted p-norm.
pub fn p_norm(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        x.iter().fold(0.0, |a, v| a.max(v.abs()))
    } else if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Free-function form of [`NormConfig::norm`].
pub fn weighted_norm(x: &[f64], norm: &NormConfig) -> f64 {
    norm.norm(x)
}

/// Free-function form of [`NormConfig::induced_constant`].
pub fn induced_weight_norm(norm: &NormConfig) -> f64 {
    norm.induced_constant()
}

/// Induced matrix p-norm (row-major `a`, `rows × cols`).
///
/// Exact for p ∈ {1, 2, ∞}. Other exponents use the Riesz-Thorin bound
/// `‖A‖_p ≤ ‖A‖_1^{1/p} ‖A‖_∞^{1-1/p}`, which is an upper bound and
/// therefore still a valid Lipschitz constant.
pub fn induced_matrix_norm(a: &nalgebra::DMatrix<f64>, p: f64) -> f64 {
    let col_sum = (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let row_sum = (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if p.is_infinite() {
        row_sum
    } else if p == 1.0 {
        col_sum
    } else if p == 2.0 {
        a.clone().singular_values().iter().cloned().fold(0.0, f64::max)
    } else {
        col_sum.powf(1.0 / p) * row_sum.powf(1.0 - 1.0 / p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_one_norm() {
        let n = NormConfig::new(1.0, vec![2.0, 3.0]).unwrap();
        assert_eq!(n.norm(&[1.0, -1.0]), 5.0);
        assert_eq!(n.induced_constant(), 3.0);
    }

    #[test]
    fn identity_weights_match_plain_norm() {
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            let n = NormConfig::identity(p, 3);
            let x = [0.3, -2.0, 1.1];
            assert!((n.norm(&x) - p_norm(&x, p)).abs() < 1e-14);
            assert_eq!(n.induced_constant(), 1.0);
        }
    }

    #[test]
    fn inf_norm_limit() {
        let n = NormConfig::new(f64::INFINITY, vec![2.0, 5.0]).unwrap();
        assert_eq!(n.norm(&[1.0, -0.5]), 2.5);
        assert_eq!(n.induced_constant(), 5.0);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(NormConfig::new(2.0, vec![1.0, 0.0]).is_err());
        assert!(NormConfig::new(0.5, vec![1.0]).is_err());
    }

    #[test]
    fn matrix_norms() {
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[0.05, 0.5, 0.0, -0.5]);
        assert!((induced_matrix_norm(&a, f64::INFINITY) - 0.55).abs() < 1e-15);
        assert!((induced_matrix_norm(&a, 1.0) - 1.0).abs() < 1e-15);
    }
}
