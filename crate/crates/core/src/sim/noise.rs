//! Bounded exogenous signals: piecewise-constant samples drawn uniformly from a norm ball.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma};

use crate::norm::NormConfig;

/// Default hold period of a sampled signal, in seconds.
pub const NOISE_PERIOD: f64 = 0.01;

/// Piecewise-constant signal on `[t0, t0 + period·len)`; the last value is held afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSignal {
    dim: usize,
    t0: f64,
    period: f64,
    values: Vec<Vec<f64>>,
}

impl NoiseSignal {
    pub fn zero(dim: usize) -> Self {
        Self { dim, t0: 0.0, period: f64::INFINITY, values: vec![vec![0.0; dim]] }
    }

    pub fn constant(v: Vec<f64>) -> Self {
        Self { dim: v.len(), t0: 0.0, period: f64::INFINITY, values: vec![v] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| *x == 0.0))
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    fn index(&self, t: f64) -> usize {
        if !self.period.is_finite() || t <= self.t0 {
            return 0;
        }
        (((t - self.t0) / self.period).floor() as usize).min(self.values.len() - 1)
    }

    pub fn at(&self, t: f64) -> &[f64] {
        &self.values[self.index(t)]
    }

    /// Switching instants strictly inside `(a, b)`.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        if !self.period.is_finite() || self.values.len() < 2 {
            return Vec::new();
        }
        let first = ((a - self.t0) / self.period).floor().max(0.0) as usize + 1;
        (first..self.values.len())
            .map(|j| self.t0 + j as f64 * self.period)
            .take_while(|&t| t < b)
            .filter(|&t| t > a)
            .collect()
    }
}

/// Uniform sample from the unit `p`-ball in `n` dimensions.
///
/// Uses the generalized-Gaussian construction: with `|g_i|^p ~ Gamma(1/p)`
/// and `z ~ Exp(1)`, `g / (‖g‖_p^p + z)^{1/p}` is uniform in the ball.
pub fn unit_ball_sample<R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    if p.is_infinite() {
        return (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    }
    let gamma = Gamma::new(1.0 / p, 1.0).expect("valid shape");
    let g: Vec<f64> = (0..n)
        .map(|_| {
            let mag = gamma.sample(rng).powf(1.0 / p);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let z: f64 = -(1.0 - rng.random::<f64>()).ln();
    let s = (g.iter().map(|v| v.abs().powf(p)).sum::<f64>() + z).powf(1.0 / p);
    g.into_iter().map(|v| v / s).collect()
}

/// Uniform sample from `{v : ‖v‖_M ≤ radius}`.
pub fn ball_sample<R: Rng>(radius: f64, norm: &NormConfig, rng: &mut R) -> Vec<f64> {
    let z = unit_ball_sample(norm.dim(), norm.p, rng);
    z.iter().enumerate().map(|(i, v)| radius * v * norm.axis_extent(i)).collect()
}

/// Draws a signal on `[t0, t1]` held constant over `period`; deterministic in `rng`.
pub fn sample_noise<R: Rng>(radius: f64, norm: &NormConfig, t0: f64, t1: f64, period: f64, rng: &mut R) -> NoiseSignal {
    if radius == 0.0 {
        return NoiseSignal::zero(norm.dim());
    }
    let count = (((t1 - t0) / period).ceil() as usize).max(1);
    let values = (0..count).map(|_| ball_sample(radius, norm, rng)).collect();
    NoiseSignal { dim: norm.dim(), t0, period, values }
}

/// Independent, reproducible generator for stream `stream` of run `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_is_zero_signal() {
        let n = NormConfig::identity(1.0, 3);
        let s = sample_noise(0.0, &n, 0.0, 1.0, NOISE_PERIOD, &mut seeded_rng(1, 0));
        assert!(s.is_zero());
        assert_eq!(s.at(0.37), &[0.0; 3]);
    }

    #[test]
    fn samples_respect_the_bound() {
        for p in [1.0, 1.5, 2.0, f64::INFINITY] {
            let n = NormConfig::new(p, vec![1.0, 2.0, 0.5]).unwrap();
            let mut rng = seeded_rng(7, 0);
            for _ in 0..20_000 {
                let v = ball_sample(0.3, &n, &mut rng);
                assert!(n.norm(&v) <= 0.3 * (1.0 + 1e-12), "p={p}");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let n = NormConfig::identity(2.0, 2);
        let a = sample_noise(1.0, &n, 0.0, 2.0, NOISE_PERIOD, &mut seeded_rng(42, 1));
        let b = sample_noise(1.0, &n, 0.0, 2.0, NOISE_PERIOD, &mut seeded_rng(42, 1));
        let c = sample_noise(1.0, &n, 0.0, 2.0, NOISE_PERIOD, &mut seeded_rng(42, 2));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn hold_and_breaks() {
        let n = NormConfig::identity(2.0, 1);
        let s = sample_noise(1.0, &n, 0.0, 0.05, 0.01, &mut seeded_rng(3, 0));
        assert_eq!(s.values().len(), 5);
        assert_eq!(s.at(0.015), s.values()[1].as_slice());
        assert_eq!(s.at(9.0), s.values()[4].as_slice());
        assert_eq!(s.breakpoints(0.005, 0.03).len(), 2);
    }

    #[test]
    fn two_dim_disk_is_uniform() {
        // area fraction of the inner half-radius disk is 1/4
        let n = NormConfig::identity(2.0, 2);
        let mut rng = seeded_rng(9, 0);
        let inner = (0..40_000).filter(|_| n.norm(&ball_sample(1.0, &n, &mut rng)) < 0.5).count();
        assert!((inner as f64 / 40_000.0 - 0.25).abs() < 0.01);
    }
}
