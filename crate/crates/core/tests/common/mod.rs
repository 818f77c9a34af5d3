//! Independent oracles shared by the oracle tests and the acceptance runner.
//! Each returns a measured discrepancy so callers decide how to report it.
#![allow(dead_code)]

use certmpc::dynamics::{builtin_linear_model, LinearSystem, LINEAR_X0};
use certmpc::norm::{p_norm, NormConfig};
use certmpc::quadrature::{integrate, QuadSettings};
use certmpc::sim::{integrate_plant, NoiseSignal, PlantSimulator};
use certmpc::tightening::{pontryagin_box_minus_ball, signed_distance, BoxSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn midpoint_rule(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * t + v)
}

/// Worst relative error of the adaptive quadrature against a 10⁵-point
/// midpoint rule, over random polynomials `p` and `|p|`.
pub fn quadrature_worst_relative_error(cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = QuadSettings::default();
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let deg = rng.random_range(0..=7);
        let c: Vec<f64> = (0..=deg).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = rng.random_range(-2.0..1.0);
        let b = a + rng.random_range(0.1..3.0);
        let got = integrate(
            |t, out| {
                let v = poly(&c, t);
                out[0] = v;
                out[1] = v.abs();
            },
            2,
            a,
            b,
            &[],
            &s,
        )
        .unwrap();
        let plain = midpoint_rule(|t| poly(&c, t), a, b, 100_000);
        let abs = midpoint_rule(|t| poly(&c, t).abs(), a, b, 100_000);
        // signed integrals can cancel, so both are scaled by ∫|p|
        let scale = abs.max(1e-3);
        worst = worst.max((got[0] - plain).abs() / scale).max((got[1] - abs).abs() / scale);
    }
    worst
}

/// Boundary points of `{b : ‖b‖_M ≤ r}` at 720 angles, including the exact axis points.
fn ball_boundary(r: f64, norm: &NormConfig) -> Vec<[f64; 2]> {
    (0..720)
        .map(|j| {
            let th = j as f64 * std::f64::consts::TAU / 720.0;
            let d = match j % 360 {
                0 => [th.cos().round(), 0.0],
                180 => [0.0, th.sin().round()],
                _ => [th.cos(), th.sin()],
            };
            let len = norm.norm(&d);
            [r * d[0] / len, r * d[1] / len]
        })
        .collect()
}

/// Membership disagreements between the closed-form box ⊖ ball and a
/// brute-force check on a 201² grid, over random instances.
pub fn pontryagin_disagreements(instances: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut disagreements = 0;
    for _ in 0..instances {
        let p = [1.0, 2.0, f64::INFINITY, rng.random_range(1.1..6.0)][rng.random_range(0..4)];
        let norm = NormConfig::new(p, vec![rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)]).unwrap();
        let lo = [rng.random_range(-2.0..0.0), rng.random_range(-2.0..0.0)];
        let hi = [lo[0] + rng.random_range(0.5..3.0), lo[1] + rng.random_range(0.5..3.0)];
        let b = BoxSet::new(lo.to_vec(), hi.to_vec()).unwrap();
        let r = rng.random_range(0.0..0.6);
        let shrunk = pontryagin_box_minus_ball(&b, r, &norm).ok();
        let offsets = ball_boundary(r, &norm);
        for i in 0..201 {
            for j in 0..201 {
                let x = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / 200.0,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / 200.0,
                ];
                let fast = shrunk.as_ref().is_some_and(|s| s.contains(&x));
                // x ∈ box ⊖ ball iff x + b ∈ box for every b on the ball's boundary
                let brute = offsets.iter().all(|o| b.contains(&[x[0] + o[0], x[1] + o[1]]));
                if fast != brute {
                    disagreements += 1;
                }
            }
        }
    }
    disagreements
}

/// (sign mismatches, worst |sd| gap) of the signed distance against a dense
/// boundary sample, for p ∈ {1, 2, ∞}.
pub fn signed_distance_discrepancy() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let b = BoxSet::new(vec![-1.0, -0.5], vec![1.0, 1.5]).unwrap();
    let mut boundary = Vec::new();
    for i in 0..=400 {
        let s = i as f64 / 400.0;
        boundary.push([-1.0 + 2.0 * s, -0.5]);
        boundary.push([-1.0 + 2.0 * s, 1.5]);
        boundary.push([-1.0, -0.5 + 2.0 * s]);
        boundary.push([1.0, -0.5 + 2.0 * s]);
    }
    let (mut sign_errors, mut worst) = (0, 0.0f64);
    for p in [1.0, 2.0, f64::INFINITY] {
        for _ in 0..400 {
            let x = [rng.random_range(-2.5..2.5), rng.random_range(-2.0..3.0)];
            let sd = signed_distance(&x, &b, p);
            if (sd <= 0.0) != b.contains(&x) {
                sign_errors += 1;
            }
            let near = boundary
                .iter()
                .map(|y| p_norm(&[x[0] - y[0], x[1] - y[1]], p))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((sd.abs() - near).abs());
        }
    }
    (sign_errors, worst)
}

/// Boundary sample spacing bounds the grid oracle's own error.
pub const SIGNED_DISTANCE_GRID_TOL: f64 = 5e-3;

/// Max deviation of the plant integrator from `e^{At}x₀ + A⁻¹(e^{At} − I)d`.
pub fn lti_max_deviation() -> f64 {
    let sys = LinearSystem::paper_example();
    let d = sys.disturbance();
    let mut sim = PlantSimulator::new(builtin_linear_model(f64::INFINITY));
    sim.disturbance = NoiseSignal::constant(d.as_slice().to_vec());
    let tr = integrate_plant(&sim, &LINEAR_X0, None, 0.0, 6.0).unwrap();
    let x0 = DVector::from_column_slice(&LINEAR_X0);
    let a_inv = sys.a.clone().try_inverse().unwrap();
    let eye = DMatrix::<f64>::identity(2, 2);
    let mut worst: f64 = 0.0;
    for (t, x) in tr.times.iter().zip(&tr.states) {
        let e = (&sys.a * *t).exp();
        let exact = &e * &x0 + &a_inv * (&e - &eye) * &d;
        worst = worst.max((exact[0] - x[0]).abs()).max((exact[1] - x[1]).abs());
    }
    worst
}
