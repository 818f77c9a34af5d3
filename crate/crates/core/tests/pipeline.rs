//! Transcription, solve, certification and refinement working together.

use std::collections::BTreeMap;

use certmpc::collocation::{certify, collocation_points, collocation_residual, scaling_weights, Scheme};
use certmpc::config::RunConfig;
use certmpc::dynamics::{builtin_linear_model, builtin_two_link_arm, LinearSystem, ModelRegistry, LINEAR_X0};
use certmpc::mesh::Mesh;
use certmpc::nlp::{solve_nlp, transcribe, SolveStatus, SolverSettings};
use certmpc::ocp::{BolzaOcp, QuadraticInputCost};
use certmpc::quadrature::QuadSettings;
use certmpc::refinement::{refine, refine_with_tightening, Phase, RefinementConfig, ToleranceMode};
use certmpc::sim::open_loop::approximate;
use certmpc::tightening::BoxSet;
use nalgebra::DVector;

fn arm_ocp(x0: Vec<f64>, bounded: bool) -> BolzaOcp {
    let model = builtin_two_link_arm();
    let mut ocp = BolzaOcp::feasibility(model, 0.0, 4.0, x0).unwrap();
    ocp.stage_cost = Some(std::sync::Arc::new(QuadraticInputCost { weight: 1.0 }));
    ocp.terminal_state = Some(vec![0.0; 4]);
    if bounded {
        ocp.state_box = BoxSet::new(
            vec![-0.3, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
            vec![0.3, f64::INFINITY, f64::INFINITY, f64::INFINITY],
        )
        .unwrap();
    }
    ocp
}

#[test]
fn mesh_examples() {
    let m = Mesh::uniform(0.0, 6.0, 4).unwrap();
    assert_eq!(m.points(), &[0.0, 1.5, 3.0, 4.5, 6.0]);
    let p = Mesh::new(vec![0.0, 0.5, 1.5, 2.0]).unwrap().parameters();
    assert_eq!((p.h, p.sigma, p.k), (1.0, 0.5, 3));
    let fine = Mesh::new(vec![0.0, 1.5, 3.0]).unwrap().subdivide(&BTreeMap::from([(1, 2)])).unwrap();
    assert_eq!(fine.points(), &[0.0, 1.5, 2.0, 2.5, 3.0]);
    assert_eq!(m.covering_prefix(1.6).unwrap(), 0..2);
    assert_eq!(m.covering_prefix(0.0).unwrap(), 0..1);
    assert_eq!(m.covering_prefix(6.0).unwrap(), 0..4);
    assert_eq!(collocation_points(Scheme::HermiteSimpson, 0.0, 1.5), vec![0.0, 0.75, 1.5]);
}

#[test]
fn forward_euler_error_matches_hand_expansion() {
    // one FE segment of x' = Ax: ε(s) = -A² x_k s, so η_i = |(A² x_k)_i| ℓ² / 2
    let model = builtin_linear_model(f64::INFINITY);
    let sys = LinearSystem::paper_example();
    let traj = approximate(&model, &LINEAR_X0, 1.5, 1, Scheme::ForwardEuler, &SolverSettings::default()).unwrap();
    let cert = certify(&traj, &model, &QuadSettings::default()).unwrap();
    let a2x = &sys.a * &sys.a * DVector::from_column_slice(&LINEAR_X0);
    for i in 0..2 {
        let want = a2x[i].abs() * 1.5 * 1.5 / 2.0;
        assert!((cert.eta[(0, i)] - want).abs() < 1e-9 * want.max(1.0), "state {i}");
    }
}

#[test]
fn weights_are_the_largest_node_magnitudes() {
    let model = builtin_linear_model(f64::INFINITY);
    let traj = approximate(&model, &LINEAR_X0, 6.0, 4, Scheme::ForwardEuler, &SolverSettings::default()).unwrap();
    let w = scaling_weights(&traj);
    let mesh = traj.mesh().clone();
    let mut want = [0.0f64; 2];
    for &t in &mesh.points()[..mesh.num_segments()] {
        let x = traj.eval_state(t).unwrap();
        let d = traj.eval_state_derivative(t).unwrap();
        for i in 0..2 {
            want[i] = want[i].max(x[i].abs()).max(d[i].abs());
        }
    }
    assert_eq!(w.as_slice(), &want);
}

#[test]
fn autonomous_transcription_is_solved_to_high_accuracy() {
    let model = builtin_linear_model(f64::INFINITY);
    for scheme in [Scheme::ForwardEuler, Scheme::Trapezoidal, Scheme::HermiteSimpson] {
        let traj = approximate(&model, &LINEAR_X0, 6.0, 4, scheme, &SolverSettings::default()).unwrap();
        assert!(collocation_residual(&traj, &model) <= 1e-10, "{scheme:?}");
    }
}

#[test]
fn arm_transcription_sizes_and_warm_start() {
    let ocp = arm_ocp(vec![0.0, 0.0, 0.0, 0.6], false);
    let k = 20;
    let mesh = Mesh::uniform(0.0, 4.0, k).unwrap();
    let nlp = transcribe(&ocp, &mesh, Scheme::Trapezoidal, None).unwrap();
    assert_eq!(nlp.num_state_vars(), 4 * (k + 1));
    assert_eq!(nlp.num_input_vars(), 2 * (k + 1));
    let s = SolverSettings::default();
    let sol = solve_nlp(&nlp, None, &s).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(collocation_residual(&sol.trajectory, &ocp.model) <= 1e-8);
    let again = solve_nlp(&nlp, Some(&sol), &s).unwrap();
    assert!(again.iterations <= 2, "{} iterations", again.iterations);
}

#[test]
fn arm_at_rest_needs_no_input() {
    let ocp = arm_ocp(vec![0.0; 4], true);
    let mesh = Mesh::uniform(0.0, 4.0, 10).unwrap();
    let nlp = transcribe(&ocp, &mesh, Scheme::Trapezoidal, None).unwrap();
    let sol = solve_nlp(&nlp, None, &SolverSettings::default()).unwrap();
    assert!(sol.objective.abs() < 1e-14);
    for t in [0.0, 1.3, 4.0] {
        assert!(sol.trajectory.eval_input(t).unwrap().amax() < 1e-8);
    }
}

#[test]
fn loose_tolerance_stops_on_the_initial_mesh() {
    let model = builtin_linear_model(f64::INFINITY);
    let ocp = BolzaOcp::feasibility(model, 0.0, 6.0, LINEAR_X0.to_vec()).unwrap();
    let mesh = Mesh::uniform(0.0, 6.0, 4).unwrap();
    let cfg = RefinementConfig::new(ToleranceMode::Absolute, vec![4.0; 2]).unwrap();
    let rep = refine(&ocp, &mesh, Scheme::ForwardEuler, &cfg).unwrap();
    assert_eq!(rep.iterations.len(), 1);
    let inf = RefinementConfig::new(ToleranceMode::Absolute, vec![f64::INFINITY; 2]).unwrap();
    let rep = refine(&ocp, &mesh, Scheme::HermiteSimpson, &inf).unwrap();
    assert_eq!(rep.iterations.len(), 1);
    assert_eq!(rep.mesh().num_segments(), 4);
}

#[test]
fn refinement_exit_meets_the_tolerance() {
    let ocp = arm_ocp(vec![0.0, 0.0, 0.0, 0.6], false);
    let mesh = Mesh::uniform(0.0, 4.0, 8).unwrap();
    let tol = vec![2e-4; 4];
    let cfg = RefinementConfig::new(ToleranceMode::Absolute, tol.clone()).unwrap();
    let rep = refine(&ocp, &mesh, Scheme::Trapezoidal, &cfg).unwrap();
    assert!(rep.iterations.len() > 1);
    for k in 0..rep.certificate.num_segments() {
        for i in 0..4 {
            assert!(rep.certificate.eta[(k, i)] <= tol[i]);
        }
    }
    assert!(collocation_residual(&rep.solution.trajectory, &ocp.model) <= 1e-8);
    // meshes only ever grow
    for w in rep.iterations.windows(2) {
        assert!(w[1].mesh.num_segments() >= w[0].mesh.num_segments());
    }
}

#[test]
fn phase_two_is_a_no_op_without_state_bounds() {
    let cfg = RunConfig::arm_default();
    let setup = cfg.closed_loop_setup(&ModelRegistry::default()).unwrap();
    let mut ocp = setup.ocp.clone();
    ocp.state_box = BoxSet::unbounded(4);
    let mesh = Mesh::uniform(0.0, 4.0, 40).unwrap();
    let rep =
        refine_with_tightening(&ocp, &mesh, Scheme::Trapezoidal, &setup.refinement, setup.tightening.as_ref().unwrap(), None)
            .unwrap();
    assert_eq!(rep.tightening_iterations, 0);
    assert!(rep.iterations.iter().all(|r| r.phase == Phase::Refine));
}

#[test]
fn phase_two_keeps_the_arm_prediction_inside_the_tightened_set() {
    let cfg = RunConfig::arm_default();
    let setup = cfg.closed_loop_setup(&ModelRegistry::default()).unwrap();
    let tc = setup.tightening.as_ref().unwrap();
    let mesh = Mesh::uniform(0.0, 4.0, 40).unwrap();
    let rep = refine_with_tightening(&setup.ocp, &mesh, Scheme::Trapezoidal, &setup.refinement, tc, None).unwrap();
    assert!(rep.tightening_iterations > 0);
    assert!(rep.iterations.iter().any(|r| r.phase == Phase::Tighten));
    // every sample of the prediction lies in 𝕏 ⊖ 𝔹_{r(s)}
    let traj = &rep.solution.trajectory;
    let m = traj.mesh().clone();
    for j in 0..=4000 {
        let t = 4.0 * j as f64 / 4000.0;
        let r = tc.params.radius_at(&m, t).unwrap();
        let w = traj.eval_state(t).unwrap()[0];
        assert!(w.abs() <= 0.3 - r + 1e-9, "t={t} w={w} r={r}");
    }
    for (k, b) in rep.node_boxes.iter().enumerate() {
        assert!(b.is_subset_of(&setup.ocp.state_box), "node {k}");
    }
}

#[test]
fn interior_trajectory_needs_no_tightening() {
    let cfg = RunConfig::arm_default();
    let setup = cfg.closed_loop_setup(&ModelRegistry::default()).unwrap();
    let mut ocp = setup.ocp.clone();
    ocp.initial_state = vec![0.0, 0.0, 0.0, 0.05];
    let mesh = Mesh::uniform(0.0, 4.0, 40).unwrap();
    let rep =
        refine_with_tightening(&ocp, &mesh, Scheme::Trapezoidal, &setup.refinement, setup.tightening.as_ref().unwrap(), None)
            .unwrap();
    assert_eq!(rep.tightening_iterations, 0);
}
