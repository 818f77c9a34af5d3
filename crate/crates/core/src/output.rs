//! CSV writers. Column layouts are flat and headed so the files load directly into plotting tools.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::collocation::ErrorCertificate;
use crate::error::Result;
use crate::refinement::RefinementReport;
use crate::sim::closed_loop::ClosedLoopLog;
use crate::sim::open_loop::OpenLoopResult;
use crate::sim::sweep::SweepCell;

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

fn fmt(v: f64) -> String {
    // ryu-style shortest round-trip representation
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// `t, x…, x_tilde…, u…, delta_norm`.
pub fn write_trace(path: &Path, log: &ClosedLoopLog) -> Result<()> {
    let mut w = writer(path)?;
    let Some(first) = log.trace.first() else {
        w.flush()?;
        return Ok(());
    };
    let (n, m) = (first.x.len(), first.u.len());
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", n));
    header.extend(numbered("x_tilde", n));
    header.extend(numbered("u", m));
    header.push("delta_norm".into());
    w.write_record(&header)?;
    for r in &log.trace {
        let mut rec = vec![fmt(r.t)];
        rec.extend(r.x.iter().chain(&r.x_tilde).chain(&r.u).map(|v| fmt(*v)));
        rec.push(fmt(r.delta_norm));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per update.
pub fn write_updates(path: &Path, log: &ClosedLoopLog) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "k", "t_u", "reason", "tau_min", "tau_ct", "tau_ct_scaled", "tau_qet", "nlp_iters", "K_final", "tightening_iters",
        "max_delta", "cost_so_far",
    ])?;
    for u in &log.updates {
        w.write_record([
            u.index.to_string(),
            fmt(u.time),
            u.reason.label().to_string(),
            opt(u.trigger.tau_min),
            fmt(u.trigger.tau_ct),
            fmt(u.trigger.tau_ct_scaled),
            fmt(u.trigger.tau_qet),
            u.report.total_nlp_iterations().to_string(),
            u.report.mesh().num_segments().to_string(),
            u.report.tightening_iterations.to_string(),
            fmt(u.max_delta),
            fmt(u.cost_so_far),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `k, t_start, t_end, eta_i…, eps_rel_i…`.
pub fn write_certificate(path: &Path, cert: &ErrorCertificate) -> Result<()> {
    let mut w = writer(path)?;
    let n = cert.state_dim();
    let mut header = vec!["k".to_string(), "t_start".into(), "t_end".into()];
    header.extend(numbered("eta", n));
    header.extend(numbered("eps_rel", n));
    w.write_record(&header)?;
    for k in 0..cert.num_segments() {
        let (a, b) = cert.mesh.segment(k);
        let mut rec = vec![k.to_string(), fmt(a), fmt(b)];
        rec.extend((0..n).map(|i| fmt(cert.eta[(k, i)])));
        rec.extend((0..n).map(|i| fmt(cert.epsilon_rel[(k, i)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per refinement iteration: phase, mesh size, violation ratio, solver work.
pub fn write_refinement(path: &Path, report: &RefinementReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["iteration", "phase", "K", "max_ratio", "max_eta", "nlp_iters", "objective"])?;
    for it in &report.iterations {
        w.write_record([
            it.iteration.to_string(),
            it.phase.label().to_string(),
            it.mesh.num_segments().to_string(),
            fmt(it.max_ratio),
            fmt(it.certificate.max_eta()),
            it.nlp_iters.to_string(),
            fmt(it.objective),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Solution at mesh points with the state bounds imposed there.
pub fn write_solution(path: &Path, report: &RefinementReport) -> Result<()> {
    let mut w = writer(path)?;
    let traj = &report.solution.trajectory;
    let (n, m) = (traj.state_dim(), traj.input_dim());
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", n));
    header.extend(numbered("u", m));
    header.extend(numbered("lower", n));
    header.extend(numbered("upper", n));
    w.write_record(&header)?;
    let mut x = vec![0.0; n];
    let mut u = vec![0.0; m];
    for (j, &t) in traj.mesh().points().iter().enumerate() {
        traj.state_clamped(t, &mut x);
        traj.input_clamped(t, &mut u);
        let b = &report.node_boxes[j];
        let mut rec = vec![fmt(t)];
        rec.extend(x.iter().chain(&u).chain(&b.lower).chain(&b.upper).map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["delta", "tolerance", "updates", "nlp_iterations", "wall_time_s", "cost", "mean_iut", "error"])?;
    for c in cells {
        w.write_record([
            fmt(c.delta),
            c.tolerance.map(fmt).unwrap_or_else(|| "inf".into()),
            c.updates.to_string(),
            c.nlp_iterations.to_string(),
            fmt(c.wall_time_s),
            fmt(c.cost),
            fmt(c.mean_iut),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Open-loop trace: `t, x…, x_tilde…, delta_norm` for one scheme.
pub fn write_open_loop_trace(path: &Path, r: &OpenLoopResult) -> Result<()> {
    let mut w = writer(path)?;
    let n = r.trajectory.state_dim();
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", n));
    header.extend(numbered("x_tilde", n));
    header.push("delta_norm".into());
    w.write_record(&header)?;
    let mut xt = vec![0.0; n];
    for ((t, x), d) in r.plant.times.iter().zip(&r.plant.states).zip(&r.delta_norms) {
        r.trajectory.state_clamped(*t, &mut xt);
        let mut rec = vec![fmt(*t)];
        rec.extend(x.iter().chain(&xt).map(|v| fmt(*v)));
        rec.push(fmt(*d));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per scheme: certificate size, first event and the three time bounds.
pub fn write_open_loop_summary(path: &Path, results: &[OpenLoopResult]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "scheme", "delta", "eta_hat", "max_segment_eta", "first_event", "tau_min", "tau_qet", "tau_ct", "tau_ct_scaled",
    ])?;
    for r in results {
        w.write_record([
            r.case.scheme.label().to_string(),
            fmt(r.case.delta),
            fmt(r.case.eta_hat),
            fmt(r.max_segment_eta()),
            opt(r.first_event),
            opt(r.trigger.tau_min),
            fmt(r.trigger.tau_qet),
            fmt(r.trigger.tau_ct),
            fmt(r.trigger.tau_ct_scaled),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every closed-loop artifact into `dir`; returns the files written.
pub fn write_closed_loop(dir: &Path, log: &ClosedLoopLog) -> Result<Vec<PathBuf>> {
    let mut files = vec![dir.join("trace.csv"), dir.join("updates.csv")];
    write_trace(&files[0], log)?;
    write_updates(&files[1], log)?;
    if let Some(last) = log.updates.last() {
        let c = dir.join("certificate.csv");
        write_certificate(&c, &last.report.certificate)?;
        files.push(c);
        let s = dir.join("solution.csv");
        write_solution(&s, &last.report)?;
        files.push(s);
        let r = dir.join("refinement.csv");
        write_refinement(&r, &last.report)?;
        files.push(r);
    }
    Ok(files)
}
