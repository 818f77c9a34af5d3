use std::path::PathBuf;
use std::process::ExitCode;

use certmpc::config::RunConfig;
use certmpc::dynamics::ModelRegistry;
use certmpc::output;
use certmpc::quadrature::QuadSettings;
use certmpc::sim::closed_loop::{run_closed_loop, solve_update};
use certmpc::sim::open_loop::run_open_loop_experiment;
use certmpc::sim::sweep::sweep_thresholds;
use certmpc::triggering::trigger_report;
use certmpc::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "certmpc", version, about = "Error-certified collocation and triggered MPC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Arm,
    Linear,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; the preset is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Schemes compared on an autonomous system: certificates, first event, time bounds.
    SimulateOpenLoop(Common),
    /// Receding-horizon run with event- or self-triggered updates.
    SimulateClosedLoop(Common),
    /// Inter-update-time bounds for the first prediction.
    TriggerEstimate(Common),
    /// One refinement (and tightening) solve at the initial state.
    Refine(Common),
    /// Closed-loop runs over the configured threshold and tolerance lists.
    Sweep(Common),
    /// Prints a built-in configuration as JSON.
    DefaultConfig {
        #[arg(value_enum)]
        preset: Preset,
    },
}

fn load(c: &Common, preset: Preset) -> certmpc::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => match preset {
            Preset::Arm => RunConfig::arm_default(),
            Preset::Linear => RunConfig::linear_default(),
        },
    };
    if let Some(s) = c.seed {
        cfg.noise.seed = s;
    }
    let Format::Csv = c.format;
    Ok(cfg)
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn open_loop(c: &Common, reg: &ModelRegistry) -> certmpc::Result<()> {
    let cfg = load(c, Preset::Linear)?;
    let results = run_open_loop_experiment(&cfg.open_loop_setup(reg)?)?;
    let mut files = vec![c.out.join("summary.csv")];
    output::write_open_loop_summary(&files[0], &results)?;
    for r in &results {
        let label = r.case.scheme.label().to_lowercase();
        let t = c.out.join(format!("trace_{label}.csv"));
        output::write_open_loop_trace(&t, r)?;
        let k = c.out.join(format!("certificate_{label}.csv"));
        output::write_certificate(&k, &r.certificate)?;
        files.extend([t, k]);
        println!(
            "{:>3}  delta={}  max_eta={:.4}  first_event={}  tau_min={}  tau_qet={:.4}  tau_ct={:.4}  tau_ct_scaled={:.4}",
            r.case.scheme.label(),
            r.case.delta,
            r.max_segment_eta(),
            r.first_event.map_or("none".into(), |t| format!("{t:.3}")),
            r.trigger.tau_min.map_or("n/a".into(), |t| format!("{t:.4}")),
            r.trigger.tau_qet,
            r.trigger.tau_ct,
            r.trigger.tau_ct_scaled,
        );
    }
    report_files(&files);
    Ok(())
}

fn closed_loop(c: &Common, reg: &ModelRegistry) -> certmpc::Result<()> {
    let cfg = load(c, Preset::Arm)?;
    let log = run_closed_loop(&cfg.closed_loop_setup(reg)?)?;
    let files = output::write_closed_loop(&c.out, &log)?;
    println!(
        "updates={} mean_iut={:.4} cost={:.6} nlp_iterations={} constraint_violations={} delta_violations={}",
        log.updates.len(),
        log.mean_iut(),
        log.cost,
        log.total_nlp_iterations(),
        log.constraint_violations,
        log.delta_violations
    );
    report_files(&files);
    match log.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn trigger_estimate(c: &Common, reg: &ModelRegistry) -> certmpc::Result<()> {
    let cfg = load(c, Preset::Arm)?;
    if cfg.open_loop.is_some() {
        for r in run_open_loop_experiment(&cfg.open_loop_setup(reg)?)? {
            println!("{}: {}", r.case.scheme.label(), serde_json::to_string(&r.trigger).expect("report serializes"));
        }
        return Ok(());
    }
    let setup = cfg.closed_loop_setup(reg)?;
    let report = solve_update(&setup, 0.0, setup.ocp.initial_state.clone(), None)?;
    let quad: QuadSettings = setup.refinement.quadrature.into();
    let trig = trigger_report(
        &report.solution.trajectory,
        &report.certificate,
        &setup.tolerance_bound,
        &setup.model_bounds,
        &setup.trigger,
        setup.qet_mode,
        &quad,
    )?;
    println!("{}", serde_json::to_string_pretty(&trig).expect("report serializes"));
    let f = c.out.join("certificate.csv");
    output::write_certificate(&f, &report.certificate)?;
    report_files(&[f]);
    Ok(())
}

fn refine(c: &Common, reg: &ModelRegistry) -> certmpc::Result<()> {
    let cfg = load(c, Preset::Arm)?;
    let setup = cfg.closed_loop_setup(reg)?;
    let report = solve_update(&setup, 0.0, setup.ocp.initial_state.clone(), None)?;
    let files = [c.out.join("refinement.csv"), c.out.join("solution.csv"), c.out.join("certificate.csv")];
    output::write_refinement(&files[0], &report)?;
    output::write_solution(&files[1], &report)?;
    output::write_certificate(&files[2], &report.certificate)?;
    println!(
        "K={} max_eta={:.3e} objective={:.6} nlp_iterations={} tightening_iterations={}",
        report.mesh().num_segments(),
        report.certificate.max_eta(),
        report.solution.objective,
        report.total_nlp_iterations(),
        report.tightening_iterations
    );
    report_files(&files);
    Ok(())
}

fn sweep(c: &Common, reg: &ModelRegistry) -> certmpc::Result<()> {
    let cfg = load(c, Preset::Arm)?;
    let spec = cfg.sweep.clone().ok_or_else(|| Error::Config("config has no sweep section".into()))?;
    cfg.validate(reg)?;
    let cells = sweep_thresholds(&cfg, &spec.deltas, &spec.tolerances, reg)?;
    let f = c.out.join("sweep.csv");
    output::write_sweep(&f, &cells)?;
    for cell in &cells {
        println!(
            "delta={} tolerance={} updates={} nlp_iterations={} wall={:.2}s{}",
            cell.delta,
            cell.tolerance.map_or("inf".into(), |t| t.to_string()),
            cell.updates,
            cell.nlp_iterations,
            cell.wall_time_s,
            cell.error.as_ref().map_or(String::new(), |e| format!(" error: {e}"))
        );
    }
    report_files(&[f]);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else {
        3
    }
}

fn run(cli: Cli) -> certmpc::Result<()> {
    let reg = ModelRegistry::default();
    match &cli.command {
        Command::SimulateOpenLoop(c) => open_loop(c, &reg),
        Command::SimulateClosedLoop(c) => closed_loop(c, &reg),
        Command::TriggerEstimate(c) => trigger_estimate(c, &reg),
        Command::Refine(c) => refine(c, &reg),
        Command::Sweep(c) => sweep(c, &reg),
        Command::DefaultConfig { preset } => {
            let cfg = match preset {
                Preset::Arm => RunConfig::arm_default(),
                Preset::Linear => RunConfig::linear_default(),
            };
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

