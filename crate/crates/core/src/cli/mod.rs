//! Experiment harness behind the `stepmpc` binary: synthetic measurements,
//! configuration, and artifact output.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::constraints::{build_cost_profile, BurdenConstraints};
use crate::model::{active_submodel, validate_model, PwaModel};
use crate::mpc::{compute_goal, run_window, MpcConfig, RunLog};

pub use config::{ExperimentConfig, Overrides, Preset, RunConfig};

/// ChaCha stream used for synthetic measurements, separate from scenario fans.
const MEASUREMENT_STREAM: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// I.i.d. Gaussian step counts with mean `multiplier * mu` and deviation
/// `sigma`, clamped below at zero.
pub fn generate_measurements<R: Rng + ?Sized>(
    mu: f64,
    sigma: f64,
    multiplier: f64,
    steps: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mean = multiplier * mu;
    (0..steps)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (mean + sigma * z).max(0.0)
        })
        .collect()
}

pub fn measurement_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MEASUREMENT_STREAM);
    rng
}

/// Daily window totals, one per row. A non-numeric first row is taken as a header.
pub fn read_history(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(CliError::Config(format!(
                    "{}:{}: not a number: {field:?}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn load_model(path: Option<&Path>) -> Result<PwaModel, CliError> {
    let model = match path {
        Some(p) => {
            PwaModel::load(p).map_err(|e| CliError::Model(format!("{}: {e}", p.display())))?
        }
        None => PwaModel::weekday_reference(),
    };
    let report = validate_model(&model);
    if !report.is_empty() {
        return Err(CliError::Model(report.join("; ")));
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub scenario: Preset,
    pub multiplier: f64,
    pub seed: u64,
    pub n_scenarios: usize,
    pub goal: f64,
    pub alpha: usize,
    pub beta: f64,
    pub window_steps: usize,
    pub total_steps: f64,
    pub goal_reached: bool,
    pub messages_sent: usize,
    pub messages_per_type: Vec<usize>,
    pub cost_used: f64,
    pub final_probability: Option<f64>,
    pub total_nodes: u64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub log: RunLog,
    pub mpc: MpcConfig,
}

/// Wire model, constraints and controller together and run one window.
/// Writes nothing; see [`write_artifacts`].
pub fn simulate_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let model = load_model(cfg.model_path.as_deref())?;
    let regime = match (cfg.regime, cfg.date) {
        (Some(r), _) => r,
        (None, Some(d)) => active_submodel(&model, d),
        (None, None) => model.switch_rule.weekday,
    };
    if regime >= model.submodels.len() {
        return Err(CliError::Model(format!("regime {regime} not in model")));
    }
    let goal = match (cfg.goal, &cfg.history) {
        (Some(g), _) => g,
        (None, Some(p)) => compute_goal(&read_history(p)?, cfg.goal_increment)
            .map_err(|e| CliError::Config(e.to_string()))?,
        (None, None) => return Err(CliError::Config("no goal and no history file".into())),
    };
    if 60 % model.sampling_minutes != 0 {
        return Err(CliError::Config(format!(
            "sampling period of {} minutes does not divide an hour",
            model.sampling_minutes
        )));
    }
    let steps_per_hour = (60 / model.sampling_minutes) as usize;
    let costs = build_cost_profile(
        &cfg.hourly_averages,
        cfg.window_steps,
        steps_per_hour,
        cfg.c_time,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let beta = cfg
        .beta
        .unwrap_or_else(|| BurdenConstraints::default_beta(cfg.alpha, &costs));
    let cons = BurdenConstraints::new(cfg.alpha, beta, cfg.spacing_steps, cfg.window_steps)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut mpc = MpcConfig::new(model, cons, costs, goal);
    mpc.regime = regime;
    mpc.n_scenarios = cfg.n_scenarios;
    mpc.seed = cfg.seed;
    mpc.window_start_minutes = cfg.window_start_minutes;
    mpc.sum_from = cfg.sum_from;
    mpc.decide_at_final_step = cfg.decide_at_final_step;
    mpc.solver = cfg.solver;
    mpc.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let measurements = generate_measurements(
        cfg.mu_window,
        cfg.sigma_window,
        cfg.multiplier,
        cfg.window_steps,
        &mut measurement_rng(cfg.seed),
    );
    let mut source = |k: usize, _decision: usize| measurements[k];
    let log = run_window(&mpc, &mut source, cfg.dump_scenarios).map_err(runtime)?;

    let t = &log.totals;
    let summary = ExperimentSummary {
        scenario: cfg.scenario,
        multiplier: cfg.multiplier,
        seed: cfg.seed,
        n_scenarios: cfg.n_scenarios,
        goal,
        alpha: cfg.alpha,
        beta,
        window_steps: cfg.window_steps,
        total_steps: t.total_steps,
        goal_reached: t.goal_reached,
        messages_sent: t.messages_sent,
        messages_per_type: t.messages_per_type.clone(),
        cost_used: t.cost_used,
        final_probability: t.final_probability,
        total_nodes: t.total_nodes,
    };
    Ok(ExperimentOutput { summary, log, mpc })
}

pub const RUNLOG_FILE: &str = "runlog.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "probability_trace.csv";
pub const SCENARIOS_FILE: &str = "scenarios.csv";

/// Write the run log, summary, probability trace and (optionally) scenario
/// thresholds into `dir`. Returns the files written.
pub fn write_artifacts(
    out: &ExperimentOutput,
    dir: &Path,
    dump_scenarios: bool,
) -> Result<Vec<PathBuf>, CliError> {
    let mut runlog = Vec::new();
    out.log.write_csv(&mut runlog).map_err(runtime)?;
    let mut trace = Vec::new();
    out.log
        .write_probability_trace(&mut trace)
        .map_err(runtime)?;
    let mut summary = serde_json::to_vec_pretty(&out.summary).map_err(runtime)?;
    summary.push(b'\n');
    let mut files = vec![
        (RUNLOG_FILE, runlog),
        (SUMMARY_FILE, summary),
        (TRACE_FILE, trace),
    ];
    if dump_scenarios {
        let mut scenarios = Vec::new();
        out.log
            .write_thresholds_csv(&mut scenarios)
            .map_err(runtime)?;
        files.push((SCENARIOS_FILE, scenarios));
    }

    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

/// Simulate and write artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let out = simulate_experiment(cfg)?;
    write_artifacts(&out, &cfg.out_dir, cfg.dump_scenarios)?;
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(
    name = "stepmpc",
    version,
    about = "Shrinking-horizon stochastic MPC for activity-prompt scheduling"
)]
pub struct Cli {
    /// Log solver progress to standard error (repeat for incumbent updates).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one intervention window and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        scenario: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "n-scenarios")]
        n_scenarios: Option<usize>,
        #[arg(long)]
        alpha: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        goal: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-step scenario thresholds.
        #[arg(long = "dump-scenarios")]
        dump_scenarios: bool,
    },
    /// Check a model file.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Goal from a CSV of daily window totals.
    Goal {
        #[arg(long)]
        history: PathBuf,
        #[arg(long, default_value_t = 500.0)]
        increment: f64,
    },
}

/// Execute a parsed command. Output goes to `stdout`; the caller reports
/// errors and maps them to exit codes.
pub fn execute(command: Command, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            scenario,
            seed,
            n_scenarios,
            alpha,
            beta,
            goal,
            out,
            dump_scenarios,
        } => {
            let cfg = RunConfig::load(&config)?;
            let ov = Overrides {
                scenario,
                seed,
                n_scenarios,
                alpha,
                beta,
                goal,
                out_dir: out,
                dump_scenarios,
            };
            let exp = ExperimentConfig::resolve(cfg, ov)?;
            let result = run_experiment(&exp)?;
            let s = &result.summary;
            writeln!(
                stdout,
                "{:?} seed {}: {} messages {:?}, total steps {:.0} vs goal {:.0}, final estimate {:.2}, artifacts in {}",
                s.scenario,
                s.seed,
                s.messages_sent,
                s.messages_per_type,
                s.total_steps,
                s.goal,
                s.final_probability.unwrap_or(f64::NAN),
                exp.out_dir.display()
            )
            .map_err(runtime)?;
        }
        Command::Validate { model } => {
            let m = PwaModel::load(&model)
                .map_err(|e| CliError::Model(format!("{}: {e}", model.display())))?;
            let report = validate_model(&m);
            if !report.is_empty() {
                return Err(CliError::Model(report.join("; ")));
            }
            writeln!(
                stdout,
                "{}: ok ({} sub-models, order {}, {} channels)",
                model.display(),
                m.submodels.len(),
                m.order,
                m.channels
            )
            .map_err(runtime)?;
        }
        Command::Goal { history, increment } => {
            let totals = read_history(&history)?;
            let goal =
                compute_goal(&totals, increment).map_err(|e| CliError::Config(e.to_string()))?;
            writeln!(stdout, "{goal}").map_err(runtime)?;
        }
    }
    Ok(())
}
