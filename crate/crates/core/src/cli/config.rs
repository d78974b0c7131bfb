//! Run configuration file and its resolution into an experiment.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::constraints::TimeRamp;
use crate::mpc::SolverKind;

use super::CliError;

/// Hourly mean step counts for 09:00-19:00 used when a config gives none.
pub const DEFAULT_HOURLY_AVERAGES: [f64; 10] = [
    420.0, 510.0, 560.0, 640.0, 600.0, 520.0, 540.0, 610.0, 680.0, 590.0,
];

/// Goal shipped with the presets (window mean 5516 plus 500).
pub const PRESET_GOAL: f64 = 6016.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Regular,
    Low,
    High,
    Custom,
}

impl Preset {
    /// Activity multiplier of the preset; `None` for custom.
    pub fn multiplier(self) -> Option<f64> {
        match self {
            Preset::Regular => Some(1.0),
            Preset::Low => Some(0.3),
            Preset::High => Some(1.5),
            Preset::Custom => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    /// Model file; the shipped weekday reference when absent.
    pub path: Option<PathBuf>,
    /// Calendar date selecting the sub-model; weekday when absent.
    pub date: Option<NaiveDate>,
    /// Explicit sub-model index, overriding `date`.
    pub regime: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintsBlock {
    pub alpha: usize,
    /// Cost budget; `0.6 * alpha * max c` when absent.
    pub beta: Option<f64>,
    pub spacing_steps: usize,
}

impl Default for ConstraintsBlock {
    fn default() -> Self {
        Self {
            alpha: 6,
            beta: None,
            spacing_steps: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostsBlock {
    pub c_time: TimeRamp,
    pub hourly_averages: Vec<f64>,
}

impl Default for CostsBlock {
    fn default() -> Self {
        Self {
            c_time: TimeRamp::default(),
            hourly_averages: DEFAULT_HOURLY_AVERAGES.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcBlock {
    pub n_scenarios: usize,
    pub seed: u64,
    /// Explicit goal; wins over `history`.
    pub goal: Option<f64>,
    /// CSV of past daily window totals for the goal.
    pub history: Option<PathBuf>,
    pub goal_increment: f64,
    pub window_start: String,
    pub window_steps: usize,
    pub solver: SolverKind,
    pub decide_at_final_step: bool,
    pub sum_from: usize,
}

impl Default for MpcBlock {
    fn default() -> Self {
        Self {
            n_scenarios: 100,
            seed: 1,
            goal: None,
            history: None,
            goal_increment: 500.0,
            window_start: "09:00".into(),
            window_steps: 40,
            solver: SolverKind::Fast,
            decide_at_final_step: true,
            sum_from: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub scenario: Preset,
    pub mu_window: f64,
    pub sigma_window: f64,
    /// Required for the custom preset, ignored otherwise.
    pub multiplier: Option<f64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            scenario: Preset::Regular,
            mu_window: 137.0,
            sigma_window: 51.0,
            multiplier: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub constraints: ConstraintsBlock,
    pub costs: CostsBlock,
    pub mpc: MpcBlock,
    pub experiment: ExperimentBlock,
}

impl RunConfig {
    /// Parse a config file; relative paths inside it are resolved against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.model.path.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.mpc.history.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.experiment.out_dir);
        Ok(cfg)
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub scenario: Option<Preset>,
    pub seed: Option<u64>,
    pub n_scenarios: Option<usize>,
    pub alpha: Option<usize>,
    pub beta: Option<f64>,
    pub goal: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub dump_scenarios: bool,
}

/// Fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: Preset,
    pub mu_window: f64,
    pub sigma_window: f64,
    pub multiplier: f64,
    pub model_path: Option<PathBuf>,
    pub date: Option<NaiveDate>,
    pub regime: Option<usize>,
    /// Explicit goal, or `None` to derive from `history`.
    pub goal: Option<f64>,
    pub history: Option<PathBuf>,
    pub goal_increment: f64,
    pub alpha: usize,
    pub beta: Option<f64>,
    pub spacing_steps: usize,
    pub c_time: TimeRamp,
    pub hourly_averages: Vec<f64>,
    pub n_scenarios: usize,
    pub seed: u64,
    pub window_start_minutes: u32,
    pub window_steps: usize,
    pub solver: SolverKind,
    pub decide_at_final_step: bool,
    pub sum_from: usize,
    pub out_dir: PathBuf,
    pub dump_scenarios: bool,
}

pub fn parse_clock(text: &str) -> Result<u32, CliError> {
    let bad = || CliError::Config(format!("window_start must be HH:MM, got {text:?}"));
    let (h, m) = text.split_once(':').ok_or_else(bad)?;
    let h: u32 = h.trim().parse().map_err(|_| bad())?;
    let m: u32 = m.trim().parse().map_err(|_| bad())?;
    if h >= 24 || m >= 60 {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

impl ExperimentConfig {
    pub fn resolve(cfg: RunConfig, ov: Overrides) -> Result<Self, CliError> {
        let scenario = ov.scenario.unwrap_or(cfg.experiment.scenario);
        let multiplier = match scenario.multiplier() {
            Some(m) => m,
            None => cfg.experiment.multiplier.ok_or_else(|| {
                CliError::Config("custom scenario needs experiment.multiplier".into())
            })?,
        };
        if !(multiplier.is_finite() && multiplier > 0.0) {
            return Err(CliError::Config(format!(
                "multiplier must be > 0, got {multiplier}"
            )));
        }
        let sigma_window = cfg.experiment.sigma_window;
        if !(sigma_window.is_finite() && sigma_window >= 0.0) {
            return Err(CliError::Config(format!(
                "sigma_window must be >= 0, got {sigma_window}"
            )));
        }
        if !cfg.experiment.mu_window.is_finite() {
            return Err(CliError::Config("mu_window must be finite".into()));
        }
        let n_scenarios = ov.n_scenarios.unwrap_or(cfg.mpc.n_scenarios);
        if n_scenarios == 0 {
            return Err(CliError::Config("n_scenarios must be >= 1".into()));
        }
        let mut goal = ov.goal.or(cfg.mpc.goal);
        if goal.is_none() && cfg.mpc.history.is_none() {
            goal = Some(PRESET_GOAL);
        }
        Ok(Self {
            scenario,
            mu_window: cfg.experiment.mu_window,
            sigma_window,
            multiplier,
            model_path: cfg.model.path,
            date: cfg.model.date,
            regime: cfg.model.regime,
            goal,
            history: cfg.mpc.history,
            goal_increment: cfg.mpc.goal_increment,
            alpha: ov.alpha.unwrap_or(cfg.constraints.alpha),
            beta: ov.beta.or(cfg.constraints.beta),
            spacing_steps: cfg.constraints.spacing_steps,
            c_time: cfg.costs.c_time,
            hourly_averages: cfg.costs.hourly_averages,
            n_scenarios,
            seed: ov.seed.unwrap_or(cfg.mpc.seed),
            window_start_minutes: parse_clock(&cfg.mpc.window_start)?,
            window_steps: cfg.mpc.window_steps,
            solver: cfg.mpc.solver,
            decide_at_final_step: cfg.mpc.decide_at_final_step,
            sum_from: cfg.mpc.sum_from,
            out_dir: ov.out_dir.unwrap_or(cfg.experiment.out_dir),
            dump_scenarios: ov.dump_scenarios,
        })
    }
}
