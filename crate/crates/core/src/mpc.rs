//! Shrinking-horizon loop.
//!
//! At step `k` the controller ingests the measurement of the previous
//! interval, samples fresh noise over `k..T`, reduces and solves the decision
//! problem over exactly those steps, applies the first decision, and moves on
//! to `k + 1`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constraints::{remaining_budget, BurdenConstraints, CostProfile, Schedule};
use crate::error::{Error, Result};
use crate::model::{simulate_step, validate_model, History, PwaModel};
use crate::scenario::{sample_noise, ReducedProblem, Reducer};
use crate::solver::{
    formulate_big_m, solve_branch_and_bound, solve_shared_gain_fast_path, Solution,
};

/// Mean of past daily window totals plus `increment`.
pub fn compute_goal(daily_window_totals: &[f64], increment: f64) -> Result<f64> {
    if daily_window_totals.is_empty() {
        return Err(Error::InvalidArgument("goal history is empty".into()));
    }
    if daily_window_totals.iter().any(|v| !v.is_finite()) || !increment.is_finite() {
        return Err(Error::InvalidArgument("goal history must be finite".into()));
    }
    let mean = daily_window_totals.iter().sum::<f64>() / daily_window_totals.len() as f64;
    Ok(mean + increment)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Fast,
    BranchAndBound,
}

impl SolverKind {
    pub fn solve(self, problem: &crate::solver::MilpProblem) -> Result<Solution> {
        match self {
            SolverKind::Fast => solve_shared_gain_fast_path(problem),
            SolverKind::BranchAndBound => solve_branch_and_bound(problem),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcConfig {
    pub model: PwaModel,
    pub regime: usize,
    pub cons: BurdenConstraints,
    pub costs: CostProfile,
    pub goal: f64,
    pub n_scenarios: usize,
    pub seed: u64,
    /// Clock time of window step 0, in minutes after midnight.
    pub window_start_minutes: u32,
    /// First window step whose realized output counts toward the goal.
    pub sum_from: usize,
    /// Solve the one-step problem at the final step; when false the final
    /// step sends nothing.
    pub decide_at_final_step: bool,
    pub solver: SolverKind,
    /// Lags before window step 0.
    pub initial_history: History,
}

impl MpcConfig {
    /// Defaults: 100 scenarios, fast solver, rest-state history, 09:00 start.
    pub fn new(model: PwaModel, cons: BurdenConstraints, costs: CostProfile, goal: f64) -> Self {
        let initial_history = History::zeros(model.order, model.channels);
        Self {
            model,
            regime: 0,
            cons,
            costs,
            goal,
            n_scenarios: 100,
            seed: 0,
            window_start_minutes: 9 * 60,
            sum_from: 0,
            decide_at_final_step: true,
            solver: SolverKind::Fast,
            initial_history,
        }
    }

    pub fn window_len(&self) -> usize {
        self.cons.window_len
    }

    pub fn validate(&self) -> Result<()> {
        let report = validate_model(&self.model);
        if !report.is_empty() {
            return Err(Error::InvalidModel(report));
        }
        self.model.submodel(self.regime)?;
        self.cons.validate()?;
        if self.costs.len() != self.window_len() {
            return Err(Error::Dimension(format!(
                "{} costs for a window of {} steps",
                self.costs.len(),
                self.window_len()
            )));
        }
        if self.n_scenarios == 0 {
            return Err(Error::InvalidArgument("n_scenarios must be >= 1".into()));
        }
        if !self.goal.is_finite() {
            return Err(Error::InvalidArgument("goal must be finite".into()));
        }
        self.initial_history
            .check(self.model.order, self.model.channels)
    }

    /// `HH:MM` of window step `k`.
    pub fn clock(&self, k: usize) -> String {
        let minutes = self.window_start_minutes as usize + k * self.model.sampling_minutes as usize;
        format!("{:02}:{:02}", (minutes / 60) % 24, minutes % 60)
    }
}

/// Seed of the scenario fan drawn at step `k`.
pub fn step_seed(master: u64, k: usize) -> u64 {
    // splitmix64 finalizer over the mixed pair
    let mut z = master
        ^ (k as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcState {
    /// Realized outputs `y_0, ..., y_{k-2}` (one behind the inputs once a
    /// decision has been taken).
    pub outputs: Vec<f64>,
    /// Applied decisions `u_0, ..., u_{k-1}`; 0 = no message.
    pub inputs: Vec<usize>,
    /// Lags ending at the last ingested output.
    pub history: History,
}

impl MpcState {
    pub fn new(config: &MpcConfig) -> Self {
        Self {
            outputs: Vec::new(),
            inputs: Vec::new(),
            history: config.initial_history.clone(),
        }
    }

    /// Next step to decide.
    pub fn step(&self) -> usize {
        self.inputs.len()
    }

    fn awaiting_measurement(&self) -> bool {
        self.inputs.len() > self.outputs.len()
    }

    /// Record the measured output of the most recent decided step.
    pub fn ingest(&mut self, channels: usize, y: f64) -> Result<()> {
        if !self.awaiting_measurement() {
            return Err(Error::InvalidArgument(
                "no decided step awaits a measurement".into(),
            ));
        }
        if !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "measurement {y} is not finite"
            )));
        }
        let u = self.inputs[self.outputs.len()];
        let mut row = vec![0u8; channels];
        if u > 0 {
            row[u - 1] = 1;
        }
        self.history.push(y, &row);
        self.outputs.push(y);
        Ok(())
    }

    pub fn past_schedule(&self, channels: usize) -> Result<Schedule> {
        Schedule::from_choices(channels, &self.inputs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    /// 0 = no message, `j` = message type `j`.
    pub decision: usize,
    /// Objective of the solved problem: satisfied scenarios / N.
    pub probability: f64,
    /// Same estimate for sending nothing from here on.
    pub zero_plan_probability: f64,
    pub solution: Solution,
    pub reduced: ReducedProblem,
}

/// Ingest `measurement` (the output of step `k - 1`; absent at `k = 0`),
/// solve over `k..T` and apply the first decision.
pub fn mpc_step(
    config: &MpcConfig,
    state: &MpcState,
    measurement: Option<f64>,
) -> Result<(StepOutcome, MpcState)> {
    let reducer = Reducer::new(&config.model, config.regime, config.window_len())?;
    step_with(config, &reducer, state, measurement)
}

fn step_with(
    config: &MpcConfig,
    reducer: &Reducer,
    state: &MpcState,
    measurement: Option<f64>,
) -> Result<(StepOutcome, MpcState)> {
    let channels = config.model.channels;
    let mut next = state.clone();
    match measurement {
        Some(y) => next.ingest(channels, y)?,
        None if state.awaiting_measurement() => {
            return Err(Error::InvalidArgument(format!(
                "step {} needs the measurement of step {}",
                state.step(),
                state.step() - 1
            )))
        }
        None => {}
    }
    let k = next.step();
    let window = config.window_len();
    if k >= window {
        return Err(Error::InvalidArgument(format!(
            "window of {window} steps already complete"
        )));
    }

    let past = next.past_schedule(channels)?;
    let remaining = remaining_budget(&past, &config.cons, &config.costs)?;
    let past_sum: f64 = next.outputs.iter().skip(config.sum_from).sum();
    let horizon = window - k;
    let noise = sample_noise(
        &config.model.noise,
        k,
        horizon,
        config.n_scenarios,
        step_seed(config.seed, k),
    )?;
    let reduced = reducer.reduce(&next.history, k, past_sum, &noise, config.goal)?;
    let problem = formulate_big_m(reduced, &config.cons, &config.costs, remaining)?;

    let solution = if k + 1 == window && !config.decide_at_final_step {
        problem.check()?;
        problem.solution_for(vec![0], 0)
    } else {
        config.solver.solve(&problem)?
    };
    let zero_plan_probability = problem
        .reduced
        .saa_probability(&Schedule::empty(horizon, channels));
    let decision = solution.first_choice();
    next.inputs.push(decision);

    Ok((
        StepOutcome {
            step: k,
            decision,
            probability: solution.objective,
            zero_plan_probability,
            solution,
            reduced: problem.reduced,
        },
        next,
    ))
}

/// Produces the measured step count of window step `step` once its decision
/// is known.
pub trait MeasurementSource {
    fn measure(&mut self, step: usize, decision: usize) -> Result<f64>;
}

/// Measurements from the model itself, driven by its own noise stream.
pub struct PlantSource {
    model: PwaModel,
    regime: usize,
    history: History,
    rng: ChaCha8Rng,
}

impl PlantSource {
    pub fn new(model: PwaModel, regime: usize, history: History, seed: u64) -> Self {
        Self {
            model,
            regime,
            history,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl MeasurementSource for PlantSource {
    fn measure(&mut self, step: usize, decision: usize) -> Result<f64> {
        let sub = self.model.submodel(self.regime)?;
        let mut u = vec![0u8; self.model.channels];
        if decision > 0 {
            u[decision - 1] = 1;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let w = self.model.noise.mu + self.model.noise.sigma_at(step) * z;
        let y = simulate_step(sub, &self.history, &u, w)?;
        self.history.push(y, &u);
        Ok(y)
    }
}

impl<F: FnMut(usize, usize) -> f64> MeasurementSource for F {
    fn measure(&mut self, step: usize, decision: usize) -> Result<f64> {
        Ok(self(step, decision))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub clock: String,
    pub measured_steps: f64,
    pub message_type: usize,
    pub prob_estimate: f64,
    pub zero_plan_prob: f64,
    /// Cumulative, including this step.
    pub messages_used: usize,
    pub cost_used: f64,
    pub satisfied: usize,
    pub nodes: u64,
    pub planned: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub goal: f64,
    pub total_steps: f64,
    pub goal_reached: bool,
    pub messages_sent: usize,
    /// Index `j - 1` counts messages of type `j`.
    pub messages_per_type: Vec<usize>,
    pub cost_used: f64,
    pub final_probability: Option<f64>,
    pub total_nodes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub totals: RunTotals,
    /// Per-step scenario thresholds, when requested.
    #[serde(skip)]
    pub thresholds: Vec<ReducedProblem>,
}

pub const RUNLOG_CSV_HEADER: &str =
    "step,clock,measured_steps,message_type,prob_estimate,messages_used,cost_used,nodes";

impl RunLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{RUNLOG_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step,
                r.clock,
                r.measured_steps,
                r.message_type,
                r.prob_estimate,
                r.messages_used,
                r.cost_used,
                r.nodes
            )?;
        }
        Ok(())
    }

    pub fn write_probability_trace<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,clock,prob_estimate,zero_plan_prob,message_type")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.step, r.clock, r.prob_estimate, r.zero_plan_prob, r.message_type
            )?;
        }
        Ok(())
    }

    pub fn write_thresholds_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,scenario,theta")?;
        for reduced in &self.thresholds {
            reduced.write_thetas_csv(&mut out, false)?;
        }
        Ok(())
    }
}

/// Shrinking-horizon control over the whole window, one record per step.
pub fn run_window(
    config: &MpcConfig,
    source: &mut dyn MeasurementSource,
    keep_thresholds: bool,
) -> Result<RunLog> {
    config.validate()?;
    let reducer = Reducer::new(&config.model, config.regime, config.window_len())?;
    let channels = config.model.channels;
    let mut state = MpcState::new(config);
    let mut records = Vec::with_capacity(config.window_len());
    let mut thresholds = Vec::new();
    let mut pending: Option<f64> = None;
    let mut messages_used = 0;
    let mut cost_used = 0.0;
    let mut per_type = vec![0usize; channels];
    let mut total_nodes = 0;

    for k in 0..config.window_len() {
        let (outcome, next) = step_with(config, &reducer, &state, pending.take())?;
        state = next;
        if outcome.decision > 0 {
            messages_used += 1;
            cost_used += config.costs.c[k];
            per_type[outcome.decision - 1] += 1;
        }
        total_nodes += outcome.solution.node_count;
        let measured = source.measure(k, outcome.decision)?;
        pending = Some(measured);
        records.push(StepRecord {
            step: k,
            clock: config.clock(k),
            measured_steps: measured,
            message_type: outcome.decision,
            prob_estimate: outcome.probability,
            zero_plan_prob: outcome.zero_plan_probability,
            messages_used,
            cost_used,
            satisfied: outcome.solution.satisfied_count,
            nodes: outcome.solution.node_count,
            planned: outcome.solution.choices.clone(),
        });
        if keep_thresholds {
            thresholds.push(outcome.reduced);
        }
    }
    if let Some(y) = pending {
        state.ingest(channels, y)?;
    }

    let total_steps: f64 = state.outputs.iter().skip(config.sum_from).sum();
    Ok(RunLog {
        totals: RunTotals {
            goal: config.goal,
            total_steps,
            goal_reached: total_steps >= config.goal,
            messages_sent: messages_used,
            messages_per_type: per_type,
            cost_used,
            final_probability: records.last().map(|r| r.prob_estimate),
            total_nodes,
        },
        records,
        thresholds,
    })
}
