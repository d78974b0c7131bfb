//! Intervention-burden constraints and the composite per-step cost profile.
//!
//! A schedule is admissible when, over the whole window (realized past plus
//! planned future):
//!
//! - no run of `spacing_steps` consecutive steps carries more than one
//!   message of any type,
//! - at most `alpha` messages are sent,
//! - the summed cost `sum_k c_k * (messages at k)` stays within `beta`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the cost budget for accumulated rounding.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurdenConstraints {
    pub alpha: usize,
    pub beta: f64,
    pub spacing_steps: usize,
    pub window_len: usize,
}

impl BurdenConstraints {
    pub fn new(alpha: usize, beta: f64, spacing_steps: usize, window_len: usize) -> Result<Self> {
        let cons = Self {
            alpha,
            beta,
            spacing_steps,
            window_len,
        };
        cons.validate()?;
        Ok(cons)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha > self.window_len {
            return Err(Error::InvalidArgument(format!(
                "alpha {} exceeds window length {}",
                self.alpha, self.window_len
            )));
        }
        if self.spacing_steps == 0 {
            return Err(Error::InvalidArgument("spacing_steps must be >= 1".into()));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// `0.6 * alpha * max_k c_k`.
    pub fn default_beta(alpha: usize, costs: &CostProfile) -> f64 {
        let max_c = costs.c.iter().copied().fold(0.0, f64::max);
        0.6 * alpha as f64 * max_c
    }

    pub(crate) fn within_budget(&self, spent: f64) -> bool {
        spent <= self.beta + BUDGET_TOLERANCE * self.beta.max(1.0)
    }
}

/// Linear time-of-day ramp for `c_time`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeRamp {
    pub start: f64,
    pub end: f64,
}

impl Default for TimeRamp {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub c_time: Vec<f64>,
    pub c_step: Vec<f64>,
    pub c: Vec<f64>,
}

impl CostProfile {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Profile with every cost equal to zero; the budget never binds.
    pub fn free(window: usize) -> Self {
        Self {
            c_time: vec![1.0; window],
            c_step: vec![0.0; window],
            c: vec![0.0; window],
        }
    }
}

/// Expand hourly step averages to per-step resolution, normalize by their
/// maximum, and multiply by a linear time-of-day ramp.
pub fn build_cost_profile(
    hourly_step_averages: &[f64],
    window: usize,
    steps_per_hour: usize,
    ramp: TimeRamp,
) -> Result<CostProfile> {
    if steps_per_hour == 0 {
        return Err(Error::InvalidArgument(
            "steps_per_hour must be positive".into(),
        ));
    }
    let hours_needed = window.div_ceil(steps_per_hour);
    if hourly_step_averages.len() != hours_needed {
        return Err(Error::Dimension(format!(
            "a window of {window} steps at {steps_per_hour} steps/hour needs {hours_needed} hourly averages, got {}",
            hourly_step_averages.len()
        )));
    }
    if hourly_step_averages
        .iter()
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(Error::InvalidArgument(
            "hourly averages must be finite and >= 0".into(),
        ));
    }
    if !(ramp.start <= 1.0 && ramp.end > 0.0 && ramp.end <= ramp.start) {
        return Err(Error::InvalidArgument(format!(
            "time ramp must satisfy 0 < end <= start <= 1, got {} -> {}",
            ramp.start, ramp.end
        )));
    }

    let expanded: Vec<f64> = (0..window)
        .map(|k| hourly_step_averages[k / steps_per_hour])
        .collect();
    let max = expanded.iter().copied().fold(0.0, f64::max);
    let c_step: Vec<f64> = if max > 0.0 {
        expanded.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; window]
    };
    let c_time: Vec<f64> = (0..window)
        .map(|k| {
            if window == 1 {
                ramp.start
            } else {
                ramp.start + (ramp.end - ramp.start) * k as f64 / (window - 1) as f64
            }
        })
        .collect();
    let c = c_time.iter().zip(&c_step).map(|(t, s)| t * s).collect();
    Ok(CostProfile { c_time, c_step, c })
}

/// Binary `steps x channels` input matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schedule {
    channels: usize,
    rows: Vec<Vec<u8>>,
}

impl Schedule {
    pub fn empty(steps: usize, channels: usize) -> Self {
        Self {
            channels,
            rows: vec![vec![0; channels]; steps],
        }
    }

    pub fn from_rows(channels: usize, rows: Vec<Vec<u8>>) -> Result<Self> {
        for (k, row) in rows.iter().enumerate() {
            crate::model::check_input(row, channels, &format!("schedule step {k}"))?;
        }
        Ok(Self { channels, rows })
    }

    /// One entry per step: 0 for no message, `j` for message type `j` (1-based).
    pub fn from_choices(channels: usize, choices: &[usize]) -> Result<Self> {
        let mut s = Self::empty(choices.len(), channels);
        for (k, &c) in choices.iter().enumerate() {
            if c > channels {
                return Err(Error::InvalidArgument(format!(
                    "step {k}: message type {c} exceeds {channels} channels"
                )));
            }
            if c > 0 {
                s.rows[k][c - 1] = 1;
            }
        }
        Ok(s)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn push_choice(&mut self, choice: usize) -> Result<()> {
        if choice > self.channels {
            return Err(Error::InvalidArgument(format!(
                "message type {choice} exceeds {} channels",
                self.channels
            )));
        }
        let mut row = vec![0; self.channels];
        if choice > 0 {
            row[choice - 1] = 1;
        }
        self.rows.push(row);
        Ok(())
    }

    /// Messages sent at step `k`, all channels together.
    pub fn messages_at(&self, k: usize) -> usize {
        self.rows[k].iter().map(|&v| v as usize).sum()
    }

    pub fn message_count(&self) -> usize {
        (0..self.len()).map(|k| self.messages_at(k)).sum()
    }

    /// Per-step message type (0 = none). `None` if some step carries more
    /// than one message.
    pub fn choices(&self) -> Option<Vec<usize>> {
        self.rows
            .iter()
            .map(|row| match row.iter().filter(|&&v| v == 1).count() {
                0 => Some(0),
                1 => row.iter().position(|&v| v == 1).map(|j| j + 1),
                _ => None,
            })
            .collect()
    }

    pub fn concat(&self, other: &Schedule) -> Result<Schedule> {
        if self.channels != other.channels {
            return Err(Error::Dimension(format!(
                "cannot join schedules with {} and {} channels",
                self.channels, other.channels
            )));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(Schedule {
            channels: self.channels,
            rows,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// More than one message inside a run of `spacing_steps` steps ending at `step`.
    Spacing { step: usize },
    /// More than `alpha` messages; `step` is where the count first exceeds it.
    Count {
        step: usize,
        total: usize,
        alpha: usize,
    },
    /// Cost budget exceeded; `step` is where the running cost first exceeds it.
    Budget { step: usize, spent: f64, beta: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Spacing { step } => write!(f, "spacing violated at step {step}"),
            Violation::Count { step, total, alpha } => {
                write!(
                    f,
                    "message count {total} exceeds alpha {alpha} (from step {step})"
                )
            }
            Violation::Budget { step, spent, beta } => {
                write!(f, "cost {spent} exceeds beta {beta} (from step {step})")
            }
        }
    }
}

/// Check the realized `past` followed by the planned `schedule` against the
/// burden constraints. Returns every violation found; empty means feasible.
pub fn is_feasible(
    schedule: &Schedule,
    past: &Schedule,
    cons: &BurdenConstraints,
    costs: &CostProfile,
) -> Result<Vec<Violation>> {
    let full = past.concat(schedule)?;
    if full.len() != cons.window_len {
        return Err(Error::Dimension(format!(
            "past ({}) and schedule ({}) must cover the window of {} steps",
            past.len(),
            schedule.len(),
            cons.window_len
        )));
    }
    if costs.len() != cons.window_len {
        return Err(Error::Dimension(format!(
            "cost profile has {} entries for a window of {}",
            costs.len(),
            cons.window_len
        )));
    }
    Ok(window_violations(&full, cons, costs))
}

fn window_violations(
    full: &Schedule,
    cons: &BurdenConstraints,
    costs: &CostProfile,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let per_step: Vec<usize> = (0..full.len()).map(|k| full.messages_at(k)).collect();

    let mut running = 0usize;
    for k in 0..per_step.len() {
        running += per_step[k];
        if k >= cons.spacing_steps {
            running -= per_step[k - cons.spacing_steps];
        }
        if per_step[k] > 0 && running > 1 {
            out.push(Violation::Spacing { step: k });
        }
    }

    let mut total = 0usize;
    let mut count_step = None;
    let mut spent = 0.0;
    let mut budget_step = None;
    for (k, &n) in per_step.iter().enumerate() {
        total += n;
        spent += costs.c[k] * n as f64;
        if total > cons.alpha && count_step.is_none() {
            count_step = Some(k);
        }
        if !cons.within_budget(spent) && budget_step.is_none() {
            budget_step = Some(k);
        }
    }
    if let Some(step) = count_step {
        out.push(Violation::Count {
            step,
            total,
            alpha: cons.alpha,
        });
    }
    if let Some(step) = budget_step {
        out.push(Violation::Budget {
            step,
            spent,
            beta: cons.beta,
        });
    }
    out
}

/// What the realized past leaves for the rest of the window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Remaining {
    pub messages_left: usize,
    pub cost_left: f64,
    /// First step at which spacing admits a new message.
    pub blocked_until: usize,
}

pub fn remaining_budget(
    past: &Schedule,
    cons: &BurdenConstraints,
    costs: &CostProfile,
) -> Result<Remaining> {
    if past.len() > cons.window_len || costs.len() != cons.window_len {
        return Err(Error::Dimension(format!(
            "past of {} steps and {} costs do not fit a window of {}",
            past.len(),
            costs.len(),
            cons.window_len
        )));
    }
    let violations = window_violations(past, cons, costs);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::InfeasiblePast(text.join("; ")));
    }
    let sent = past.message_count();
    let spent: f64 = (0..past.len())
        .map(|k| costs.c[k] * past.messages_at(k) as f64)
        .sum();
    let now = past.len();
    let blocked_until = (0..now)
        .rev()
        .find(|&k| past.messages_at(k) > 0)
        .map_or(now, |last| (last + cons.spacing_steps).max(now));
    Ok(Remaining {
        messages_left: cons.alpha - sent,
        cost_left: (cons.beta - spent).max(0.0),
        blocked_until,
    })
}
