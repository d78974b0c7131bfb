//! Switched affine autoregressive step-count model.
//!
//! Each sub-model predicts the step count of one sampling interval as
//!
//! ```text
//! y_k = a0 + sum_i a_i y_{k-i} + sum_j sum_i b_ji u^j_{k-i} + w_k
//! ```
//!
//! with `i = 1..n` for the output lags and `i = 0..n` for the input lags.
//! Outputs are never clamped: downstream code relies on exact affinity.

use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shipped reference model (weekday coefficients, weekend mapped onto them).
pub const WEEKDAY_REFERENCE_JSON: &str = include_str!("../models/weekday_reference.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubModel {
    pub a0: f64,
    /// Autoregressive coefficients `a_1..a_n`.
    pub a: Vec<f64>,
    /// Input coefficients, one row per channel, `n + 1` lags per row (lag 0 first).
    pub b: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mu: f64,
    pub sigma: f64,
    /// Optional per-step standard deviations over the window. When present it
    /// overrides `sigma` for sampling; analytic probabilities are unavailable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_steps: Option<Vec<f64>>,
}

impl NoiseModel {
    pub fn constant(mu: f64, sigma: f64) -> Self {
        Self {
            mu,
            sigma,
            sigma_steps: None,
        }
    }

    /// Standard deviation at window step `step`. Steps beyond a per-step list
    /// reuse its last entry.
    pub fn sigma_at(&self, step: usize) -> f64 {
        match &self.sigma_steps {
            Some(s) if !s.is_empty() => s[step.min(s.len() - 1)],
            _ => self.sigma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    pub fn of(date: NaiveDate) -> Self {
        match date.weekday() {
            Weekday::Sat | Weekday::Sun => DayType::Weekend,
            _ => DayType::Weekday,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchRule {
    pub weekday: usize,
    pub weekend: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwaModel {
    pub order: usize,
    pub channels: usize,
    pub sampling_minutes: u32,
    pub submodels: Vec<SubModel>,
    pub switch_rule: SwitchRule,
    pub noise: NoiseModel,
}

impl PwaModel {
    pub fn weekday_reference() -> Self {
        serde_json::from_str(WEEKDAY_REFERENCE_JSON).expect("shipped reference model parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Load and reject models with any invariant violation.
    pub fn load_validated(path: impl AsRef<Path>) -> Result<Self> {
        let model = Self::load(path)?;
        let report = validate_model(&model);
        if report.is_empty() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    pub fn submodel(&self, regime: usize) -> Result<&SubModel> {
        self.submodels.get(regime).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "regime {regime} out of range ({} sub-models)",
                self.submodels.len()
            ))
        })
    }
}

/// Collect every invariant violation of `model`. An empty list means valid.
pub fn validate_model(model: &PwaModel) -> Vec<String> {
    let mut out = Vec::new();
    let n = model.order;
    let m = model.channels;
    if n == 0 {
        out.push("order must be positive".to_string());
    }
    if m == 0 {
        out.push("channels must be positive".to_string());
    }
    if model.sampling_minutes == 0 {
        out.push("sampling_minutes must be positive".to_string());
    }
    if model.submodels.is_empty() {
        out.push("at least one sub-model is required".to_string());
    }
    for (idx, sub) in model.submodels.iter().enumerate() {
        if sub.a.len() != n {
            out.push(format!(
                "submodel {idx}: expected {n} autoregressive coefficients, found {}",
                sub.a.len()
            ));
        }
        if sub.b.len() != m {
            out.push(format!(
                "submodel {idx}: expected {m} input rows, found {}",
                sub.b.len()
            ));
        }
        for (j, row) in sub.b.iter().enumerate() {
            if row.len() != n + 1 {
                out.push(format!(
                    "submodel {idx}: input row {j} has {} lags, expected {}",
                    row.len(),
                    n + 1
                ));
            }
        }
        let finite = sub.a0.is_finite()
            && sub.a.iter().all(|v| v.is_finite())
            && sub.b.iter().flatten().all(|v| v.is_finite());
        if !finite {
            out.push(format!("submodel {idx}: non-finite coefficient"));
        }
    }
    for (name, idx) in [
        ("weekday", model.switch_rule.weekday),
        ("weekend", model.switch_rule.weekend),
    ] {
        if idx >= model.submodels.len() {
            out.push(format!(
                "switch_rule.{name} points at missing sub-model {idx}"
            ));
        }
    }
    let noise = &model.noise;
    if !noise.mu.is_finite() {
        out.push("noise.mu must be finite".to_string());
    }
    if !noise.sigma.is_finite() || noise.sigma < 0.0 {
        out.push(format!(
            "noise.sigma must be finite and >= 0, got {}",
            noise.sigma
        ));
    }
    if let Some(steps) = &noise.sigma_steps {
        if steps.iter().any(|s| !s.is_finite() || *s < 0.0) {
            out.push("noise.sigma_steps entries must be finite and >= 0".to_string());
        }
    }
    out
}

/// Sub-model index active on `date`, from its weekday/weekend class alone.
pub fn active_submodel(model: &PwaModel, date: NaiveDate) -> usize {
    match DayType::of(date) {
        DayType::Weekday => model.switch_rule.weekday,
        DayType::Weekend => model.switch_rule.weekend,
    }
}

/// Output and input lags, most recent first.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    /// `y_{k-1}, ..., y_{k-n}`.
    pub y_past: Vec<f64>,
    /// `u_{k-1}, ..., u_{k-n}`, each row holding one entry per channel.
    pub u_past: Vec<Vec<u8>>,
}

impl History {
    /// Rest state: all lags zero.
    pub fn zeros(order: usize, channels: usize) -> Self {
        Self {
            y_past: vec![0.0; order],
            u_past: vec![vec![0; channels]; order],
        }
    }

    /// Build from possibly short lag lists, zero-padding the older end.
    pub fn padded(
        order: usize,
        channels: usize,
        y_recent_first: &[f64],
        u_recent_first: &[Vec<u8>],
    ) -> Result<Self> {
        if y_recent_first.len() > order || u_recent_first.len() > order {
            return Err(Error::Dimension(format!(
                "history longer than model order {order}"
            )));
        }
        let mut h = Self::zeros(order, channels);
        h.y_past[..y_recent_first.len()].copy_from_slice(y_recent_first);
        for (lag, row) in u_recent_first.iter().enumerate() {
            check_input(row, channels, &format!("history lag {}", lag + 1))?;
            h.u_past[lag] = row.clone();
        }
        Ok(h)
    }

    pub fn check(&self, order: usize, channels: usize) -> Result<()> {
        if self.y_past.len() != order || self.u_past.len() != order {
            return Err(Error::Dimension(format!(
                "history must hold {order} output and input lags, found {} and {}",
                self.y_past.len(),
                self.u_past.len()
            )));
        }
        for (lag, row) in self.u_past.iter().enumerate() {
            check_input(row, channels, &format!("history lag {}", lag + 1))?;
        }
        Ok(())
    }

    /// Shift in a new most-recent output and input.
    pub fn push(&mut self, y: f64, u: &[u8]) {
        if self.y_past.is_empty() {
            return;
        }
        self.y_past.rotate_right(1);
        self.y_past[0] = y;
        self.u_past.rotate_right(1);
        self.u_past[0].clear();
        self.u_past[0].extend_from_slice(u);
    }
}

pub(crate) fn check_input(u: &[u8], channels: usize, location: &str) -> Result<()> {
    if u.len() != channels {
        return Err(Error::Dimension(format!(
            "{location}: expected {channels} input channels, found {}",
            u.len()
        )));
    }
    if let Some(&value) = u.iter().find(|&&v| v > 1) {
        return Err(Error::NonBinaryInput {
            location: location.to_string(),
            value,
        });
    }
    Ok(())
}

impl SubModel {
    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn channels(&self) -> usize {
        self.b.len()
    }

    /// Noise-free affine part of one step, without validation.
    fn affine(&self, hist: &History, u_now: &[u8]) -> f64 {
        let mut y = self.a0;
        for (a, y_lag) in self.a.iter().zip(&hist.y_past) {
            y += a * y_lag;
        }
        for (j, row) in self.b.iter().enumerate() {
            if u_now[j] == 1 {
                y += row[0];
            }
            for (lag, u) in hist.u_past.iter().enumerate() {
                if u[j] == 1 {
                    y += row[lag + 1];
                }
            }
        }
        y
    }

    /// Response of the autoregressive part to a unit impulse at offset 0:
    /// `h[0] = 1`, `h[t] = sum_i a_i h[t - i]`.
    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut h = vec![0.0; len];
        for t in 0..len {
            let mut v = if t == 0 { 1.0 } else { 0.0 };
            for (i, a) in self.a.iter().enumerate() {
                if let Some(prev) = t.checked_sub(i + 1) {
                    v += a * h[prev];
                }
            }
            h[t] = v;
        }
        h
    }

    /// Output response to a single unit input on `channel` at offset 0, with
    /// zero intercept and zero initial state: the input coefficients
    /// convolved with the autoregressive impulse response.
    pub fn input_response(&self, channel: usize, len: usize) -> Vec<f64> {
        let h = self.impulse_response(len);
        let b = &self.b[channel];
        (0..len)
            .map(|t| {
                b.iter()
                    .enumerate()
                    .take(t + 1)
                    .map(|(i, bi)| bi * h[t - i])
                    .sum()
            })
            .collect()
    }
}

/// One model step: `y = a0 + sum a_i y_{k-i} + sum b_ji u^j_{k-i} + w`.
pub fn simulate_step(sub: &SubModel, hist: &History, u_now: &[u8], w: f64) -> Result<f64> {
    hist.check(sub.order(), sub.channels())?;
    check_input(u_now, sub.channels(), "current input")?;
    Ok(sub.affine(hist, u_now) + w)
}

/// Roll the model forward over `schedule.len()` steps, feeding each output and
/// input back into the lag window.
pub fn simulate_trajectory(
    model: &PwaModel,
    regime: usize,
    hist: &History,
    schedule: &[Vec<u8>],
    noise: &[f64],
) -> Result<Vec<f64>> {
    if schedule.len() != noise.len() {
        return Err(Error::Dimension(format!(
            "schedule covers {} steps but noise covers {}",
            schedule.len(),
            noise.len()
        )));
    }
    let sub = model.submodel(regime)?;
    hist.check(sub.order(), sub.channels())?;
    let mut h = hist.clone();
    let mut out = Vec::with_capacity(schedule.len());
    for (step, (u, w)) in schedule.iter().zip(noise).enumerate() {
        check_input(u, sub.channels(), &format!("schedule step {step}"))?;
        let y = sub.affine(&h, u) + w;
        h.push(y, u);
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> PwaModel {
        PwaModel::weekday_reference()
    }

    fn one_hot(m: usize, j: Option<usize>) -> Vec<u8> {
        let mut u = vec![0; m];
        if let Some(j) = j {
            u[j] = 1;
        }
        u
    }

    #[test]
    fn reference_model_is_valid() {
        let model = reference();
        assert!(validate_model(&model).is_empty());
        assert_eq!(
            (model.order, model.channels, model.sampling_minutes),
            (5, 3, 15)
        );
    }

    #[test]
    fn short_autoregressive_list_is_one_violation() {
        let mut model = reference();
        model.submodels[0].a.pop();
        assert_eq!(validate_model(&model).len(), 1);
    }

    #[test]
    fn negative_sigma_is_one_violation() {
        let mut model = reference();
        model.noise.sigma = -1.0;
        assert_eq!(validate_model(&model).len(), 1);
    }

    #[test]
    fn dangling_switch_rule_is_reported() {
        let mut model = reference();
        model.switch_rule.weekend = 3;
        let report = validate_model(&model);
        assert_eq!(report.len(), 1);
        assert!(report[0].contains("weekend"));
    }

    #[test]
    fn day_type_switching() {
        let mut model = reference();
        model.submodels.push(model.submodels[0].clone());
        model.switch_rule = SwitchRule {
            weekday: 0,
            weekend: 1,
        };
        let wednesday = NaiveDate::from_ymd_opt(2024, 5, 15).unwrap();
        let saturday = NaiveDate::from_ymd_opt(2024, 5, 18).unwrap();
        assert_eq!(active_submodel(&model, wednesday), 0);
        assert_eq!(active_submodel(&model, saturday), 1);

        let constant = reference();
        for day in 0..7 {
            let d = wednesday + chrono::Duration::days(day);
            assert_eq!(active_submodel(&constant, d), 0);
        }
    }

    #[test]
    fn step_values_from_reference_coefficients() {
        let sub = &reference().submodels[0];
        let zero = History::zeros(5, 3);
        let y = simulate_step(sub, &zero, &[0, 0, 0], 0.0).unwrap();
        assert!((y - 80.51).abs() < 1e-12);
        let y = simulate_step(sub, &zero, &[1, 0, 0], 0.0).unwrap();
        assert!((y - 60.092).abs() < 1e-9);
        let busy = History {
            y_past: vec![1000.0; 5],
            u_past: vec![vec![0; 3]; 5],
        };
        let y = simulate_step(sub, &busy, &[0, 0, 0], 0.0).unwrap();
        assert!((y - 515.01).abs() < 1e-9);
    }

    #[test]
    fn non_binary_input_rejected() {
        let sub = &reference().submodels[0];
        let err = simulate_step(sub, &History::zeros(5, 3), &[2, 0, 0], 0.0).unwrap_err();
        assert!(matches!(err, Error::NonBinaryInput { value: 2, .. }));
    }

    #[test]
    fn trajectory_edges() {
        let model = reference();
        let zero = History::zeros(5, 3);
        assert!(simulate_trajectory(&model, 0, &zero, &[], &[])
            .unwrap()
            .is_empty());

        let u = one_hot(3, Some(1));
        let one = simulate_trajectory(&model, 0, &zero, std::slice::from_ref(&u), &[12.5]).unwrap();
        let direct = simulate_step(&model.submodels[0], &zero, &u, 12.5).unwrap();
        assert_eq!(one, vec![direct]);

        let err = simulate_trajectory(&model, 0, &zero, &[u], &[]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn three_step_rest_recursion() {
        let model = reference();
        let zero = History::zeros(5, 3);
        let y = simulate_trajectory(&model, 0, &zero, &vec![vec![0; 3]; 3], &[0.0; 3]).unwrap();
        // Hand recursion: y1 = a0, y2 = a0 + a1 y1, y3 = a0 + a1 y2 + a2 y1.
        let y1 = 80.51;
        let y2 = 80.51 - 0.0052 * 80.51;
        let y3 = 80.51 - 0.0052 * y2 + 0.0043 * y1;
        assert!((y[0] - y1).abs() < 1e-12);
        assert!((y[1] - y2).abs() < 1e-12);
        assert!((y[2] - y3).abs() < 1e-12);
        assert!((y3 - 80.43971799).abs() < 1e-8);
    }

    #[test]
    fn padded_history_fills_older_lags_with_zero() {
        let h = History::padded(5, 3, &[10.0, 20.0], &[vec![0, 1, 0]]).unwrap();
        assert_eq!(h.y_past, vec![10.0, 20.0, 0.0, 0.0, 0.0]);
        assert_eq!(h.u_past[0], vec![0, 1, 0]);
        assert_eq!(h.u_past[1], vec![0, 0, 0]);
    }

    #[test]
    fn push_rolls_lags() {
        let mut h = History::zeros(3, 2);
        h.push(1.0, &[1, 0]);
        h.push(2.0, &[0, 1]);
        assert_eq!(h.y_past, vec![2.0, 1.0, 0.0]);
        assert_eq!(h.u_past, vec![vec![0, 1], vec![1, 0], vec![0, 0]]);
    }

    #[test]
    fn json_round_trip_of_shipped_file() {
        let model = reference();
        let text = serde_json::to_string(&model).unwrap();
        assert_eq!(PwaModel::from_json(&text).unwrap(), model);
    }
}
