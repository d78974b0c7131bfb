//! Monte Carlo scenarios and their reduction to linear goal tests.
//!
//! Because every sub-model is affine and the noise enters additively, the
//! window step total under scenario `s` and future schedule `u` splits as
//!
//! ```text
//! total_s(u) = past_sum + base_s + sum_{k,j} g[k][j] * u^j_k
//! ```
//!
//! where `base_s` is the zero-input prediction under the scenario's noise and
//! the gains `g` do not depend on the scenario. The goal test
//! `total_s(u) >= goal` becomes `sum g*u >= theta_s` with
//! `theta_s = goal - past_sum - base_s`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::constraints::Schedule;
use crate::error::{Error, Result};
use crate::model::{simulate_trajectory, History, NoiseModel, PwaModel};

/// Noise draws `w_{k*}, ..., w_{T-1}` of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrajectory(pub Vec<f64>);

impl NoiseTrajectory {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draw `count` independent trajectories of Gaussian noise over window steps
/// `first_step..first_step + horizon`.
///
/// The generator is ChaCha8 seeded from `seed`; each draw is
/// `mu + sigma_k * z` with `z` from the ziggurat standard normal sampler, in
/// scenario-major order.
pub fn sample_noise(
    noise: &NoiseModel,
    first_step: usize,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<NoiseTrajectory>> {
    if count == 0 {
        return Err(Error::InvalidArgument("scenario count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigmas: Vec<f64> = (0..horizon)
        .map(|t| noise.sigma_at(first_step + t))
        .collect();
    Ok((0..count)
        .map(|_| {
            NoiseTrajectory(
                sigmas
                    .iter()
                    .map(|&sigma| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        noise.mu + sigma * z
                    })
                    .collect(),
            )
        })
        .collect())
}

/// Cumulative unit responses of one sub-model, indexed by the number of
/// steps remaining in the window.
///
/// `input[j][r - 1]` is the total window effect of a type-`j` message sent
/// with `r` steps remaining (itself included); `noise[r - 1]` is the same for
/// a unit noise draw. Gains only depend on `r`, so one table of length `T`
/// serves every step of a shrinking-horizon run.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseTable {
    input: Vec<Vec<f64>>,
    noise: Vec<f64>,
}

impl ResponseTable {
    pub fn new(model: &PwaModel, regime: usize, len: usize) -> Result<Self> {
        let sub = model.submodel(regime)?;
        let cumulate = |v: Vec<f64>| {
            let mut acc = 0.0;
            v.into_iter()
                .map(|x| {
                    acc += x;
                    acc
                })
                .collect::<Vec<f64>>()
        };
        let input = (0..sub.channels())
            .map(|j| cumulate(sub.input_response(j, len)))
            .collect();
        let noise = cumulate(sub.impulse_response(len));
        Ok(Self { input, noise })
    }

    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    fn check_horizon(&self, horizon: usize) -> Result<()> {
        if horizon > self.len() {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} exceeds response table length {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Gain matrix for the last `horizon` steps of a window.
    pub fn gains(&self, horizon: usize) -> Result<Vec<Vec<f64>>> {
        self.check_horizon(horizon)?;
        Ok((0..horizon)
            .map(|t| {
                let remaining = horizon - t;
                self.input.iter().map(|cum| cum[remaining - 1]).collect()
            })
            .collect())
    }

    /// Weight of each future noise draw in the window total.
    pub fn noise_weights(&self, horizon: usize) -> Result<Vec<f64>> {
        self.check_horizon(horizon)?;
        Ok((0..horizon).map(|t| self.noise[horizon - t - 1]).collect())
    }
}

/// Gains for window steps `first_step..window_len` (0-based, end exclusive):
/// `g[k][j]` is the exact change of the window total from sending message
/// type `j + 1` at step `first_step + k`.
pub fn compute_gains(
    model: &PwaModel,
    regime: usize,
    first_step: usize,
    window_len: usize,
) -> Result<Vec<Vec<f64>>> {
    if first_step > window_len {
        return Err(Error::InvalidArgument(format!(
            "first step {first_step} beyond window end {window_len}"
        )));
    }
    let horizon = window_len - first_step;
    ResponseTable::new(model, regime, horizon)?.gains(horizon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedProblem {
    /// `horizon x channels`, shared by all scenarios.
    pub gains: Vec<Vec<f64>>,
    /// One threshold per scenario.
    pub thetas: Vec<f64>,
    pub first_step: usize,
    pub window_len: usize,
}

impl ReducedProblem {
    pub fn horizon(&self) -> usize {
        self.window_len - self.first_step
    }

    pub fn channels(&self) -> usize {
        self.gains.first().map_or(0, Vec::len)
    }

    pub fn scenario_count(&self) -> usize {
        self.thetas.len()
    }

    /// `sum g*u`, accumulated in step order.
    pub fn total_gain(&self, schedule: &Schedule) -> f64 {
        let mut g = 0.0;
        for (row, gains) in schedule.rows().iter().zip(&self.gains) {
            for (u, gain) in row.iter().zip(gains) {
                if *u == 1 {
                    g += gain;
                }
            }
        }
        g
    }

    pub fn satisfied_count(&self, schedule: &Schedule) -> usize {
        let g = self.total_gain(schedule);
        self.thetas.iter().filter(|&&t| t <= g).count()
    }

    /// Fraction of scenarios meeting the goal under `schedule`.
    pub fn saa_probability(&self, schedule: &Schedule) -> f64 {
        self.satisfied_count(schedule) as f64 / self.scenario_count() as f64
    }

    pub fn write_thetas_csv<W: Write>(&self, mut out: W, with_header: bool) -> Result<()> {
        if with_header {
            writeln!(out, "step,scenario,theta")?;
        }
        for (s, theta) in self.thetas.iter().enumerate() {
            writeln!(out, "{},{},{}", self.first_step, s, theta)?;
        }
        Ok(())
    }
}

/// Builds reduced problems for one model regime and window, reusing a single
/// response table across steps.
#[derive(Clone, Debug)]
pub struct Reducer<'a> {
    model: &'a PwaModel,
    regime: usize,
    window_len: usize,
    table: ResponseTable,
}

impl<'a> Reducer<'a> {
    pub fn new(model: &'a PwaModel, regime: usize, window_len: usize) -> Result<Self> {
        let table = ResponseTable::new(model, regime, window_len)?;
        Ok(Self {
            model,
            regime,
            window_len,
            table,
        })
    }

    pub fn table(&self) -> &ResponseTable {
        &self.table
    }

    /// Reduce the goal test at step `first_step`. `hist` holds the lags just
    /// before `first_step`; `past_outputs_sum` is the realized part of the
    /// goal sum.
    pub fn reduce(
        &self,
        hist: &History,
        first_step: usize,
        past_outputs_sum: f64,
        noise: &[NoiseTrajectory],
        goal: f64,
    ) -> Result<ReducedProblem> {
        if noise.is_empty() {
            return Err(Error::InvalidArgument("noise set must be nonempty".into()));
        }
        if first_step > self.window_len {
            return Err(Error::InvalidArgument(format!(
                "first step {first_step} beyond window end {}",
                self.window_len
            )));
        }
        let horizon = self.window_len - first_step;
        if let Some(bad) = noise.iter().find(|w| w.len() != horizon) {
            return Err(Error::Dimension(format!(
                "noise trajectory covers {} steps, horizon is {horizon}",
                bad.len()
            )));
        }
        let channels = self.model.channels;
        let zero_inputs = vec![vec![0u8; channels]; horizon];
        let nominal: f64 = simulate_trajectory(
            self.model,
            self.regime,
            hist,
            &zero_inputs,
            &vec![0.0; horizon],
        )?
        .iter()
        .sum();
        let weights = self.table.noise_weights(horizon)?;
        let thetas = noise
            .iter()
            .map(|w| {
                let spread: f64 = w.0.iter().zip(&weights).map(|(x, c)| x * c).sum();
                goal - past_outputs_sum - (nominal + spread)
            })
            .collect();
        Ok(ReducedProblem {
            gains: self.table.gains(horizon)?,
            thetas,
            first_step,
            window_len: self.window_len,
        })
    }

    /// Closed-form probability that the window total reaches `goal` under
    /// `schedule` (future steps only), for constant Gaussian noise.
    pub fn analytic_probability(
        &self,
        hist: &History,
        past_outputs_sum: f64,
        schedule: &Schedule,
        goal: f64,
    ) -> Result<f64> {
        let noise = &self.model.noise;
        if noise.sigma_steps.is_some() {
            return Err(Error::Unsupported(
                "analytic probability needs a constant noise sigma; use Monte Carlo".into(),
            ));
        }
        let horizon = schedule.len();
        if horizon > self.window_len {
            return Err(Error::Dimension(format!(
                "schedule of {horizon} steps exceeds window of {}",
                self.window_len
            )));
        }
        let mean_noise = vec![noise.mu; horizon];
        let mean: f64 = past_outputs_sum
            + simulate_trajectory(self.model, self.regime, hist, schedule.rows(), &mean_noise)?
                .iter()
                .sum::<f64>();
        let weights = self.table.noise_weights(horizon)?;
        let sd = noise.sigma * weights.iter().map(|c| c * c).sum::<f64>().sqrt();
        if sd == 0.0 {
            return Ok(if mean >= goal { 1.0 } else { 0.0 });
        }
        let standard = Normal::standard();
        Ok(standard.cdf((mean - goal) / sd))
    }
}

/// One-shot reduction; see [`Reducer::reduce`].
#[allow(clippy::too_many_arguments)]
pub fn reduce(
    model: &PwaModel,
    regime: usize,
    hist: &History,
    first_step: usize,
    window_len: usize,
    past_outputs_sum: f64,
    noise: &[NoiseTrajectory],
    goal: f64,
) -> Result<ReducedProblem> {
    Reducer::new(model, regime, window_len)?.reduce(hist, first_step, past_outputs_sum, noise, goal)
}

/// One-shot closed-form probability; see [`Reducer::analytic_probability`].
pub fn analytic_probability(
    model: &PwaModel,
    regime: usize,
    hist: &History,
    past_outputs_sum: f64,
    schedule: &Schedule,
    goal: f64,
) -> Result<f64> {
    Reducer::new(model, regime, schedule.len())?.analytic_probability(
        hist,
        past_outputs_sum,
        schedule,
        goal,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> PwaModel {
        PwaModel::weekday_reference()
    }

    #[test]
    fn zero_sigma_gives_constant_draws() {
        let noise = NoiseModel::constant(3.25, 0.0);
        let w = sample_noise(&noise, 0, 5, 4, 9).unwrap();
        assert!(w.iter().flat_map(|t| &t.0).all(|&x| x == 3.25));
    }

    #[test]
    fn sample_mean_is_close_to_mu() {
        let noise = NoiseModel::constant(-0.0155, 268.679);
        let w = sample_noise(&noise, 0, 1, 10_000, 2024).unwrap();
        let mean = w.iter().map(|t| t.0[0]).sum::<f64>() / 10_000.0;
        assert!((mean + 0.0155).abs() < 4.0 * 268.679 / 100.0, "mean {mean}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let noise = NoiseModel::constant(0.0, 1.0);
        assert_eq!(
            sample_noise(&noise, 0, 7, 3, 5).unwrap(),
            sample_noise(&noise, 0, 7, 3, 5).unwrap()
        );
        assert_ne!(
            sample_noise(&noise, 0, 7, 3, 5).unwrap(),
            sample_noise(&noise, 0, 7, 3, 6).unwrap()
        );
    }

    #[test]
    fn zero_scenarios_rejected() {
        assert!(sample_noise(&NoiseModel::constant(0.0, 1.0), 0, 3, 0, 1).is_err());
    }

    #[test]
    fn per_step_sigma_is_used() {
        let noise = NoiseModel {
            mu: 0.0,
            sigma: 5.0,
            sigma_steps: Some(vec![0.0, 0.0, 1.0]),
        };
        let w = sample_noise(&noise, 1, 2, 2, 1).unwrap();
        assert!(w.iter().all(|t| t.0[0] == 0.0 && t.0[1] != 0.0));
    }

    #[test]
    fn final_step_gains_are_lag_zero_coefficients() {
        let g = compute_gains(&reference(), 0, 39, 40).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0][0] + 20.418).abs() < 1e-12);
        assert!((g[0][1] - 2.383).abs() < 1e-12);
        assert!((g[0][2] + 14.345).abs() < 1e-12);
    }

    #[test]
    fn penultimate_step_gain_by_hand() {
        let g = compute_gains(&reference(), 0, 38, 40).unwrap();
        let expect = -20.418 + 33.621 + (-0.0052) * (-20.418);
        assert!((g[0][0] - expect).abs() < 1e-12);
        assert!((g[0][0] - 13.3091736).abs() < 1e-9);
    }

    #[test]
    fn empty_future_reduces_to_goal_minus_past() {
        let model = reference();
        let noise = vec![NoiseTrajectory(vec![]); 3];
        let r = reduce(
            &model,
            0,
            &History::zeros(5, 3),
            40,
            40,
            5000.0,
            &noise,
            6016.0,
        )
        .unwrap();
        assert!(r.gains.is_empty());
        assert_eq!(r.thetas, vec![1016.0; 3]);
    }

    #[test]
    fn single_step_threshold_is_minus_intercept() {
        let model = reference();
        let noise = vec![NoiseTrajectory(vec![0.0])];
        let r = reduce(&model, 0, &History::zeros(5, 3), 0, 1, 0.0, &noise, 0.0).unwrap();
        assert!((r.thetas[0] + 80.51).abs() < 1e-12);
    }

    #[test]
    fn analytic_edge_probabilities() {
        let model = reference();
        let hist = History::zeros(5, 3);
        let sched = Schedule::from_choices(3, &[0, 2, 0, 0, 1, 0]).unwrap();
        let p = analytic_probability(&model, 0, &hist, 100.0, &sched, -1e9).unwrap();
        assert_eq!(p, 1.0);

        let mean = 100.0
            + simulate_trajectory(&model, 0, &hist, sched.rows(), &[model.noise.mu; 6])
                .unwrap()
                .iter()
                .sum::<f64>();
        let p = analytic_probability(&model, 0, &hist, 100.0, &sched, mean).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn analytic_with_zero_sigma_is_an_indicator() {
        let mut model = reference();
        model.noise = NoiseModel::constant(0.0, 0.0);
        let hist = History::zeros(5, 3);
        let sched = Schedule::empty(1, 3);
        assert_eq!(
            analytic_probability(&model, 0, &hist, 0.0, &sched, 80.0).unwrap(),
            1.0
        );
        assert_eq!(
            analytic_probability(&model, 0, &hist, 0.0, &sched, 81.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn analytic_refuses_time_varying_sigma() {
        let mut model = reference();
        model.noise.sigma_steps = Some(vec![1.0; 4]);
        let r = analytic_probability(
            &model,
            0,
            &History::zeros(5, 3),
            0.0,
            &Schedule::empty(4, 3),
            0.0,
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn thetas_csv_layout() {
        let r = ReducedProblem {
            gains: vec![vec![1.0]],
            thetas: vec![2.5, -1.0],
            first_step: 7,
            window_len: 8,
        };
        let mut buf = Vec::new();
        r.write_thetas_csv(&mut buf, true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,scenario,theta\n7,0,2.5\n7,1,-1\n"
        );
    }
}
