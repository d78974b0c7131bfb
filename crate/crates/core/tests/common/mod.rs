#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stepmpc::constraints::{BurdenConstraints, CostProfile, Remaining};
use stepmpc::model::{History, PwaModel};
use stepmpc::scenario::ReducedProblem;
use stepmpc::solver::{formulate_big_m, MilpProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random small decision problem: horizon <= `max_h`, channels <= `max_m`,
/// scenarios <= `max_n`.
pub fn random_problem(seed: u64, max_h: usize, max_m: usize, max_n: usize) -> MilpProblem {
    let (reduced, cons, profile, remaining) = random_parts(seed, max_h, max_m, max_n);
    formulate_big_m(reduced, &cons, &profile, remaining).unwrap()
}

/// The pieces of [`random_problem`], before formulation.
pub fn random_parts(
    seed: u64,
    max_h: usize,
    max_m: usize,
    max_n: usize,
) -> (ReducedProblem, BurdenConstraints, CostProfile, Remaining) {
    let mut r = rng(seed);
    let h = r.random_range(0..=max_h);
    let m = r.random_range(1..=max_m);
    let n = r.random_range(1..=max_n);
    let first = r.random_range(0..3);
    let window = first + h;
    let gains: Vec<Vec<f64>> = (0..h)
        .map(|_| (0..m).map(|_| r.random_range(-30.0..60.0)).collect())
        .collect();
    let thetas: Vec<f64> = (0..n).map(|_| r.random_range(-40.0..160.0)).collect();
    let costs: Vec<f64> = (0..window).map(|_| r.random_range(0.0..1.0)).collect();
    let spacing = r.random_range(1..=3);
    let alpha = r.random_range(0..=window.min(5));
    let cons = BurdenConstraints::new(alpha, 10.0, spacing, window).unwrap();
    let remaining = Remaining {
        messages_left: r.random_range(0..=alpha),
        cost_left: r.random_range(0.0..2.5),
        blocked_until: first + r.random_range(0..=2usize).min(h),
    };
    let profile = CostProfile {
        c_time: vec![1.0; window],
        c_step: costs.clone(),
        c: costs,
    };
    let reduced = ReducedProblem {
        gains,
        thetas,
        first_step: first,
        window_len: window,
    };
    (reduced, cons, profile, remaining)
}

/// Random lags for the reference model.
pub fn random_history(r: &mut ChaCha8Rng, order: usize, channels: usize) -> History {
    History {
        y_past: (0..order).map(|_| r.random_range(0.0..400.0)).collect(),
        u_past: (0..order)
            .map(|_| {
                let mut row = vec![0u8; channels];
                if r.random_bool(0.3) {
                    row[r.random_range(0..channels)] = 1;
                }
                row
            })
            .collect(),
    }
}

/// Random one-hot-or-empty input rows.
pub fn random_inputs(
    r: &mut ChaCha8Rng,
    steps: usize,
    channels: usize,
    density: f64,
) -> Vec<Vec<u8>> {
    (0..steps)
        .map(|_| {
            let mut row = vec![0u8; channels];
            if r.random_bool(density) {
                row[r.random_range(0..channels)] = 1;
            }
            row
        })
        .collect()
}

pub fn reference() -> PwaModel {
    PwaModel::weekday_reference()
}

/// Every per-step choice sequence (0 = none, `j` = type `j`) of length `h`.
pub fn all_sequences(h: usize, m: usize) -> Vec<Vec<usize>> {
    if h == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for tail in all_sequences(h - 1, m) {
        for c in 0..=m {
            let mut s = vec![c];
            s.extend_from_slice(&tail);
            out.push(s);
        }
    }
    out.sort();
    out
}

/// Gain of a choice sequence, summed in step order.
pub fn gain_of(gains: &[Vec<f64>], choices: &[usize]) -> f64 {
    choices
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(t, &c)| gains[t][c - 1])
        .sum()
}

pub fn count_reached(thetas: &[f64], gain: f64) -> usize {
    thetas.iter().filter(|&&t| gain >= t).count()
}
