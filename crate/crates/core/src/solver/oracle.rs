use super::{MilpProblem, Solution};
use crate::error::{Error, Result};

/// Largest enumeration the oracles accept.
pub const ORACLE_LIMIT: f64 = 1e7;

fn guard(problem: &MilpProblem) -> Result<f64> {
    let candidates = ((problem.channels() + 1) as f64).powi(problem.horizon() as i32);
    if candidates > ORACLE_LIMIT {
        return Err(Error::TooLarge {
            candidates,
            limit: ORACLE_LIMIT,
        });
    }
    Ok(candidates)
}

/// Calls `visit` on every choice sequence in lexicographic order
/// (position 0 most significant), admissible or not.
fn enumerate(horizon: usize, channels: usize, mut visit: impl FnMut(&[usize])) {
    let mut choices = vec![0usize; horizon];
    loop {
        visit(&choices);
        let mut pos = horizon;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if choices[pos] < channels {
                choices[pos] += 1;
                break;
            }
            choices[pos] = 0;
        }
    }
}

/// Exhaustive optimum with the shared tie-break. `node_count` reports the
/// number of candidate sequences enumerated.
pub fn brute_force_oracle(problem: &MilpProblem) -> Result<Solution> {
    problem.check()?;
    guard(problem)?;
    let gains = &problem.reduced.gains;
    let thetas = &problem.reduced.thetas;
    let mut enumerated = 0u64;
    // (satisfied, messages, cost, choices)
    let mut best: Option<(usize, usize, f64, Vec<usize>)> = None;
    enumerate(problem.horizon(), problem.channels(), |choices| {
        enumerated += 1;
        if !problem.admits(choices) {
            return;
        }
        let mut gain = 0.0;
        let mut cost = 0.0;
        let mut sent = 0;
        for (t, &c) in choices.iter().enumerate() {
            if c > 0 {
                gain += gains[t][c - 1];
                cost += problem.step_costs[t];
                sent += 1;
            }
        }
        let satisfied = thetas.iter().filter(|&&th| gain >= th).count();
        let better = match &best {
            None => true,
            Some((bs, bm, bc, _)) => {
                satisfied > *bs || (satisfied == *bs && (sent < *bm || (sent == *bm && cost < *bc)))
            }
        };
        if better {
            best = Some((satisfied, sent, cost, choices.to_vec()));
        }
    });
    let (_, _, _, choices) = best.expect("the empty schedule is always admissible");
    Ok(problem.solution_for(choices, enumerated))
}

/// Optimum of the big-M program itself, enumerating schedules and the
/// indicators `p_s` (which decouple per scenario once `u` is fixed).
///
/// Fails if some admissible schedule admits no indicator value for some
/// scenario, i.e. the big-M constants cut a feasible point.
pub fn big_m_optimum(problem: &MilpProblem) -> Result<usize> {
    problem.check()?;
    guard(problem)?;
    let gains = &problem.reduced.gains;
    let mut best = 0usize;
    let mut cut = None;
    enumerate(problem.horizon(), problem.channels(), |choices| {
        if cut.is_some() || !problem.admits(choices) {
            return;
        }
        let gain: f64 = choices
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(t, &c)| gains[t][c - 1])
            .sum();
        let mut ones = 0;
        for s in 0..problem.reduced.thetas.len() {
            if problem.indicator_holds(s, gain, true) {
                ones += 1;
            } else if !problem.indicator_holds(s, gain, false) {
                cut = Some((choices.to_vec(), s));
                return;
            }
        }
        best = best.max(ones);
    });
    match cut {
        Some((choices, s)) => Err(Error::InvalidArgument(format!(
            "big-M row {s} cuts admissible schedule {choices:?}"
        ))),
        None => Ok(best),
    }
}
