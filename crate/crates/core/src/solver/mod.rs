//! Per-step decision problem.
//!
//! The stochastic program maximizes the number of scenarios `s` whose
//! indicator `p_s` can be set to one under
//!
//! ```text
//! sum g*u - theta_s >= M_s (p_s - 1),   p_s in {0, 1}
//! ```
//!
//! subject to the burden constraints. All solvers work on the reduced
//! gain/threshold form and agree on a single optimum through a fixed
//! tie-break: most satisfied scenarios, then fewest messages, then lowest
//! cost, then the lexicographically smallest per-step choice sequence
//! (no message < type 1 < type 2 < ...).

mod oracle;
mod search;

use serde::{Deserialize, Serialize};

use crate::constraints::{BurdenConstraints, CostProfile, Remaining, Schedule};
use crate::error::{Error, Result};
use crate::scenario::ReducedProblem;

pub use oracle::{big_m_optimum, brute_force_oracle, ORACLE_LIMIT};
pub use search::{solve_branch_and_bound, solve_shared_gain_fast_path};

/// Floor on every big-M constant.
pub const BIG_M_FLOOR: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub reduced: ReducedProblem,
    pub cons: BurdenConstraints,
    /// Composite cost of each future step `first_step..window_len`.
    pub step_costs: Vec<f64>,
    /// Budget left after the realized past.
    pub remaining: Remaining,
    pub big_m: Vec<f64>,
}

/// Attach burden constraints and big-M constants to a reduced problem.
///
/// `M_s = max(1, theta_s - L)` with `L = sum_{k,j} min(0, g[k][j])`, the
/// smallest `sum g*u` over the box relaxation. With `p_s = 0` the indicator
/// row then reads `sum g*u >= theta_s - M_s`, which every schedule satisfies.
pub fn formulate_big_m(
    reduced: ReducedProblem,
    cons: &BurdenConstraints,
    costs: &CostProfile,
    remaining: Remaining,
) -> Result<MilpProblem> {
    if reduced.window_len != cons.window_len || costs.len() != cons.window_len {
        return Err(Error::Dimension(format!(
            "reduced window {}, constraint window {} and {} costs disagree",
            reduced.window_len,
            cons.window_len,
            costs.len()
        )));
    }
    let floor = box_minimum(&reduced.gains);
    let big_m = reduced
        .thetas
        .iter()
        .map(|t| (t - floor).max(BIG_M_FLOOR))
        .collect();
    let step_costs = costs.c[reduced.first_step..].to_vec();
    Ok(MilpProblem {
        reduced,
        cons: cons.clone(),
        step_costs,
        remaining,
        big_m,
    })
}

pub(crate) fn box_minimum(gains: &[Vec<f64>]) -> f64 {
    gains.iter().flatten().map(|g| g.min(0.0)).sum()
}

impl MilpProblem {
    pub fn horizon(&self) -> usize {
        self.reduced.horizon()
    }

    pub fn channels(&self) -> usize {
        self.reduced.channels()
    }

    pub fn check(&self) -> Result<()> {
        let r = &self.reduced;
        let mut bad = Vec::new();
        if r.thetas.is_empty() {
            bad.push("no scenarios".to_string());
        }
        if r.first_step > r.window_len {
            bad.push(format!(
                "first step {} beyond window end {}",
                r.first_step, r.window_len
            ));
        } else if r.gains.len() != r.horizon() || self.step_costs.len() != r.horizon() {
            bad.push(format!(
                "horizon {} but {} gain rows and {} step costs",
                r.horizon(),
                r.gains.len(),
                self.step_costs.len()
            ));
        }
        let m = r.channels();
        if r.gains.iter().any(|row| row.len() != m) {
            bad.push("ragged gain matrix".to_string());
        }
        if r.gains
            .iter()
            .flatten()
            .chain(&r.thetas)
            .any(|v| !v.is_finite())
        {
            bad.push("non-finite gain or threshold".to_string());
        }
        if self.step_costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            bad.push("step costs must be finite and >= 0".to_string());
        }
        if self.cons.spacing_steps == 0 {
            bad.push("spacing_steps must be >= 1".to_string());
        }
        if self.big_m.len() != r.thetas.len() {
            bad.push(format!(
                "{} big-M constants for {} scenarios",
                self.big_m.len(),
                r.thetas.len()
            ));
        } else {
            let floor = box_minimum(&r.gains);
            for (s, (m_s, t)) in self.big_m.iter().zip(&r.thetas).enumerate() {
                if *m_s < (t - floor).max(BIG_M_FLOOR) {
                    bad.push(format!("M[{s}] = {m_s} is too small"));
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "malformed problem: {}",
                bad.join("; ")
            )))
        }
    }

    /// Whether `choices` (one entry per future step, 0 = none) satisfies
    /// spacing, count and budget given the realized past.
    pub fn admits(&self, choices: &[usize]) -> bool {
        if choices.len() != self.horizon() || choices.iter().any(|&c| c > self.channels()) {
            return false;
        }
        let first = self.reduced.first_step;
        let mut next_free = self.remaining.blocked_until;
        let mut sent = 0;
        let mut cost = 0.0;
        for (t, &c) in choices.iter().enumerate() {
            if c == 0 {
                continue;
            }
            if first + t < next_free {
                return false;
            }
            next_free = first + t + self.cons.spacing_steps;
            sent += 1;
            cost += self.step_costs[t];
        }
        sent <= self.remaining.messages_left && cost_fits(cost, self.remaining.cost_left)
    }

    /// Whether the big-M row of scenario `s` holds for `choices` and `p_s`.
    pub fn indicator_holds(&self, s: usize, total_gain: f64, p: bool) -> bool {
        let rhs = if p { 0.0 } else { -self.big_m[s] };
        total_gain - self.reduced.thetas[s] >= rhs
    }

    pub(crate) fn solution_for(&self, choices: Vec<usize>, node_count: u64) -> Solution {
        let schedule = Schedule::from_choices(self.channels(), &choices)
            .expect("choices within channel range");
        let mut cost = 0.0;
        for (t, &c) in choices.iter().enumerate() {
            if c > 0 {
                cost += self.step_costs[t];
            }
        }
        let satisfied = self.reduced.satisfied_count(&schedule);
        Solution {
            message_count: choices.iter().filter(|&&c| c > 0).count(),
            choices,
            schedule,
            satisfied_count: satisfied,
            objective: satisfied as f64 / self.reduced.scenario_count() as f64,
            total_cost: cost,
            node_count,
        }
    }
}

pub(crate) fn cost_fits(cost: f64, left: f64) -> bool {
    cost <= left + crate::constraints::BUDGET_TOLERANCE * left.max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Per future step: 0 for no message, `j` for message type `j`.
    pub choices: Vec<usize>,
    pub schedule: Schedule,
    pub satisfied_count: usize,
    pub objective: f64,
    pub message_count: usize,
    pub total_cost: f64,
    /// Search nodes visited (candidates enumerated, for the oracle).
    pub node_count: u64,
}

impl Solution {
    /// Equal in everything but search effort.
    pub fn same_decision(&self, other: &Solution) -> bool {
        self.choices == other.choices
            && self.satisfied_count == other.satisfied_count
            && self.message_count == other.message_count
            && self.total_cost.to_bits() == other.total_cost.to_bits()
    }

    /// First decision of the plan (0 = no message); no message for an empty plan.
    pub fn first_choice(&self) -> usize {
        self.choices.first().copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reduced(gains: Vec<Vec<f64>>, thetas: Vec<f64>) -> ReducedProblem {
        let h = gains.len();
        ReducedProblem {
            gains,
            thetas,
            first_step: 0,
            window_len: h,
        }
    }

    fn open(h: usize, alpha: usize) -> (BurdenConstraints, CostProfile, Remaining) {
        let cons = BurdenConstraints::new(alpha, 10.0, 1, h.max(1)).unwrap();
        let rem = Remaining {
            messages_left: alpha,
            cost_left: 10.0,
            blocked_until: 0,
        };
        (cons, CostProfile::free(h.max(1)), rem)
    }

    #[test]
    fn nonnegative_gains_give_theta_as_big_m() {
        let (c, k, r) = open(2, 2);
        let p = formulate_big_m(
            reduced(vec![vec![1.0, 0.0], vec![3.0, 2.0]], vec![50.0]),
            &c,
            &k,
            r,
        )
        .unwrap();
        assert_eq!(p.big_m, vec![50.0]);
    }

    #[test]
    fn guaranteed_goal_floors_big_m() {
        let (c, k, r) = open(1, 1);
        let p = formulate_big_m(reduced(vec![vec![-5.0]], vec![-10.0, -5.0]), &c, &k, r).unwrap();
        assert_eq!(p.big_m, vec![1.0, 1.0]);
    }

    #[test]
    fn final_step_reference_gains_big_m() {
        let (c, k, r) = open(1, 1);
        let p = formulate_big_m(
            reduced(vec![vec![-20.418, 2.383, -14.345]], vec![10.0]),
            &c,
            &k,
            r,
        )
        .unwrap();
        assert!((box_minimum(&p.reduced.gains) + 34.763).abs() < 1e-12);
        assert!((p.big_m[0] - 44.763).abs() < 1e-12);
        p.check().unwrap();
    }

    #[test]
    fn check_flags_small_big_m() {
        let (c, k, r) = open(1, 1);
        let mut p = formulate_big_m(reduced(vec![vec![-3.0]], vec![10.0]), &c, &k, r).unwrap();
        p.big_m[0] = 5.0;
        assert!(p.check().is_err());
    }

    #[test]
    fn admits_respects_blocked_steps_and_budget() {
        let cons = BurdenConstraints::new(3, 1.0, 2, 6).unwrap();
        let costs = CostProfile {
            c_time: vec![1.0; 6],
            c_step: vec![0.4; 6],
            c: vec![0.4; 6],
        };
        let r = reduced(vec![vec![1.0]; 4], vec![0.0]);
        let r = ReducedProblem {
            first_step: 2,
            window_len: 6,
            ..r
        };
        let rem = Remaining {
            messages_left: 2,
            cost_left: 0.8,
            blocked_until: 3,
        };
        let p = formulate_big_m(r, &cons, &costs, rem).unwrap();
        assert!(p.admits(&[0, 1, 0, 1]));
        assert!(!p.admits(&[1, 0, 0, 0]));
        assert!(!p.admits(&[0, 1, 1, 0]));
        let tight = MilpProblem {
            remaining: Remaining {
                cost_left: 0.5,
                ..rem
            },
            ..p
        };
        assert!(!tight.admits(&[0, 1, 0, 1]));
    }
}
