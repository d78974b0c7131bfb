use log::{debug, trace};

use super::{cost_fits, MilpProblem, Solution};
use crate::error::Result;

/// Precomputed data shared by the depth-first searches.
struct Tree<'a> {
    problem: &'a MilpProblem,
    horizon: usize,
    first: usize,
    spacing: usize,
    /// Thresholds, ascending.
    sorted: Vec<f64>,
    /// `upper[t][c]`: the largest total of positive gains collectable from
    /// future index `t` on with at most `c` spaced messages, budget ignored.
    upper: Vec<Vec<f64>>,
    /// Absolute slack added to every bound to absorb summation-order rounding.
    slack: f64,
    nodes: u64,
}

impl<'a> Tree<'a> {
    fn new(problem: &'a MilpProblem) -> Result<Self> {
        problem.check()?;
        let horizon = problem.horizon();
        let spacing = problem.cons.spacing_steps;
        let cap = problem.remaining.messages_left.min(horizon);
        let best: Vec<f64> = problem
            .reduced
            .gains
            .iter()
            .map(|row| row.iter().copied().fold(0.0, f64::max))
            .collect();
        let mut upper = vec![vec![0.0; cap + 1]; horizon + spacing + 1];
        for t in (0..horizon).rev() {
            for c in 0..=cap {
                let skip: f64 = upper[t + 1][c];
                upper[t][c] = if c > 0 {
                    skip.max(best[t] + upper[t + spacing][c - 1])
                } else {
                    skip
                };
            }
        }
        let magnitude: f64 = best.iter().sum::<f64>() + 1.0;
        let mut sorted = problem.reduced.thetas.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            problem,
            horizon,
            first: problem.reduced.first_step,
            spacing,
            sorted,
            upper,
            slack: 1e-9 * magnitude,
            nodes: 0,
        })
    }

    fn satisfied(&self, gain: f64) -> usize {
        self.sorted.partition_point(|&t| t <= gain)
    }

    /// Optimistic extra gain from index `t` with `left` messages, given the
    /// earliest index a message may use.
    fn optimistic(&self, t: usize, next_free: usize, left: usize) -> f64 {
        let from = t.max(next_free).min(self.horizon);
        let left = left.min(self.upper[0].len() - 1);
        self.upper[from][left] + self.slack
    }

    /// Message types worth branching on at index `t`, in type order.
    /// Nonpositive gains are dominated by sending nothing.
    fn useful_types(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.problem.reduced.gains[t]
            .iter()
            .enumerate()
            .filter(|(_, g)| **g > 0.0)
            .map(|(j, _)| j + 1)
    }
}

/// Partial assignment along the current search path.
#[derive(Clone, Copy)]
struct Node {
    t: usize,
    /// First future index at which spacing allows a message.
    next_free: usize,
    sent: usize,
    cost: f64,
    gain: f64,
}

impl Node {
    fn root(tree: &Tree) -> Self {
        let blocked = tree
            .problem
            .remaining
            .blocked_until
            .saturating_sub(tree.first);
        Node {
            t: 0,
            next_free: blocked,
            sent: 0,
            cost: 0.0,
            gain: 0.0,
        }
    }

    fn can_send(&self, cap: usize) -> bool {
        self.t >= self.next_free && self.sent < cap
    }

    fn send(&self, tree: &Tree, t_gain: f64) -> Option<Node> {
        let cost = self.cost + tree.problem.step_costs[self.t];
        if !cost_fits(cost, tree.problem.remaining.cost_left) {
            return None;
        }
        Some(Node {
            t: self.t + 1,
            next_free: self.t + tree.spacing,
            sent: self.sent + 1,
            cost,
            gain: self.gain + t_gain,
        })
    }

    fn skip(&self) -> Node {
        Node {
            t: self.t + 1,
            ..*self
        }
    }
}

#[derive(Clone)]
struct Incumbent {
    satisfied: usize,
    sent: usize,
    cost: f64,
    choices: Vec<usize>,
}

/// Exact optimum by depth-first branch-and-bound over per-step choices,
/// exploring "no message" first. Bounds count the scenarios whose threshold
/// is within reach of the partial gain plus an optimistic completion.
pub fn solve_branch_and_bound(problem: &MilpProblem) -> Result<Solution> {
    let mut tree = Tree::new(problem)?;
    let cap = problem.remaining.messages_left;
    let mut path = vec![0usize; tree.horizon];
    let mut best: Option<Incumbent> = None;
    let root = Node::root(&tree);
    branch(&mut tree, root, cap, &mut path, &mut best);
    let best = best.expect("the empty schedule is always feasible");
    debug!(
        "branch-and-bound: {} nodes, satisfied {}/{}",
        tree.nodes,
        best.satisfied,
        tree.sorted.len()
    );
    Ok(problem.solution_for(best.choices, tree.nodes))
}

fn branch(
    tree: &mut Tree,
    node: Node,
    cap: usize,
    path: &mut [usize],
    best: &mut Option<Incumbent>,
) {
    tree.nodes += 1;
    let more_possible = node.t < tree.horizon && node.sent < cap && node.next_free < tree.horizon;
    if !more_possible {
        for c in &mut path[node.t..] {
            *c = 0;
        }
        let satisfied = tree.satisfied(node.gain);
        let better = match best {
            None => true,
            Some(inc) => {
                satisfied > inc.satisfied
                    || (satisfied == inc.satisfied
                        && (node.sent < inc.sent
                            || (node.sent == inc.sent && node.cost < inc.cost)))
            }
        };
        if better {
            trace!(
                "incumbent: satisfied {satisfied}, {} messages, cost {}",
                node.sent,
                node.cost
            );
            *best = Some(Incumbent {
                satisfied,
                sent: node.sent,
                cost: node.cost,
                choices: path.to_vec(),
            });
        }
        return;
    }
    if let Some(inc) = best {
        let reach =
            tree.satisfied(node.gain + tree.optimistic(node.t, node.next_free, cap - node.sent));
        let can_tie_better =
            node.sent < inc.sent || (node.sent == inc.sent && node.cost < inc.cost);
        if reach < inc.satisfied || (reach == inc.satisfied && !can_tie_better) {
            return;
        }
    }

    path[node.t] = 0;
    branch(tree, node.skip(), cap, path, best);
    if node.can_send(cap) {
        let types: Vec<usize> = tree.useful_types(node.t).collect();
        for j in types {
            let gain = tree.problem.reduced.gains[node.t][j - 1];
            if let Some(child) = node.send(tree, gain) {
                path[node.t] = j;
                branch(tree, child, cap, path, best);
            }
        }
    }
}

/// Exact optimum using the fact that all scenarios share the same gains:
/// the satisfied count is nondecreasing in `G(u) = sum g*u`, so the best
/// count is the one reached by the largest feasible `G`. A second search
/// then picks, among schedules reaching that count, the one preferred by the
/// tie-break.
pub fn solve_shared_gain_fast_path(problem: &MilpProblem) -> Result<Solution> {
    let mut tree = Tree::new(problem)?;
    let cap = problem.remaining.messages_left;

    let mut best_gain = 0.0;
    let root = Node::root(&tree);
    max_gain(&mut tree, root, cap, &mut best_gain);
    let target_count = tree.satisfied(best_gain);
    let horizon = tree.horizon;
    debug!(
        "fast path: max gain {best_gain} reaches {target_count}/{} scenarios",
        tree.sorted.len()
    );

    // Needed gain; the empty schedule has gain exactly 0.
    if target_count == 0 || tree.sorted[target_count - 1] <= 0.0 {
        let nodes = tree.nodes;
        return Ok(problem.solution_for(vec![0; horizon], nodes));
    }
    let needed = tree.sorted[target_count - 1];

    let mut path = vec![0usize; horizon];
    for limit in 1..=cap.min(horizon) {
        let mut found: Option<(f64, Vec<usize>)> = None;
        let root = Node::root(&tree);
        cheapest_reaching(&mut tree, root, limit, needed, &mut path, &mut found);
        if let Some((_, choices)) = found {
            let nodes = tree.nodes;
            return Ok(problem.solution_for(choices, nodes));
        }
    }
    unreachable!("a schedule with gain {best_gain} was found in the first pass")
}

/// Largest feasible total gain. Children are visited best-gain first.
fn max_gain(tree: &mut Tree, node: Node, cap: usize, best: &mut f64) {
    tree.nodes += 1;
    if node.gain > *best {
        *best = node.gain;
    }
    if node.t >= tree.horizon || node.sent >= cap || node.next_free >= tree.horizon {
        return;
    }
    if node.gain + tree.optimistic(node.t, node.next_free, cap - node.sent) <= *best {
        return;
    }
    if node.can_send(cap) {
        let mut types: Vec<(usize, f64)> = tree
            .useful_types(node.t)
            .map(|j| (j, tree.problem.reduced.gains[node.t][j - 1]))
            .collect();
        types.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (_, gain) in types {
            if let Some(child) = node.send(tree, gain) {
                max_gain(tree, child, cap, best);
            }
        }
    }
    max_gain(tree, node.skip(), cap, best);
}

/// Lowest-cost, lexicographically first schedule with at most `limit`
/// messages whose gain reaches `needed`.
fn cheapest_reaching(
    tree: &mut Tree,
    node: Node,
    limit: usize,
    needed: f64,
    path: &mut [usize],
    found: &mut Option<(f64, Vec<usize>)>,
) {
    tree.nodes += 1;
    if let Some((cost, _)) = found {
        if node.cost >= *cost {
            return;
        }
    }
    if node.gain >= needed {
        for c in &mut path[node.t..] {
            *c = 0;
        }
        *found = Some((node.cost, path.to_vec()));
        return;
    }
    if node.t >= tree.horizon || node.sent >= limit {
        return;
    }
    if node.gain + tree.optimistic(node.t, node.next_free, limit - node.sent) < needed {
        return;
    }
    path[node.t] = 0;
    cheapest_reaching(tree, node.skip(), limit, needed, path, found);
    if node.can_send(limit) {
        let types: Vec<usize> = tree.useful_types(node.t).collect();
        for j in types {
            let gain = tree.problem.reduced.gains[node.t][j - 1];
            if let Some(child) = node.send(tree, gain) {
                path[node.t] = j;
                cheapest_reaching(tree, child, limit, needed, path, found);
            }
        }
    }
}
