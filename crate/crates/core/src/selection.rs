//! Greedy leader selection for static objectives, plus the random- and
//! degree-based baselines used for comparison.
//!
//! The bound is supermodular and nonincreasing in the leader set, so marginal
//! gains shrink as the set grows. That makes priority-queue (lazy) greedy
//! exact: a stale gain is always an upper bound on the current one, and a
//! candidate whose refreshed gain tops the queue is the true argmax. The
//! naive full scan is kept behind [`GreedyMode::Naive`] for verification;
//! both modes break ties toward the lowest node index and return identical
//! selections.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::dynamics::total_error;
use crate::error::{Error, Result};
use crate::evaluator::ErrorEvaluator;
use crate::graph::Topology;
use crate::Scalar;

/// Outcome of one selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult<T> {
    /// Chosen leaders in insertion order.
    pub leaders: Vec<usize>,
    /// Objective value after each insertion; nonincreasing.
    pub bound_trace: Vec<T>,
    /// Final objective value.
    pub objective: T,
    /// Number of objective evaluations the algorithm requested.
    pub evaluations: usize,
}

impl<T: Scalar + Serialize> Serialize for SelectionResult<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        // Node ids are 1-based on the wire, matching the topology schema.
        let mut s = serializer.serialize_struct("SelectionResult", 4)?;
        let leaders: Vec<usize> = self.leaders.iter().map(|&v| v + 1).collect();
        s.serialize_field("leaders", &leaders)?;
        s.serialize_field("bound_trace", &self.bound_trace)?;
        s.serialize_field("objective", &self.objective)?;
        s.serialize_field("evaluations", &self.evaluations)?;
        s.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyMode {
    /// Priority-queue greedy with stale-gain refresh.
    Lazy,
    /// Full argmax scan each step.
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StopRule<T> {
    Budget(usize),
    Threshold(T),
}

struct Candidate<T> {
    gain: T,
    after: T,
    node: usize,
    stamp: usize,
}

impl<T: Scalar> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.gain == other.gain && self.node == other.node
    }
}
impl<T: Scalar> Eq for Candidate<T> {}
impl<T: Scalar> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: larger gain first, then lower node index.
        self.gain
            .partial_cmp(&other.gain)
            .expect("gain must not be NaN")
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Greedy minimization of a nonincreasing set objective.
///
/// `objective(&[])` may fail with [`Error::DivergentIntegral`]; the first
/// step then selects the singleton with the smallest objective value.
fn greedy_minimize<T: Scalar>(
    n: usize,
    mut objective: impl FnMut(&[usize]) -> Result<T>,
    stop: StopRule<T>,
    mode: GreedyMode,
) -> Result<SelectionResult<T>> {
    let mut evaluations = 0usize;
    let mut eval = |set: &[usize]| -> Result<T> {
        evaluations += 1;
        objective(set)
    };

    let mut base: Option<T> = match eval(&[]) {
        Ok(v) => Some(v),
        Err(Error::DivergentIntegral) => None,
        Err(e) => return Err(e),
    };

    let mut selected: Vec<usize> = Vec::new();
    let mut trace: Vec<T> = Vec::new();
    let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::new();
    let mut in_set = vec![false; n];

    let done = |selected: &Vec<usize>, base: &Option<T>| -> bool {
        match stop {
            StopRule::Budget(k) => selected.len() >= k,
            StopRule::Threshold(alpha) => match base {
                Some(b) => *b <= alpha,
                None => false,
            },
        }
    };

    while !done(&selected, &base) && selected.len() < n {
        let step = selected.len();

        let chosen: Candidate<T> = match base {
            None => {
                // Divergent base: rank singletons by value directly.
                let mut best: Option<Candidate<T>> = None;
                for v in 0..n {
                    let mut set = selected.clone();
                    set.push(v);
                    let after = eval(&set)?;
                    let better = match &best {
                        None => true,
                        Some(b) => after < b.after,
                    };
                    if better {
                        best = Some(Candidate {
                            gain: T::zero(),
                            after,
                            node: v,
                            stamp: step,
                        });
                    }
                }
                best.expect("nonempty ground set")
            }
            Some(b) if mode == GreedyMode::Naive => {
                let mut best: Option<Candidate<T>> = None;
                for (v, &taken) in in_set.iter().enumerate() {
                    if taken {
                        continue;
                    }
                    let mut set = selected.clone();
                    set.push(v);
                    let after = eval(&set)?;
                    let gain = b - after;
                    let better = match &best {
                        None => true,
                        Some(cand) => gain > cand.gain,
                    };
                    if better {
                        best = Some(Candidate {
                            gain,
                            after,
                            node: v,
                            stamp: step,
                        });
                    }
                }
                best.expect("candidates remain")
            }
            Some(b) => {
                if heap.is_empty() {
                    // Seed with upper bounds: a gain never exceeds the
                    // current value of a nonnegative nonincreasing function.
                    for (v, &taken) in in_set.iter().enumerate() {
                        if !taken {
                            heap.push(Candidate {
                                gain: b,
                                after: T::zero(),
                                node: v,
                                stamp: usize::MAX,
                            });
                        }
                    }
                }
                loop {
                    let top = heap.pop().expect("heap holds every unselected node");
                    if in_set[top.node] {
                        continue;
                    }
                    if top.stamp == step {
                        break top;
                    }
                    let mut set = selected.clone();
                    set.push(top.node);
                    let after = eval(&set)?;
                    heap.push(Candidate {
                        gain: b - after,
                        after,
                        node: top.node,
                        stamp: step,
                    });
                }
            }
        };

        in_set[chosen.node] = true;
        selected.push(chosen.node);
        base = Some(chosen.after);
        trace.push(chosen.after);
    }

    let objective_value = match base {
        Some(b) => b,
        None => return Err(Error::DivergentIntegral),
    };
    Ok(SelectionResult {
        leaders: selected,
        bound_trace: trace,
        objective: objective_value,
        evaluations,
    })
}

/// Select exactly `k` leaders greedily to minimize the evaluator's bound.
pub fn select_k_leaders<T: Scalar>(
    evaluator: &ErrorEvaluator<T>,
    k: usize,
) -> Result<SelectionResult<T>> {
    select_k_leaders_with(evaluator, k, GreedyMode::Lazy)
}

pub fn select_k_leaders_with<T: Scalar>(
    evaluator: &ErrorEvaluator<T>,
    k: usize,
    mode: GreedyMode,
) -> Result<SelectionResult<T>> {
    let n = evaluator.n();
    if k < 1 || k > n {
        return Err(Error::BudgetOutOfRange { k, n });
    }
    greedy_minimize(n, |set| evaluator.bound(set), StopRule::Budget(k), mode)
}

/// Grow the leader set greedily until the bound is at most `alpha`.
/// Termination is guaranteed: the full node set achieves bound zero.
pub fn select_minimal_leaders<T: Scalar>(
    evaluator: &ErrorEvaluator<T>,
    alpha: T,
) -> Result<SelectionResult<T>> {
    select_minimal_leaders_with(evaluator, alpha, GreedyMode::Lazy)
}

pub fn select_minimal_leaders_with<T: Scalar>(
    evaluator: &ErrorEvaluator<T>,
    alpha: T,
    mode: GreedyMode,
) -> Result<SelectionResult<T>> {
    if alpha < T::zero() {
        return Err(Error::Numerical("error budget must be nonnegative".into()));
    }
    greedy_minimize(
        evaluator.n(),
        |set| evaluator.bound(set),
        StopRule::Threshold(alpha),
        mode,
    )
}

/// Non-optimizing reference policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselinePolicy {
    /// `k` distinct nodes sampled uniformly.
    Random,
    /// The `k` highest out-degree nodes (ties by index).
    MaxDegree,
    /// The `k` nodes whose out-degree is closest to the mean (ties by index).
    AverageDegree,
}

/// Pick `k` leaders by a baseline policy; the objective and trace are
/// computed with the same evaluator as the greedy algorithms so results are
/// directly comparable. Degrees are read from `topo`, which for switched
/// models is the underlying (base) topology.
pub fn select_baseline<T: Scalar>(
    topo: &Topology<T>,
    evaluator: &ErrorEvaluator<T>,
    k: usize,
    policy: BaselinePolicy,
    rng: &mut impl Rng,
) -> Result<SelectionResult<T>> {
    let n = topo.n();
    if k < 1 || k > n {
        return Err(Error::BudgetOutOfRange { k, n });
    }
    let leaders: Vec<usize> = match policy {
        BaselinePolicy::Random => rand::seq::index::sample(rng, n, k).into_vec(),
        BaselinePolicy::MaxDegree => {
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.sort_by_key(|&v| (std::cmp::Reverse(topo.out_degree(v)), v));
            nodes.truncate(k);
            nodes
        }
        BaselinePolicy::AverageDegree => {
            let degrees: Vec<f64> = (0..n).map(|v| topo.out_degree(v) as f64).collect();
            let mean = degrees.iter().sum::<f64>() / n as f64;
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.sort_by(|&a, &b| {
                let da = (degrees[a] - mean).abs();
                let db = (degrees[b] - mean).abs();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            nodes.truncate(k);
            nodes
        }
    };

    let mut trace = Vec::with_capacity(k);
    let mut evaluations = 0usize;
    for end in 1..=k {
        trace.push(evaluator.bound(&leaders[..end])?);
        evaluations += 1;
    }
    let objective = *trace.last().expect("k >= 1");
    Ok(SelectionResult {
        leaders,
        bound_trace: trace,
        objective,
        evaluations,
    })
}

/// Greedy selection on the integrated (total) error objective. The first
/// step ranks singletons by their total error, since the empty set
/// diverges.
pub fn select_k_total_error<T: Scalar>(
    topo: &Topology<T>,
    k: usize,
    p: T,
    tol: T,
) -> Result<SelectionResult<T>> {
    select_k_total_error_with(topo, k, p, tol, GreedyMode::Lazy)
}

pub fn select_k_total_error_with<T: Scalar>(
    topo: &Topology<T>,
    k: usize,
    p: T,
    tol: T,
    mode: GreedyMode,
) -> Result<SelectionResult<T>> {
    let n = topo.n();
    if k < 1 || k > n {
        return Err(Error::BudgetOutOfRange { k, n });
    }
    if !topo.is_strongly_connected() {
        return Err(Error::NotStronglyConnected);
    }
    greedy_minimize(
        n,
        |set| {
            if set.is_empty() {
                Err(Error::DivergentIntegral)
            } else if set.len() == n {
                Ok(T::zero())
            } else {
                Ok(total_error(topo, set, p, tol)?.value)
            }
        },
        StopRule::Budget(k),
        mode,
    )
}
