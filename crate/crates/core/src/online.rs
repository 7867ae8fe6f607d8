//! Online leader selection for unknown topology processes.
//!
//! One multiplicative-weights expert per (node, slot) pair steers a greedy
//! selection without topology foreknowledge: after every epoch the weights
//! are refreshed from the convergence-error bound each node *would* have
//! produced on the just-observed topology, and the next epoch's leaders are
//! sampled slot by slot from the normalized weights.
//!
//! Weighted sampling is implemented as an exponential race (argmin of
//! `E_i / w_i` with i.i.d. unit exponentials), drawing exactly one 64-bit
//! word per node per slot. Relabeling nodes together with their per-node
//! draws therefore permutes the selected sets.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::evaluator::ErrorEvaluator;
use crate::graph::{EpochSequence, Topology};
use crate::selection::select_k_leaders;
use crate::walk::k_subsets;
use crate::{per_epoch_metric, scalar, to_f64, Matrix, Scalar, Vector};

/// Weights below this trigger a rescale by the column maximum.
const UNDERFLOW_FLOOR: f64 = 1e-100;

fn unit_from_u64(x: u64) -> f64 {
    // (0, 1]: never zero, so the exponential key is finite.
    ((x >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Sample an index with probability proportional to `weight(i)` over allowed
/// indices, consuming exactly `n` draws regardless of the allowed mask.
fn weighted_race<T: Scalar>(
    n: usize,
    weight: impl Fn(usize) -> T,
    allowed: impl Fn(usize) -> bool,
    rng: &mut impl RngCore,
) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for i in 0..n {
        let exp_key = -unit_from_u64(rng.next_u64()).ln();
        if !allowed(i) {
            continue;
        }
        let w = to_f64(weight(i));
        if !w.is_finite() || w <= 0.0 {
            continue;
        }
        let key = exp_key / w;
        if best.is_none_or(|(b, _)| key < b) {
            best = Some((key, i));
        }
    }
    best.map(|(_, i)| i).ok_or(Error::WeightUnderflow)
}

/// Exponentially weighted experts over a fixed action set.
///
/// Each step selects from the current distribution, then observes the full
/// loss vector and reweights: `w_j <- w_j * exp(-eta * loss_j)`.
#[derive(Debug, Clone)]
pub struct RandomizedExperts<T: Scalar> {
    weights: Vector<T>,
    eta: T,
    loss_scale: T,
}

impl<T: Scalar> RandomizedExperts<T> {
    pub fn new(actions: usize, eta: T, loss_scale: T) -> Result<Self> {
        if actions == 0 {
            return Err(Error::Numerical("need at least one action".into()));
        }
        if eta < T::zero() || !eta.is_finite() {
            return Err(Error::Numerical("eta must be a nonnegative real".into()));
        }
        if loss_scale <= T::zero() {
            return Err(Error::Numerical("loss scale must be positive".into()));
        }
        Ok(Self {
            weights: Vector::ones(actions),
            eta,
            loss_scale,
        })
    }

    /// The learning rate `sqrt(8 ln n / T)` tuned for a known horizon.
    pub fn tuned_eta(actions: usize, horizon: usize) -> T {
        let n = actions.max(2) as f64;
        let t = horizon.max(1) as f64;
        scalar((8.0 * n.ln() / t).sqrt().min(1.0))
    }

    pub fn probabilities(&self) -> Vector<T> {
        let sum: T = self.weights.iter().copied().sum();
        self.weights.mapv(|w| w / sum)
    }

    /// Select from the current distribution, then apply the epoch's losses.
    pub fn step(&mut self, losses: &[T], rng: &mut impl RngCore) -> Result<usize> {
        let n = self.weights.len();
        if losses.len() != n {
            return Err(Error::Numerical(format!(
                "expected {n} losses, got {}",
                losses.len()
            )));
        }
        for &l in losses {
            if l < T::zero() || l > self.loss_scale || !l.is_finite() {
                return Err(Error::LossOutOfRange {
                    loss: to_f64(l),
                    scale: to_f64(self.loss_scale),
                });
            }
        }
        let chosen = weighted_race(n, |i| self.weights[i], |_| true, rng)?;
        for (w, &l) in self.weights.iter_mut().zip(losses) {
            *w *= (-self.eta * l).exp();
        }
        self.rescale_if_needed()?;
        Ok(chosen)
    }

    fn rescale_if_needed(&mut self) -> Result<()> {
        let max = self
            .weights
            .iter()
            .fold(T::zero(), |a, &w| if w > a { w } else { a });
        if max == T::zero() {
            return Err(Error::WeightUnderflow);
        }
        if max < scalar(UNDERFLOW_FLOOR) {
            self.weights.mapv_inplace(|w| w / max);
        }
        Ok(())
    }
}

/// Convenience wrapper matching the experts protocol as a free function.
pub fn randomized_experts_step<T: Scalar>(
    state: &mut RandomizedExperts<T>,
    losses: &[T],
    rng: &mut impl RngCore,
) -> Result<usize> {
    state.step(losses, rng)
}

/// Per-slot expert weights for online leader selection.
#[derive(Debug, Clone)]
pub struct ExpertsState<T: Scalar> {
    weights: Matrix<T>,
    beta: T,
    epoch: usize,
    prev_partials: Option<Vec<Vec<usize>>>,
    literal_gain_update: bool,
}

impl<T: Scalar> ExpertsState<T> {
    /// `n` nodes, `k` leader slots, multiplicative parameter `beta` in (0, 1].
    pub fn new(n: usize, k: usize, beta: T) -> Result<Self> {
        if k < 1 || k > n {
            return Err(Error::BudgetOutOfRange { k, n });
        }
        if beta <= T::zero() || beta > T::one() {
            return Err(Error::Numerical("beta must lie in (0, 1]".into()));
        }
        Ok(Self {
            weights: Matrix::ones((n, k)),
            beta,
            epoch: 0,
            prev_partials: None,
            literal_gain_update: false,
        })
    }

    /// Resume from an explicit weight matrix (`n x k`, strictly positive).
    pub fn from_weights(weights: Matrix<T>, beta: T) -> Result<Self> {
        let (n, k) = (weights.nrows(), weights.ncols());
        if k < 1 || k > n {
            return Err(Error::BudgetOutOfRange { k, n });
        }
        if beta <= T::zero() || beta > T::one() {
            return Err(Error::Numerical("beta must lie in (0, 1]".into()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w <= T::zero()) {
            return Err(Error::WeightUnderflow);
        }
        Ok(Self {
            weights,
            beta,
            epoch: 0,
            prev_partials: None,
            literal_gain_update: false,
        })
    }

    /// Use the raw marginal gain as the update exponent instead of the
    /// normalized loss. With `beta < 1` this *rewards* high-error nodes and
    /// exists only for comparison.
    pub fn with_literal_gain_update(mut self, on: bool) -> Self {
        self.literal_gain_update = on;
        self
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn k(&self) -> usize {
        self.weights.ncols()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    /// Selection probabilities for a slot, normalized over non-banned nodes.
    pub fn probabilities(&self, slot: usize, banned: &[usize]) -> Result<Vector<T>> {
        let n = self.n();
        let mask = crate::graph::leader_mask(n, banned)?;
        let mut probs: Vector<T> = Vector::zeros(n);
        let mut sum = T::zero();
        for i in 0..n {
            if !mask[i] {
                let w = self.weights[[i, slot]];
                probs[i] = w;
                sum += w;
            }
        }
        if sum <= T::zero() {
            return Err(Error::WeightUnderflow);
        }
        probs.mapv_inplace(|w| w / sum);
        Ok(probs)
    }

    /// Select the leader set for the upcoming epoch.
    ///
    /// `observed` carries the just-finished epoch's topology and dwell; pass
    /// `None` for the first epoch, when nothing has been observed and the
    /// weights are uniform. The update penalizes each node by the bound it
    /// would have produced as the next leader on the observed topology,
    /// normalized by that topology's singleton maximum.
    pub fn select(
        &mut self,
        observed: Option<(&Topology<T>, T)>,
        p: T,
        rng: &mut impl RngCore,
    ) -> Result<Vec<usize>> {
        let n = self.n();
        let k = self.k();

        if let (Some((topo, dwell)), Some(partials)) = (observed, self.prev_partials.as_ref()) {
            if topo.n() != n {
                return Err(Error::Numerical(format!(
                    "observed topology has {} nodes, state has {n}",
                    topo.n()
                )));
            }
            let ev = ErrorEvaluator::static_network(topo.clone(), dwell, p)?;
            let f_max = ev.f_max()?;
            if f_max > T::zero() {
                for (j, partial) in partials.iter().enumerate() {
                    let base = ev.bound(partial)?;
                    for i in 0..n {
                        let mut set = partial.clone();
                        set.push(i);
                        let after = ev.bound(&set)?;
                        let exponent = if self.literal_gain_update {
                            base - after
                        } else {
                            after / f_max
                        };
                        let w = self.weights[[i, j]] * self.beta.powf(exponent);
                        self.weights[[i, j]] = w;
                    }
                }
                self.rescale_columns()?;
            }
        }

        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        let mut partials: Vec<Vec<usize>> = Vec::with_capacity(k);
        let mut taken = vec![false; n];
        for j in 0..k {
            partials.push(chosen.clone());
            let pick = weighted_race(
                n,
                |i| self.weights[[i, j]],
                |i| !taken[i],
                rng,
            )?;
            taken[pick] = true;
            chosen.push(pick);
        }
        self.prev_partials = Some(partials);
        self.epoch += 1;
        Ok(chosen)
    }

    fn rescale_columns(&mut self) -> Result<()> {
        let floor: T = scalar(UNDERFLOW_FLOOR);
        for j in 0..self.k() {
            let mut col = self.weights.column_mut(j);
            let max = col.iter().fold(T::zero(), |a, &w| if w > a { w } else { a });
            if max == T::zero() {
                return Err(Error::WeightUnderflow);
            }
            if max < floor {
                col.mapv_inplace(|w| w / max);
            }
        }
        Ok(())
    }
}

/// Free-function form of the per-epoch selection step.
pub fn select_dynamic_leaders<T: Scalar>(
    state: &mut ExpertsState<T>,
    observed: Option<(&Topology<T>, T)>,
    p: T,
    rng: &mut impl RngCore,
) -> Result<Vec<usize>> {
    state.select(observed, p, rng)
}

/// Hindsight enumeration cap for the exact best fixed set.
const EXHAUSTIVE_HINDSIGHT_LIMIT: u64 = 100_000;

/// Regret accounting for one online run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RegretLedger<T> {
    /// Realized single-epoch bound of the chosen set, per epoch.
    pub per_epoch_losses: Vec<T>,
    /// Sets the algorithm chose (0-based node ids).
    pub chosen_sets: Vec<Vec<usize>>,
    /// Best fixed set in hindsight (exact or greedy surrogate).
    pub best_fixed: Vec<usize>,
    /// Average per-epoch loss of the best fixed set.
    pub best_fixed_objective: T,
    /// Average realized loss minus the best fixed average.
    pub regret: T,
    /// Whether the hindsight optimum was found exhaustively.
    pub exhaustive_hindsight: bool,
}

impl<T: Scalar> RegretLedger<T> {
    /// Recompute the regret from the stored losses; bit-identical to the
    /// stored value.
    pub fn recompute_regret(&self) -> T {
        average(&self.per_epoch_losses) - self.best_fixed_objective
    }
}

fn average<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / scalar(values.len() as f64)
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k.min(n));
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    acc
}

/// Evaluate a run of chosen sets against the best fixed leader set in
/// hindsight. The hindsight optimum is exhaustive when the search space is
/// small, otherwise a greedy surrogate on the averaged objective (flagged).
pub fn regret_of_run<T: Scalar>(
    seq: &EpochSequence<T>,
    chosen: &[Vec<usize>],
    p: T,
) -> Result<RegretLedger<T>> {
    let metric = per_epoch_metric(seq, chosen, p)?;
    let n = seq.n();
    let k = chosen.iter().map(|s| s.len()).max().unwrap_or(1).max(1);

    // The averaged objective over epochs is the sampled-switched bound with
    // each epoch acting as its own single-epoch realization.
    let singles: Vec<EpochSequence<T>> = seq
        .epochs()
        .iter()
        .map(|e| EpochSequence::new(seq.start_time(), vec![(e.topology.clone(), e.dwell)]))
        .collect::<Result<Vec<_>>>()?;
    let avg_eval = ErrorEvaluator::from_samples(singles, p)?;

    let exhaustive = binomial(n, k) <= EXHAUSTIVE_HINDSIGHT_LIMIT;
    let (best_fixed, best_fixed_objective) = if exhaustive {
        let mut best: Option<(Vec<usize>, T)> = None;
        for set in k_subsets(n, k) {
            let v = avg_eval.bound(&set)?;
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((set, v));
            }
        }
        best.expect("at least one k-subset")
    } else {
        let res = select_k_leaders(&avg_eval, k)?;
        (res.leaders, res.objective)
    };

    Ok(RegretLedger {
        regret: metric.average - best_fixed_objective,
        per_epoch_losses: metric.terms,
        chosen_sets: chosen.to_vec(),
        best_fixed,
        best_fixed_objective,
        exhaustive_hindsight: exhaustive,
    })
}

/// Built-in policies for the adversarial lower-bound experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversarialPolicy {
    /// Picks a node uniformly at random each epoch.
    UniformRandom,
    /// Runs the exponentially weighted experts over single-node losses.
    Experts { eta: f64 },
}

/// Statistics from simulating the adversarial topology construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AdversarialReport {
    pub n: usize,
    pub r: usize,
    pub trials: usize,
    pub sigma: f64,
    /// Mean over trials of (realized loss - best fixed loss) / r.
    pub mean_regret: f64,
    pub regret_std_error: f64,
    /// `(1/r) * sqrt(r/2 * ln n)`.
    pub regret_lower_bound: f64,
    /// Mean over trials of `min_i A_{r,i}`.
    pub mean_min_loss_sum: f64,
    /// Mean of `(min_i A_{r,i} - r/2) / sqrt(r/2 * ln n)`.
    pub mean_b_statistic: f64,
    /// Per-node mean of the loss sum `A_{r,i}` across trials.
    pub node_loss_means: Vec<f64>,
    /// Realized regret of each trial.
    pub per_trial_regrets: Vec<f64>,
    /// `min_i A_{r,i}` of each trial.
    pub per_trial_min_loss: Vec<f64>,
}

/// Simulate the worst-case single-leader construction: each epoch every node
/// independently suffers loss `sigma` or 1 with probability 1/2; a `k = 1`
/// policy picks a leader before seeing the epoch's losses.
pub fn adversarial_lower_bound_experiment(
    n: usize,
    r: usize,
    trials: usize,
    sigma: f64,
    policy: AdversarialPolicy,
    rng: &mut impl Rng,
) -> Result<AdversarialReport> {
    if n == 0 || r == 0 || trials == 0 {
        return Err(Error::Numerical("n, r, trials must be positive".into()));
    }
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::Numerical("sigma must lie in [0, 1]".into()));
    }

    let bound = if n > 1 {
        ((r as f64) / 2.0 * (n as f64).ln()).sqrt() / r as f64
    } else {
        0.0
    };

    let mut regrets = Vec::with_capacity(trials);
    let mut min_sums = Vec::with_capacity(trials);
    let mut node_sums = vec![0.0f64; n];
    let mut losses = vec![0.0f64; n];

    for _ in 0..trials {
        let mut experts = match policy {
            AdversarialPolicy::Experts { eta } => {
                Some(RandomizedExperts::<f64>::new(n, eta, 1.0)?)
            }
            AdversarialPolicy::UniformRandom => None,
        };
        let mut totals = vec![0.0f64; n];
        let mut realized = 0.0f64;
        for _ in 0..r {
            for l in losses.iter_mut() {
                *l = if rng.gen::<bool>() { 1.0 } else { sigma };
            }
            let chosen = match experts.as_mut() {
                Some(state) => state.step(&losses, rng)?,
                None => rng.gen_range(0..n),
            };
            realized += losses[chosen];
            for (t, &l) in totals.iter_mut().zip(&losses) {
                *t += l;
            }
        }
        let min_a = totals.iter().copied().fold(f64::INFINITY, f64::min);
        regrets.push((realized - min_a) / r as f64);
        min_sums.push(min_a);
        for (s, &t) in node_sums.iter_mut().zip(&totals) {
            *s += t;
        }
    }

    let mean_regret = regrets.iter().sum::<f64>() / trials as f64;
    let regret_std_error = if trials > 1 {
        let var = regrets
            .iter()
            .map(|&x| (x - mean_regret).powi(2))
            .sum::<f64>()
            / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        0.0
    };
    let mean_min = min_sums.iter().sum::<f64>() / trials as f64;
    let b_denominator = ((r as f64) / 2.0 * (n as f64).ln()).sqrt();
    let mean_b = if n > 1 {
        min_sums
            .iter()
            .map(|&m| (m - r as f64 / 2.0) / b_denominator)
            .sum::<f64>()
            / trials as f64
    } else {
        0.0
    };

    Ok(AdversarialReport {
        n,
        r,
        trials,
        sigma,
        mean_regret,
        regret_std_error,
        regret_lower_bound: bound,
        mean_min_loss_sum: mean_min,
        mean_b_statistic: mean_b,
        node_loss_means: node_sums.iter().map(|&s| s / trials as f64).collect(),
        per_trial_regrets: regrets,
        per_trial_min_loss: min_sums,
    })
}
