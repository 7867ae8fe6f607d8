//! State propagation under leader-absorbing Laplacian dynamics and the
//! convergence-error quantities driving leader selection.
//!
//! The central objects are the transition matrix `P_t = exp(-Lt)` (row
//! stochastic, with leader rows equal to identity rows) and the
//! initial-state-free error bound built from its rows: for leader set `S`,
//!
//! ```text
//! bound(S) = sum_{i not in S} [ sum_{j not in S} P_t[i][j]^p
//!                               + (1 - sum_{j in S} P_t[i][j])^p ]
//! ```
//!
//! Because `P_t` is row stochastic, both inner terms depend only on the
//! follower-by-follower block of `P_t`, which equals `exp(-A t)` for the
//! grounded (follower) Laplacian `A`. All bound evaluations therefore
//! exponentiate only the follower submatrix; the full `n x n` matrix is
//! assembled only when a caller needs it (propagation, walk oracles).

use ndarray::Zip;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{leader_mask, EpochSequence, LeaderConfig, Topology};
use crate::linalg;
use crate::{derive_stream, scalar, Matrix, Scalar, Vector};

/// Absolute row-sum tolerance for accepting a matrix as a Laplacian.
const LAPLACIAN_ROW_SUM_TOL: f64 = 1e-9;
/// Entries of a computed transition matrix below zero by more than this are
/// treated as a numerical failure rather than clipped.
const NEGATIVE_ENTRY_GUARD: f64 = 1e-6;
/// Entries in `[-CLIP, 0)` are clipped to zero before renormalization.
const CLIP: f64 = 1e-12;

/// Agent states at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Scalar> {
    pub values: Vector<T>,
    pub time: T,
}

impl<T: Scalar> StateVector<T> {
    pub fn new(values: Vector<T>, time: T) -> Self {
        Self { values, time }
    }

    pub fn at_origin(values: Vector<T>) -> Self {
        Self::new(values, T::zero())
    }
}

fn check_norm_order<T: Scalar>(p: T) -> Result<()> {
    if p < T::one() || !p.is_finite() {
        return Err(Error::InvalidNormOrder(p.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

/// `x^p` for `p >= 1`, with fast paths for the common orders.
fn powp<T: Scalar>(x: T, p: T) -> T {
    if p == T::one() {
        x
    } else if p == scalar(2.0) {
        x * x
    } else {
        x.powf(p)
    }
}

/// Conjugate exponent `q` with `1/p + 1/q = 1`; `p = 1` maps to infinity.
pub fn conjugate_exponent<T: Scalar>(p: T) -> T {
    if p == T::one() {
        T::infinity()
    } else {
        p / (p - T::one())
    }
}

/// The `l^q` norm of a slice, accepting `q = infinity`.
pub fn lq_norm<T: Scalar>(values: &[T], q: T) -> T {
    if q.is_infinite() {
        values.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    } else {
        values
            .iter()
            .map(|v| v.abs().powf(q))
            .sum::<T>()
            .powf(q.recip())
    }
}

fn clip_negatives<T: Scalar>(m: &mut Matrix<T>) -> Result<()> {
    let guard: T = scalar(-NEGATIVE_ENTRY_GUARD);
    for v in m.iter_mut() {
        if *v < T::zero() {
            if *v < guard {
                return Err(Error::Numerical(format!(
                    "transition entry {v} below the negative-entry guard"
                )));
            }
            *v = T::zero();
        }
    }
    Ok(())
}

/// Matrix exponential `exp(-L t)` of a leader-absorbing Laplacian.
///
/// Validates that `L` has (near-)zero row sums and nonpositive off-diagonal
/// entries. Rows of `L` that are identically zero (leader rows) map to exact
/// identity rows. Remaining rows are clipped at zero and renormalized to sum
/// to one.
pub fn expm_neg<T: Scalar>(l: &Matrix<T>, t: T) -> Result<Matrix<T>> {
    let n = l.nrows();
    assert_eq!(n, l.ncols(), "expm_neg requires a square matrix");
    if t < T::zero() {
        return Err(Error::NegativeTime(t.to_f64().unwrap_or(f64::NAN)));
    }

    let row_tol: T = scalar(LAPLACIAN_ROW_SUM_TOL);
    let mut zero_rows = vec![false; n];
    for i in 0..n {
        let mut sum = T::zero();
        let mut all_zero = true;
        for j in 0..n {
            let v = l[[i, j]];
            sum += v;
            if v != T::zero() {
                all_zero = false;
            }
            if i != j && v > T::zero() {
                return Err(Error::PositiveOffDiagonal {
                    row: i,
                    col: j,
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        if sum.abs() > row_tol {
            return Err(Error::NotLaplacian {
                row: i,
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }
        zero_rows[i] = all_zero;
    }

    let mut p = linalg::expm(&(l * (-t)))?;
    clip_negatives(&mut p)?;

    let clip: T = scalar(CLIP);
    for i in 0..n {
        if zero_rows[i] {
            for j in 0..n {
                p[[i, j]] = if i == j { T::one() } else { T::zero() };
            }
            continue;
        }
        // Drop clipped dust, then renormalize; a final correction on the
        // largest entry brings the row sum to one within an ulp.
        let mut row = p.row_mut(i);
        for v in row.iter_mut() {
            if *v < clip {
                *v = T::zero();
            }
        }
        let sum: T = row.iter().copied().sum();
        if sum <= T::zero() {
            return Err(Error::Numerical(format!("row {i} of exp(-Lt) sums to {sum}")));
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
        let resum: T = row.iter().copied().sum();
        let mut arg = 0;
        for (j, v) in row.iter().enumerate() {
            if *v > row[arg] {
                arg = j;
            }
        }
        row[arg] += T::one() - resum;
    }
    Ok(p)
}

pub(crate) fn follower_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &is_leader)| (!is_leader).then_some(i))
        .collect()
}

/// Grounded Laplacian: the follower-by-follower block of the absorbing
/// Laplacian. Diagonal entries keep the full out-degree, including edges
/// into leaders.
pub(crate) fn grounded_laplacian<T: Scalar>(
    topo: &Topology<T>,
    mask: &[bool],
    followers: &[usize],
) -> Matrix<T> {
    let nf = followers.len();
    let mut pos = vec![usize::MAX; mask.len()];
    for (fi, &i) in followers.iter().enumerate() {
        pos[i] = fi;
    }
    let mut a = Matrix::zeros((nf, nf));
    for (fi, &i) in followers.iter().enumerate() {
        let mut degree = T::zero();
        for (j, w) in topo.out_neighbors(i) {
            degree += w;
            if !mask[j] {
                a[[fi, pos[j]]] = -w;
            }
        }
        a[[fi, fi]] = degree;
    }
    a
}

/// `exp(-A t)` over the followers: entrywise nonnegative and substochastic.
pub(crate) fn follower_transition<T: Scalar>(
    topo: &Topology<T>,
    mask: &[bool],
    followers: &[usize],
    t: T,
) -> Result<Matrix<T>> {
    let a = grounded_laplacian(topo, mask, followers);
    let mut x = linalg::expm(&(&a * (-t)))?;
    clip_negatives(&mut x)?;
    Ok(x)
}

/// The error bound evaluated from a follower-block transition matrix: each
/// follower row contributes its entrywise `p`-th powers plus the `p`-th power
/// of its escape mass (the row sum).
pub(crate) fn bound_from_block<T: Scalar>(x: &Matrix<T>, p: T) -> T {
    let mut total = T::zero();
    for row in x.rows() {
        let mut escape = T::zero();
        let mut inner = T::zero();
        for &v in row {
            escape += v;
            inner += powp(v, p);
        }
        total += inner + powp(escape, p);
    }
    total
}

/// Initial-state-free convergence error bound for leader set `leaders` at
/// horizon `t`. The empty set is legal: the formula is evaluated literally
/// with the leaderless Laplacian.
pub fn error_bound<T: Scalar>(topo: &Topology<T>, leaders: &[usize], t: T, p: T) -> Result<T> {
    check_norm_order(p)?;
    if t < T::zero() {
        return Err(Error::NegativeTime(t.to_f64().unwrap_or(f64::NAN)));
    }
    let mask = leader_mask(topo.n(), leaders)?;
    let followers = follower_indices(&mask);
    if followers.is_empty() {
        return Ok(T::zero());
    }
    let x = follower_transition(topo, &mask, &followers, t)?;
    Ok(bound_from_block(&x, p))
}

/// Right side of the convergence-error guarantee: `K * bound^(1/p)` for
/// initial states with `l^q` norm at most `K`.
pub fn scale_bound<T: Scalar>(bound: T, k: T, p: T) -> T {
    k * bound.powf(p.recip())
}

/// Propagate agent states to time `x0.time + t` under the absorbing
/// dynamics. Leader entries are held at their anchor values.
pub fn propagate<T: Scalar>(
    topo: &Topology<T>,
    config: &LeaderConfig<T>,
    x0: &StateVector<T>,
    t: T,
) -> Result<StateVector<T>> {
    let n = topo.n();
    if x0.values.len() != n {
        return Err(Error::Numerical(format!(
            "state length {} does not match {n} nodes",
            x0.values.len()
        )));
    }
    for (&v, &a) in config.leaders().iter().zip(config.anchors()) {
        if x0.values[v] != a {
            return Err(Error::AnchorMismatch { node: v });
        }
    }
    let l = crate::graph::build_laplacian(topo, config.leaders())?;
    let p = expm_neg(&l, t)?;
    let mut values = p.dot(&x0.values);
    for (&v, &a) in config.leaders().iter().zip(config.anchors()) {
        values[v] = a;
    }
    Ok(StateVector::new(values, x0.time + t))
}

/// Propagate through every epoch of a switched sequence in time order.
pub fn propagate_sequence<T: Scalar>(
    seq: &EpochSequence<T>,
    config: &LeaderConfig<T>,
    x0: &StateVector<T>,
) -> Result<StateVector<T>> {
    let mut state = x0.clone();
    for epoch in seq.epochs() {
        state = propagate(&epoch.topology, config, &state, epoch.dwell)?;
    }
    Ok(state)
}

/// `l^p` aggregate of per-node distances to the anchor hull.
pub fn hull_error<T: Scalar>(values: &Vector<T>, config: &LeaderConfig<T>, p: T) -> Result<T> {
    check_norm_order(p)?;
    if config.is_empty() {
        return Err(Error::EmptyLeaderSet);
    }
    let (lo, hi) = config.hull()?;
    let mut acc = T::zero();
    for &x in values.iter() {
        let d = if x < lo {
            lo - x
        } else if x > hi {
            x - hi
        } else {
            T::zero()
        };
        acc += powp(d, p);
    }
    Ok(acc.powf(p.recip()))
}

/// Convergence error at time `t`: distance of the propagated states from the
/// hull of the leader anchors, aggregated in `l^p`.
pub fn convergence_error<T: Scalar>(
    topo: &Topology<T>,
    config: &LeaderConfig<T>,
    x0: &StateVector<T>,
    t: T,
    p: T,
) -> Result<T> {
    if t <= T::zero() {
        return Err(Error::Numerical("horizon must be positive".into()));
    }
    if config.is_empty() {
        return Err(Error::EmptyLeaderSet);
    }
    let state = propagate(topo, config, x0, t)?;
    hull_error(&state.values, config, p)
}

/// Result of integrating the error bound over all time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalErrorEstimate<T> {
    pub value: T,
    /// Truncation point `T*`; the tail beyond it is covered by a geometric
    /// decay estimate within the error budget.
    pub truncation: T,
}

/// Total convergence error: the integral of the bound over `[0, infinity)`,
/// computed by adaptive quadrature up to a truncation point plus an
/// exponential-tail estimate, with total error at most `tol`.
pub fn total_error<T: Scalar>(
    topo: &Topology<T>,
    leaders: &[usize],
    p: T,
    tol: T,
) -> Result<TotalErrorEstimate<T>> {
    check_norm_order(p)?;
    if leaders.is_empty() {
        return Err(Error::DivergentIntegral);
    }
    if !topo.is_strongly_connected() {
        return Err(Error::NotStronglyConnected);
    }
    if tol <= T::zero() {
        return Err(Error::Numerical("tolerance must be positive".into()));
    }
    let mask = leader_mask(topo.n(), leaders)?;
    let followers = follower_indices(&mask);
    if followers.is_empty() {
        return Ok(TotalErrorEstimate {
            value: T::zero(),
            truncation: T::zero(),
        });
    }

    let mut f = |t: T| -> Result<T> {
        let x = follower_transition(topo, &mask, &followers, t)?;
        Ok(bound_from_block(&x, p))
    };

    let half_tol = tol / scalar(2.0);
    let mut horizon = T::one();
    let mut tail = T::zero();
    let mut converged = false;
    for _ in 0..64 {
        let g2 = f(horizon)?;
        if g2 == T::zero() {
            converged = true;
            break;
        }
        let g1 = f(horizon * scalar(0.9))?;
        if g2 < g1 {
            let rate = (g1 / g2).ln() / (horizon * scalar(0.1));
            if rate > T::zero() {
                tail = g2 / rate;
                if tail <= half_tol {
                    converged = true;
                    break;
                }
            }
        }
        horizon *= scalar(2.0);
    }
    if !converged {
        return Err(Error::Numerical(
            "total-error tail estimate did not fall below tolerance".into(),
        ));
    }

    let body = adaptive_simpson(&mut f, T::zero(), horizon, half_tol)?;
    Ok(TotalErrorEstimate {
        value: body + tail,
        truncation: horizon,
    })
}

fn adaptive_simpson<T: Scalar>(
    f: &mut impl FnMut(T) -> Result<T>,
    a: T,
    b: T,
    eps: T,
) -> Result<T> {
    let half = scalar::<T>(0.5);
    let m = (a + b) * half;
    let fa = f(a)?;
    let fm = f(m)?;
    let fb = f(b)?;
    let whole = simpson_panel(a, b, fa, fm, fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, eps, 0)
}

fn simpson_panel<T: Scalar>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / scalar(6.0) * (fa + scalar::<T>(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<T: Scalar>(
    f: &mut impl FnMut(T) -> Result<T>,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    eps: T,
    depth: usize,
) -> Result<T> {
    let half = scalar::<T>(0.5);
    let m = (a + b) * half;
    let lm = (a + m) * half;
    let rm = (m + b) * half;
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson_panel(a, m, fa, flm, fm);
    let right = simpson_panel(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth >= 48 || delta.abs() <= scalar::<T>(15.0) * eps {
        return Ok(left + right + delta / scalar(15.0));
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, eps * half, depth + 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, eps * half, depth + 1)?;
    Ok(l + r)
}

/// Follower-block transition across a whole switched sequence: the product
/// of per-epoch blocks in dynamics order (later epochs applied on the left).
pub(crate) fn sequence_follower_block<T: Scalar>(
    seq: &EpochSequence<T>,
    mask: &[bool],
    followers: &[usize],
) -> Result<Matrix<T>> {
    let mut product = Matrix::eye(followers.len());
    for epoch in seq.epochs() {
        let x = follower_transition(&epoch.topology, mask, followers, epoch.dwell)?;
        product = x.dot(&product);
    }
    Ok(product)
}

/// Deterministic switched-topology error bound for a fixed realization: the
/// static bound formula applied to the product of per-epoch transition
/// matrices.
pub fn dynamic_error_bound<T: Scalar>(
    seq: &EpochSequence<T>,
    leaders: &[usize],
    p: T,
) -> Result<T> {
    check_norm_order(p)?;
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mask = leader_mask(seq.n(), leaders)?;
    let followers = follower_indices(&mask);
    if followers.is_empty() {
        return Ok(T::zero());
    }
    let block = sequence_follower_block(seq, &mask, &followers)?;
    Ok(bound_from_block(&block, p))
}

/// Full transition matrix of a switched sequence (dynamics order).
pub fn sequence_transition<T: Scalar>(
    seq: &EpochSequence<T>,
    leaders: &[usize],
) -> Result<Matrix<T>> {
    let n = seq.n();
    let mut product = Matrix::eye(n);
    for epoch in seq.epochs() {
        let l = crate::graph::build_laplacian(&epoch.topology, leaders)?;
        let p = expm_neg(&l, epoch.dwell)?;
        product = p.dot(&product);
    }
    Ok(product)
}

/// A distribution over epoch sequences, sampled by seed so Monte Carlo runs
/// are reproducible and shardable.
pub trait SequenceDistribution<T: Scalar>: Sync {
    fn sample(&self, seed: u64) -> Result<EpochSequence<T>>;
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate<T> {
    pub mean: T,
    pub std_error: T,
    pub samples: usize,
}

/// Monte Carlo estimate of the expected switched-topology bound over a
/// distribution of realizations.
pub fn dynamic_error_bound_mc<T: Scalar>(
    dist: &dyn SequenceDistribution<T>,
    leaders: &[usize],
    p: T,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate<T>> {
    if samples == 0 {
        return Err(Error::Numerical("at least one sample required".into()));
    }
    let mut values = Vec::with_capacity(samples);
    for k in 0..samples {
        let sample_seed = derive_stream(seed, k as u64);
        let seq = dist.sample(sample_seed)?;
        values.push(dynamic_error_bound(&seq, leaders, p)?);
    }
    let count: T = scalar(samples as f64);
    let mean = values.iter().copied().sum::<T>() / count;
    let std_error = if samples > 1 {
        let var = values
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<T>()
            / scalar((samples - 1) as f64);
        (var / count).sqrt()
    } else {
        T::zero()
    };
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        samples,
    })
}

/// Per-epoch error metric for a sequence of (possibly distinct) leader sets.
#[derive(Debug, Clone, PartialEq)]
pub struct PerEpochMetric<T> {
    /// Average of the per-epoch terms.
    pub average: T,
    /// One single-epoch bound per epoch, for regret accounting.
    pub terms: Vec<T>,
}

/// Average over epochs of the single-epoch bound, each epoch evaluated with
/// its own leader set at its own dwell.
pub fn per_epoch_metric<T: Scalar>(
    seq: &EpochSequence<T>,
    sets: &[Vec<usize>],
    p: T,
) -> Result<PerEpochMetric<T>> {
    if sets.len() != seq.len() {
        return Err(Error::SetCountMismatch {
            expected: seq.len(),
            got: sets.len(),
        });
    }
    let mut terms = Vec::with_capacity(seq.len());
    for (epoch, set) in seq.epochs().iter().zip(sets) {
        terms.push(error_bound(&epoch.topology, set, epoch.dwell, p)?);
    }
    let average = terms.iter().copied().sum::<T>() / scalar(seq.len() as f64);
    Ok(PerEpochMetric { average, terms })
}

/// Sample a state vector with `l^q` norm exactly `k * u`, `u` uniform in
/// (0, 1]; used by the sandwich checks and the experiment harness.
pub fn sample_state_with_norm<T: Scalar>(n: usize, q: T, k: T, rng: &mut impl Rng) -> Vector<T> {
    let mut raw: Vector<T> = Vector::zeros(n);
    for v in raw.iter_mut() {
        *v = scalar::<T>(rng.gen::<f64>() * 2.0 - 1.0);
    }
    let norm = lq_norm(raw.as_slice().unwrap(), q);
    if norm == T::zero() {
        raw[0] = T::one();
        return raw * k;
    }
    let u: T = scalar(1.0 - rng.gen::<f64>());
    let target = k * u;
    Zip::from(&mut raw).for_each(|v| *v = *v / norm * target);
    raw
}
