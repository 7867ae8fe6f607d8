//! Brute-force absorbing-random-walk oracles.
//!
//! These ground the bound computations in `dynamics`: the rows of
//! `exp(-Lt)` coincide with τ-step occupation probabilities of the discrete
//! walk with transition matrix `exp(-Lδ)`, `t = τδ`. Everything here is
//! computed by distribution pushing or trajectory sampling, never by reusing
//! the production exponential path, so the two routes stay independent.

use rand::Rng;

use crate::error::{Error, Result};
use crate::{scalar, Matrix, Scalar, Vector};

/// Largest ground set `check_supermodular` will enumerate.
pub const MAX_GROUND_SET: usize = 10;

/// A discrete-time walk whose absorbing states are the leader set.
#[derive(Debug, Clone)]
pub struct WalkChain<T: Scalar> {
    transition: Matrix<T>,
    step: T,
    absorbing: Vec<usize>,
}

impl<T: Scalar> WalkChain<T> {
    /// Validates that rows are probability distributions (sum 1 within 1e-9)
    /// and that absorbing rows equal canonical basis rows.
    pub fn new(transition: Matrix<T>, step: T, absorbing: Vec<usize>) -> Result<Self> {
        let n = transition.nrows();
        if transition.ncols() != n {
            return Err(Error::Numerical("transition matrix must be square".into()));
        }
        let tol: T = scalar(1e-9);
        for (i, row) in transition.rows().into_iter().enumerate() {
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::Numerical(format!(
                    "row {i} sums to {sum}, not a distribution"
                )));
            }
            if row.iter().any(|&v| v < T::zero()) {
                return Err(Error::Numerical(format!("row {i} has a negative entry")));
            }
        }
        for &a in &absorbing {
            if a >= n {
                return Err(Error::NodeOutOfRange { node: a, n });
            }
            for j in 0..n {
                let want = if j == a { T::one() } else { T::zero() };
                if transition[[a, j]] != want {
                    return Err(Error::Numerical(format!(
                        "absorbing state {a} does not have a basis row"
                    )));
                }
            }
        }
        Ok(Self {
            transition,
            step,
            absorbing,
        })
    }

    /// Chain whose transition matrix is `exp(-L δ)` for the leader-absorbing
    /// Laplacian of `topo`; the leaders are the absorbing states.
    pub fn from_topology(topo: &crate::graph::Topology<T>, leaders: &[usize], step: T) -> Result<Self> {
        let l = crate::graph::build_laplacian(topo, leaders)?;
        let transition = crate::dynamics::expm_neg(&l, step)?;
        let mut absorbing = leaders.to_vec();
        absorbing.sort_unstable();
        absorbing.dedup();
        Self::new(transition, step, absorbing)
    }

    pub fn n(&self) -> usize {
        self.transition.nrows()
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn absorbing(&self) -> &[usize] {
        &self.absorbing
    }

    pub fn transition(&self) -> &Matrix<T> {
        &self.transition
    }

    /// τ-step occupation probabilities: entry `(i, j)` is the probability the
    /// walk started at `i` sits at `j` after `steps` steps. Computed by
    /// pushing each start distribution through the chain.
    pub fn hit_probabilities(&self, steps: usize) -> Matrix<T> {
        let n = self.n();
        let mut out = Matrix::zeros((n, n));
        for i in 0..n {
            let mut dist: Vector<T> = Vector::zeros(n);
            dist[i] = T::one();
            for _ in 0..steps {
                dist = dist.dot(&self.transition);
            }
            out.row_mut(i).assign(&dist);
        }
        out
    }

    /// Probability the walk from `start` is not absorbed after `steps` steps:
    /// one minus the mass on the absorbing set.
    pub fn escape_probability(&self, steps: usize, start: usize) -> Result<T> {
        if start >= self.n() {
            return Err(Error::NodeOutOfRange {
                node: start,
                n: self.n(),
            });
        }
        let mut dist: Vector<T> = Vector::zeros(self.n());
        dist[start] = T::one();
        for _ in 0..steps {
            dist = dist.dot(&self.transition);
        }
        let mut absorbed = T::zero();
        for &a in &self.absorbing {
            absorbed += dist[a];
        }
        Ok(T::one() - absorbed)
    }

    /// Monte Carlo estimate of the escape probability by sampling whole
    /// trajectories. Returns the escape frequency.
    pub fn simulate_escape(
        &self,
        steps: usize,
        start: usize,
        trials: usize,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        if start >= self.n() {
            return Err(Error::NodeOutOfRange {
                node: start,
                n: self.n(),
            });
        }
        let n = self.n();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                self.transition
                    .row(i)
                    .iter()
                    .map(|&v| v.to_f64().unwrap_or(0.0))
                    .collect()
            })
            .collect();
        let absorbing = crate::graph::leader_mask(n, &self.absorbing)?;
        let mut escaped = 0usize;
        for _ in 0..trials {
            let mut at = start;
            for _ in 0..steps {
                if absorbing[at] {
                    break;
                }
                let mut u = rng.gen::<f64>();
                let row = &rows[at];
                let mut next = n - 1;
                for (j, &w) in row.iter().enumerate() {
                    if u < w {
                        next = j;
                        break;
                    }
                    u -= w;
                }
                at = next;
            }
            if !absorbing[at] {
                escaped += 1;
            }
        }
        Ok(escaped as f64 / trials as f64)
    }
}

/// One diminishing-returns violation found by [`check_supermodular`].
#[derive(Debug, Clone, PartialEq)]
pub struct SupermodularityViolation {
    pub small: Vec<usize>,
    pub large: Vec<usize>,
    pub element: usize,
    pub gain_small: f64,
    pub gain_large: f64,
}

/// Exhaustively check the diminishing-returns inequality
/// `f(S) - f(S ∪ {v}) >= f(T) - f(T ∪ {v})` for all `S ⊆ T ⊆ V`, `v ∉ T`.
///
/// Returns every violating triple beyond `tol`; an empty report means the
/// function is supermodular on this ground set. `max_n` caps the ground set
/// (enumeration is `3^n`-scale) and is itself capped at [`MAX_GROUND_SET`].
pub fn check_supermodular<T: Scalar>(
    n: usize,
    max_n: usize,
    mut f: impl FnMut(&[usize]) -> Result<T>,
    tol: T,
) -> Result<Vec<SupermodularityViolation>> {
    let cap = max_n.min(MAX_GROUND_SET);
    if n > cap {
        return Err(Error::GroundSetTooLarge { n, max: cap });
    }
    let size = 1usize << n;
    let mut values = Vec::with_capacity(size);
    for mask in 0..size {
        values.push(f(&mask_to_set(mask, n))?);
    }

    let mut violations = Vec::new();
    for t_mask in 0..size {
        for v in 0..n {
            if t_mask & (1 << v) != 0 {
                continue;
            }
            let gain_large = values[t_mask] - values[t_mask | (1 << v)];
            // Enumerate proper and improper submasks of t_mask.
            let mut s_mask = t_mask;
            loop {
                let gain_small = values[s_mask] - values[s_mask | (1 << v)];
                if gain_small < gain_large - tol {
                    violations.push(SupermodularityViolation {
                        small: mask_to_set(s_mask, n),
                        large: mask_to_set(t_mask, n),
                        element: v,
                        gain_small: gain_small.to_f64().unwrap_or(f64::NAN),
                        gain_large: gain_large.to_f64().unwrap_or(f64::NAN),
                    });
                }
                if s_mask == 0 {
                    break;
                }
                s_mask = (s_mask - 1) & t_mask;
            }
        }
    }
    Ok(violations)
}

fn mask_to_set(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|&v| mask & (1 << v) != 0).collect()
}

/// All `k`-element subsets of `0..n` in lexicographic order. Intended for
/// exhaustive oracles at desk scale; the caller is responsible for keeping
/// `C(n, k)` small.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
