//! Leader selection for leader-follower consensus networks.
//!
//! Follower agents run weighted-averaging dynamics while leader agents hold
//! constant anchor states. The convergence error of a leader set — how far
//! follower states sit from the convex hull of the anchors at a finite time —
//! admits an initial-state-free upper bound built from the rows of the
//! leader-absorbing transition matrix `exp(-Lt)`. That bound is supermodular
//! in the leader set, so greedy selection carries constant-factor guarantees.
//!
//! The crate provides:
//!
//! * [`graph`] — topologies, leader configurations, epoch sequences, and the
//!   generators used in the numerical study (random geometric placement,
//!   independent link failures, waypoint mobility);
//! * [`dynamics`] — matrix-exponential propagation and every convergence-error
//!   quantity (bound at a horizon, integrated total error, switched-topology
//!   generalizations);
//! * [`evaluator`] — a memoizing bound evaluator shared by the selection
//!   algorithms;
//! * [`selection`] — greedy leader selection for static networks plus the
//!   random/degree baselines;
//! * [`online`] — multiplicative-weights leader selection for unknown
//!   topology processes, with regret accounting;
//! * [`walk`] — brute-force absorbing-random-walk oracles used by the test
//!   suites to ground the bound computations.
//!
//! All numerics are generic over the scalar type through [`Scalar`]; the
//! `*64` aliases below fix the default double-precision instantiation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, NumAssign};

pub mod dynamics;
pub mod error;
pub mod evaluator;
pub mod graph;
pub mod online;
pub mod selection;
pub mod walk;

mod linalg;

pub use dynamics::{
    convergence_error, dynamic_error_bound, dynamic_error_bound_mc, error_bound, expm_neg,
    per_epoch_metric, propagate, propagate_sequence, scale_bound, total_error,
};
pub use error::{Error, Result};
pub use evaluator::{resolve_horizon, ErrorEvaluator, HorizonRule, NetworkModel};
pub use graph::{
    build_laplacian, gen_geometric, gen_link_failures, gen_waypoint, EpochSequence, LeaderConfig,
    Topology,
};
pub use online::{
    adversarial_lower_bound_experiment, randomized_experts_step, regret_of_run,
    select_dynamic_leaders, AdversarialPolicy, ExpertsState, RandomizedExperts, RegretLedger,
};
pub use selection::{
    select_baseline, select_k_leaders, select_k_total_error, select_minimal_leaders,
    BaselinePolicy, GreedyMode, SelectionResult,
};
pub use walk::{check_supermodular, WalkChain};

/// SplitMix64 seed derivation: independent streams from a master seed and a
/// stream index, used wherever trials or samples need uncoordinated seeds.
pub fn derive_stream(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x2545f4914f6cdd1d);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Floating-point scalar the numerical core is generic over.
///
/// `f32` satisfies the bounds, but the documented tolerances assume `f64`.
pub trait Scalar:
    Float
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + ScalarOperand
        + LinalgScalar
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Convert an `f64` constant into the scalar type.
///
/// Panics only if the scalar type cannot represent ordinary finite constants,
/// which no `Float` implementation of interest does.
pub(crate) fn scalar<T: Scalar>(v: f64) -> T {
    T::from(v).expect("finite constant must be representable")
}

/// Convert a scalar into `f64` for reporting.
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("scalar must convert to f64")
}

pub type Matrix<T> = ndarray::Array2<T>;
pub type Vector<T> = ndarray::Array1<T>;

// Concrete aliases for the default double-precision instantiation.
pub type Topology64 = graph::Topology<f64>;
pub type LeaderConfig64 = graph::LeaderConfig<f64>;
pub type EpochSequence64 = graph::EpochSequence<f64>;
pub type StateVector64 = dynamics::StateVector<f64>;
pub type ErrorEvaluator64 = evaluator::ErrorEvaluator<f64>;
pub type SelectionResult64 = selection::SelectionResult<f64>;
pub type ExpertsState64 = online::ExpertsState<f64>;
pub type RegretLedger64 = online::RegretLedger<f64>;
pub type WalkChain64 = walk::WalkChain<f64>;
