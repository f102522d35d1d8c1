//! Exact, incremental Bayesian inference of conditional measures over
//! sequences of covers.
//!
//! A *cover model* predicts `y` given `x` by a halting random walk over the
//! contexts (sets of `x` values) that contain `x`, one cover at a time; the
//! context where the walk stops emits `y` from its local conjugate model.
//! The walk's stopping and transition probabilities and all local models
//! have closed-form posteriors, updated per observation along one path.
//!
//! - [`covers`]: cover sequences (online kd-tree, suffix tree, explicit sets).
//! - [`local`]: conjugate local models (Dirichlet, Normal-Wishart, Bayesian tree, mixtures).
//! - [`engine`]: the posterior, its marginal predictive, updates, sampling,
//!   snapshots, and a brute-force enumeration oracle.
//! - [`vmm`]: variable-order Markov models and a context-tree-weighting reference.
//! - [`cde`]: the conditional density estimator on kd covers.
//! - [`kernel`]: the double-kernel conditional density baseline.
//! - [`harness`]: synthetic data, CSV ingestion, and hold-out evaluation.

pub mod cde;
pub mod covers;
pub mod engine;
pub mod harness;
pub mod kernel;
pub mod local;
pub mod math;
pub mod vmm;
