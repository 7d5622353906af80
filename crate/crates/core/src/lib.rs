//! Stochastic trust-region optimization with probabilistically accurate
//! models and estimates (STORM), together with a renewal-reward process
//! simulator for the expected-stopping-time analysis behind its
//! `O(eps^-2)` complexity bound.
//!
//! The crate is organized by subsystem:
//!
//! * [`renewal`] simulates the birth-death radius walk and the generic
//!   `(Phi_k, Delta_k)` process, and evaluates the stopping-time bounds.
//! * [`trust_region`] contains the algorithm itself: Cauchy step, acceptance
//!   ratio, radius update, the potential function and the drift constants.
//! * [`oracles`] builds sample-average models and estimates from noisy
//!   samplers, classifies accuracy events and wraps samplers with corruption.
//! * [`problems`] holds referee test problems with exact values/gradients.
//! * [`stats`] has the small statistical helpers shared by tests and the
//!   experiment driver.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod oracles;
pub mod problems;
pub mod renewal;
pub mod rng;
pub mod stats;
pub mod trace;
pub mod trust_region;

pub use nalgebra::{DMatrix, DVector};

pub use oracles::{AccuracyTargets, CorruptionSpec, EventFlags, OracleError, SampleRule, StochasticOracle};
pub use problems::{Referee, TestProblem};
pub use renewal::{DriftSpec, RenewalError, RenewalTrace, WalkConfig};
pub use trace::{PhiDeltaPoint, PhiDeltaTrace};
pub use trust_region::{
    DriftConstants, IterationRecord, PotentialSpec, QuadraticModel, RunOutcome, StormConfig, StormError,
    StormState,
};

/// Dense real vector used for iterates, steps and gradients.
pub type Vector = DVector<f64>;
/// Dense real matrix used for model Hessians.
pub type Matrix = DMatrix<f64>;
