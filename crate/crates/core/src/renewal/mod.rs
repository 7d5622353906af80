//! Renewal-reward machinery for expected stopping times.
//!
//! A radius process `Delta_k` lives on the geometric grid
//! `delta_eps * e^(j * lambda)` and moves up with probability `p`, down
//! otherwise. A potential `Phi_k >= 0` drifts down by at least
//! `Theta * h(Delta_k)` in conditional mean until a stopping time `T`.
//! Renewals are the iterations where `Delta_k >= delta_eps`; the expected gap
//! between renewals is at most `p / (2p - 1)`, and combining this with the
//! drift yields a bound on `E[T]`.
//!
//! This module simulates both processes exactly at the tightest admissible
//! dynamics and evaluates the corresponding bounds, so the bounds can be
//! checked against Monte Carlo estimates.

mod bounds;
mod process;
mod walk;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::trace::PhiDeltaTrace;

pub use bounds::{theoretical_interarrival_bound, theoretical_stop_bound};
pub use process::{
    default_step_cap, replicate_stop_times, simulate_phi_delta, simulate_phi_delta_with_rng, Deterministic,
    IncrementLaw, TwoPoint, UniformJitter,
};
pub use walk::{
    interarrival_stats, measure_interarrivals, measure_interarrivals_until, simulate_walk, GridWalk,
    InterarrivalStats,
};

/// Relative slack used when comparing grid radii against `delta_eps`.
pub(crate) const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RenewalError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bound undefined: {0}")]
    Domain(String),
    #[error("stop rule did not fire within {steps} steps")]
    Timeout { steps: usize, trace: Box<PhiDeltaTrace> },
}

/// Parameters of the birth-death radius walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    /// Probability of an up-step.
    pub p: f64,
    /// Log of the step ratio; the walk multiplies by `e^lambda` or divides by it.
    pub lambda: f64,
    pub delta0: f64,
    /// Renewal threshold.
    pub delta_eps: f64,
    pub delta_max: f64,
    pub seed: u64,
}

impl WalkConfig {
    /// Walk with step ratio `gamma` and `delta0 = gamma^i0 * delta_eps`,
    /// `delta_max = gamma^imax * delta_eps`.
    pub fn on_grid(p: f64, gamma: f64, delta_eps: f64, i0: i32, imax: i32, seed: u64) -> Self {
        WalkConfig {
            p,
            lambda: gamma.ln(),
            delta0: delta_eps * gamma.powi(i0),
            delta_eps,
            delta_max: delta_eps * gamma.powi(imax),
            seed,
        }
    }

    /// Checks the parameter ranges and the grid assumption.
    ///
    /// `p` may sit on the closed interval `[0, 1]`; the endpoints give
    /// deterministic walks.
    pub fn validate(&self) -> Result<(), RenewalError> {
        let bad = |msg: String| Err(RenewalError::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p = {} is not a probability", self.p));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda = {} must be positive", self.lambda));
        }
        if !(self.delta_eps.is_finite() && self.delta_eps > 0.0) {
            return bad(format!("delta_eps = {} must be positive", self.delta_eps));
        }
        if !(self.delta0.is_finite() && self.delta0 > 0.0) {
            return bad(format!("delta0 = {} must be positive", self.delta0));
        }
        if self.delta_max < self.delta_eps || self.delta_max < self.delta0 {
            return bad(format!(
                "delta_max = {} must be >= delta0 and delta_eps",
                self.delta_max
            ));
        }
        if self.grid_exponent(self.delta0).is_none() {
            return bad(format!("delta0 = {} is off the e^lambda grid", self.delta0));
        }
        if self.grid_exponent(self.delta_max).is_none() {
            return bad(format!("delta_max = {} is off the e^lambda grid", self.delta_max));
        }
        Ok(())
    }

    /// Integer `j` with `delta = delta_eps * e^(j lambda)`, if there is one.
    pub fn grid_exponent(&self, delta: f64) -> Option<i64> {
        let x = (delta / self.delta_eps).ln() / self.lambda;
        let j = x.round();
        ((x - j).abs() <= 1e-9 * x.abs().max(1.0)).then_some(j as i64)
    }

    /// Radius at grid exponent `j`.
    pub fn level(&self, j: i64) -> f64 {
        self.delta_eps * (j as f64 * self.lambda).exp()
    }
}

/// Drift law of the potential process.
///
/// `E[V_k | past, T > k] <= -theta * h(Delta_k)` is enforced by the
/// increment law; `Phi` is kept in `[0, phi_max]`.
#[derive(Clone)]
pub struct DriftSpec {
    pub theta: f64,
    pub h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub phi0: f64,
    pub phi_max: f64,
    pub increments: Arc<dyn IncrementLaw>,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("theta", &self.theta)
            .field("phi0", &self.phi0)
            .field("phi_max", &self.phi_max)
            .field("increments", &self.increments.name())
            .finish_non_exhaustive()
    }
}

impl DriftSpec {
    /// Drift with `h(delta) = delta^exponent` and two-point increments.
    pub fn power(theta: f64, exponent: i32, phi0: f64, phi_max: f64) -> Self {
        DriftSpec {
            theta,
            h: Arc::new(move |d: f64| d.powi(exponent)),
            phi0,
            phi_max,
            increments: Arc::new(TwoPoint::default()),
        }
    }

    pub fn with_increments(mut self, law: impl IncrementLaw + 'static) -> Self {
        self.increments = Arc::new(law);
        self
    }

    pub fn with_h(mut self, h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.h = Arc::new(h);
        self
    }

    /// `theta * h(delta)`.
    pub fn drift_at(&self, delta: f64) -> f64 {
        self.theta * (self.h)(delta)
    }

    /// Checks `theta > 0`, `0 <= phi0 <= phi_max`, and that `h` is positive
    /// and nondecreasing on the sampled radii.
    pub fn validate(&self, grid: &[f64]) -> Result<(), RenewalError> {
        let bad = |msg: String| Err(RenewalError::InvalidConfig(msg));
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad(format!("theta = {} must be positive", self.theta));
        }
        if !(0.0 <= self.phi0 && self.phi0 <= self.phi_max) {
            return bad(format!(
                "need 0 <= phi0 ({}) <= phi_max ({})",
                self.phi0, self.phi_max
            ));
        }
        let mut sorted = grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for &d in &sorted {
            let v = (self.h)(d);
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("h({d}) = {v} is not positive"));
            }
            if v < prev {
                return bad(format!("h decreases at delta = {d}"));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Renewal structure of a radius trace.
///
/// `arrival_times[0]` is `A_0 = 0`; later entries are
/// `A_n = inf { m > A_(n-1) : Delta_m >= delta_eps }`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RenewalTrace {
    pub arrival_times: Vec<usize>,
    /// `tau_n = A_n - A_(n-1)` for `n >= 1`.
    pub interarrivals: Vec<usize>,
    /// `N(T) = max { n : A_n <= T }`.
    pub count_at_stop: usize,
    pub stop_time: usize,
}

impl RenewalTrace {
    /// Arrivals after `A_0`.
    pub fn arrivals(&self) -> &[usize] {
        &self.arrival_times[1.min(self.arrival_times.len())..]
    }

    /// `N(k)` for an arbitrary `k`.
    pub fn count_at(&self, k: usize) -> usize {
        self.arrival_times
            .iter()
            .filter(|&&a| a <= k)
            .count()
            .saturating_sub(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_checks() {
        let cfg = WalkConfig::on_grid(0.7, 2.0, 0.01, 2, 5, 1);
        cfg.validate().unwrap();
        assert_eq!(cfg.grid_exponent(cfg.delta0), Some(2));
        assert_eq!(cfg.grid_exponent(0.01 / 8.0), Some(-3));
        assert_eq!(cfg.grid_exponent(0.015), None);
        let off = WalkConfig { delta0: 0.03, ..cfg };
        assert!(matches!(off.validate(), Err(RenewalError::InvalidConfig(_))));
    }

    #[test]
    fn invalid_probability_rejected() {
        for p in [-0.1, 1.5, f64::NAN] {
            let cfg = WalkConfig::on_grid(p, 2.0, 1.0, 0, 2, 0);
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn drift_validation() {
        let grid = [0.25, 0.5, 1.0, 2.0];
        DriftSpec::power(1.0, 2, 1.0, 10.0).validate(&grid).unwrap();
        let decreasing = DriftSpec::power(1.0, 2, 1.0, 10.0).with_h(|d| 1.0 / d);
        assert!(decreasing.validate(&grid).is_err());
        assert!(DriftSpec::power(1.0, 2, 11.0, 10.0).validate(&grid).is_err());
        assert!(DriftSpec::power(0.0, 2, 1.0, 10.0).validate(&grid).is_err());
    }

    #[test]
    fn count_at_excludes_a0() {
        let t = RenewalTrace {
            arrival_times: vec![0, 2, 4],
            interarrivals: vec![2, 2],
            count_at_stop: 2,
            stop_time: 4,
        };
        assert_eq!(t.count_at(0), 0);
        assert_eq!(t.count_at(3), 1);
        assert_eq!(t.count_at(4), 2);
        assert_eq!(t.arrivals(), &[2, 4]);
    }
}
