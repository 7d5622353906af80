//! Noisy oracles and the sample-average constructions that turn them into
//! probabilistically accurate models and estimates.
//!
//! A model is *fully linear* on `B(x, delta)` when its gradient is within
//! `kappa_eg * delta` of the true gradient and its values are within
//! `kappa_ef * delta^2` of `f` on the ball. Estimates are *accurate* when
//! both function-value estimates are within `eps_f * delta^2`. The builders
//! here pick sample sizes so that these events hold with probability at least
//! `alpha` (models) and `beta` (estimates), using only variance bounds.

mod corrupt;
mod events;
mod saa;

use std::sync::Arc;

use thiserror::Error;

use crate::rng::StreamRng;
use crate::{Matrix, Vector};

pub use corrupt::{corrupt, CorruptedOracle, CorruptionSpec};
pub use events::{ball_sample_points, classify_events, EventFlags, BALL_SAMPLE_POINTS};
pub use saa::{
    build_estimates, build_saa_model, build_saa_model_with_hessian, Estimates, SaaModel, SaaSettings,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle cannot {0}")]
    Capability(&'static str),
    #[error("required {required} samples exceeds the budget cap of {cap}")]
    Budget { required: u128, cap: u128 },
    #[error("infeasible accuracy request: {0}")]
    Infeasible(String),
    #[error("invalid accuracy targets: {0}")]
    InvalidTargets(String),
}

/// Source of noisy function values and (optionally) gradients.
///
/// Samplers are deterministic given the RNG state, so a run is reproducible
/// from its seed. The `mean_*` methods are single queries returning the
/// average of `n` independent draws; oracles that can draw that average
/// directly (e.g. Gaussian noise) override them.
pub trait StochasticOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn sample_value(&self, x: &Vector, rng: &mut StreamRng) -> f64;

    fn sample_gradient(&self, _x: &Vector, _rng: &mut StreamRng) -> Option<Vector> {
        None
    }

    fn sample_hessian(&self, _x: &Vector, _rng: &mut StreamRng) -> Option<Matrix> {
        None
    }

    /// Bound on `Var[f(x, xi)]`.
    fn value_variance_bound(&self) -> f64;

    /// Bound on the trace of the covariance of `grad f(x, xi)`.
    fn gradient_variance_bound(&self) -> f64;

    fn has_gradient(&self) -> bool;

    fn mean_value(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> f64 {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += self.sample_value(x, rng);
        }
        sum / n as f64
    }

    fn mean_gradient(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> Option<Vector> {
        let mut sum = Vector::zeros(self.dim());
        for _ in 0..n {
            sum += self.sample_gradient(x, rng)?;
        }
        Some(sum / n as f64)
    }
}

impl<T: StochasticOracle + ?Sized> StochasticOracle for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn sample_value(&self, x: &Vector, rng: &mut StreamRng) -> f64 {
        (**self).sample_value(x, rng)
    }
    fn sample_gradient(&self, x: &Vector, rng: &mut StreamRng) -> Option<Vector> {
        (**self).sample_gradient(x, rng)
    }
    fn sample_hessian(&self, x: &Vector, rng: &mut StreamRng) -> Option<Matrix> {
        (**self).sample_hessian(x, rng)
    }
    fn value_variance_bound(&self) -> f64 {
        (**self).value_variance_bound()
    }
    fn gradient_variance_bound(&self) -> f64 {
        (**self).gradient_variance_bound()
    }
    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }
    fn mean_value(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> f64 {
        (**self).mean_value(x, n, rng)
    }
    fn mean_gradient(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> Option<Vector> {
        (**self).mean_gradient(x, n, rng)
    }
}

type ValueSampler = Arc<dyn Fn(&Vector, &mut StreamRng) -> f64 + Send + Sync>;
type GradientSampler = Arc<dyn Fn(&Vector, &mut StreamRng) -> Vector + Send + Sync>;

/// Oracle assembled from sampling closures and declared variance bounds.
#[derive(Clone)]
pub struct SamplerOracle {
    pub dim: usize,
    pub value_sampler: ValueSampler,
    pub gradient_sampler: Option<GradientSampler>,
    pub value_variance_bound: f64,
    pub gradient_variance_bound: f64,
}

impl SamplerOracle {
    pub fn new(
        dim: usize,
        value_sampler: impl Fn(&Vector, &mut StreamRng) -> f64 + Send + Sync + 'static,
        value_variance_bound: f64,
    ) -> Self {
        SamplerOracle {
            dim,
            value_sampler: Arc::new(value_sampler),
            gradient_sampler: None,
            value_variance_bound,
            gradient_variance_bound: 0.0,
        }
    }

    pub fn with_gradient(
        mut self,
        sampler: impl Fn(&Vector, &mut StreamRng) -> Vector + Send + Sync + 'static,
        trace_bound: f64,
    ) -> Self {
        self.gradient_sampler = Some(Arc::new(sampler));
        self.gradient_variance_bound = trace_bound;
        self
    }
}

impl StochasticOracle for SamplerOracle {
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample_value(&self, x: &Vector, rng: &mut StreamRng) -> f64 {
        (self.value_sampler)(x, rng)
    }
    fn sample_gradient(&self, x: &Vector, rng: &mut StreamRng) -> Option<Vector> {
        self.gradient_sampler.as_ref().map(|g| g(x, rng))
    }
    fn value_variance_bound(&self) -> f64 {
        self.value_variance_bound
    }
    fn gradient_variance_bound(&self) -> f64 {
        self.gradient_variance_bound
    }
    fn has_gradient(&self) -> bool {
        self.gradient_sampler.is_some()
    }
}

/// Accuracy requirements for models (`alpha`, `kappa_*`) and estimates
/// (`beta`, `eps_f`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyTargets {
    pub alpha: f64,
    pub beta: f64,
    pub kappa_ef: f64,
    pub kappa_eg: f64,
    pub eps_f: f64,
}

impl AccuracyTargets {
    /// Requires `alpha, beta` in `(0, 1]`, `alpha * beta > 1/2`, positive
    /// `kappa_*` and nonnegative `eps_f`.
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidTargets(m));
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} = {v} must lie in (0, 1]"));
            }
        }
        if self.alpha * self.beta <= 0.5 {
            return bad(format!(
                "alpha * beta = {} must exceed 1/2",
                self.alpha * self.beta
            ));
        }
        if !(self.kappa_ef > 0.0 && self.kappa_eg > 0.0) {
            return bad("kappa_ef and kappa_eg must be positive".into());
        }
        if !(self.eps_f >= 0.0 && self.eps_f.is_finite()) {
            return bad(format!("eps_f = {} must be nonnegative", self.eps_f));
        }
        Ok(())
    }
}

/// Concentration inequality used to size sample averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleRule {
    /// Distribution-free: needs only the variance bound.
    #[default]
    Chebyshev,
    /// Tighter, valid for sub-Gaussian noise with the given variance proxy.
    SubGaussian,
}

fn ceil_count(x: f64) -> u128 {
    // Absorb rounding noise so exact quotients do not round up by one.
    let c = (x * (1.0 - 1e-12)).ceil();
    if c < 1.0 {
        1
    } else {
        c as u128
    }
}

fn check_rule_inputs(variance: f64, fail_prob: f64, tol: f64) -> Result<Option<u128>, OracleError> {
    if variance == 0.0 {
        return Ok(Some(1));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(OracleError::Infeasible(format!("variance bound {variance}")));
    }
    if !(fail_prob > 0.0) {
        return Err(OracleError::Infeasible(
            "zero failure probability with a noisy oracle".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(OracleError::Infeasible(
            "zero accuracy tolerance with a noisy oracle".into(),
        ));
    }
    Ok(None)
}

/// Samples so that a scalar mean is within `tol` of its expectation with
/// probability at least `1 - fail_prob`.
///
/// Chebyshev: `n >= variance / (fail_prob * tol^2)`.
/// Sub-Gaussian: `n >= 2 variance ln(2 / fail_prob) / tol^2`.
pub fn value_sample_size(
    rule: SampleRule,
    variance: f64,
    fail_prob: f64,
    tol: f64,
) -> Result<u128, OracleError> {
    if let Some(n) = check_rule_inputs(variance, fail_prob, tol)? {
        return Ok(n);
    }
    let fail_prob = fail_prob.min(1.0);
    Ok(match rule {
        SampleRule::Chebyshev => ceil_count(variance / (fail_prob * tol * tol)),
        SampleRule::SubGaussian => ceil_count(2.0 * variance * (2.0 / fail_prob).ln().max(0.0) / (tol * tol)),
    })
}

/// Samples so that a vector mean is within `tol` (Euclidean) of its
/// expectation with probability at least `1 - fail_prob`, given a bound on
/// the covariance trace.
///
/// Chebyshev (Markov on the squared norm): `n >= trace / (fail_prob * tol^2)`.
/// Sub-Gaussian: `n >= trace (1 + sqrt(2 ln(1 / fail_prob)))^2 / tol^2`.
pub fn gradient_sample_size(
    rule: SampleRule,
    trace: f64,
    fail_prob: f64,
    tol: f64,
) -> Result<u128, OracleError> {
    if let Some(n) = check_rule_inputs(trace, fail_prob, tol)? {
        return Ok(n);
    }
    let fail_prob = fail_prob.min(1.0);
    Ok(match rule {
        SampleRule::Chebyshev => ceil_count(trace / (fail_prob * tol * tol)),
        SampleRule::SubGaussian => {
            let r = 1.0 + (2.0 * (1.0 / fail_prob).ln()).sqrt();
            ceil_count(trace * r * r / (tol * tol))
        }
    })
}
