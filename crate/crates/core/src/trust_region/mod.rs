//! The STORM iteration: Cauchy step on a random model, acceptance by the
//! ratio of estimated to predicted decrease, and geometric radius updates.

mod model;
mod potential;
mod run;

use thiserror::Error;

use crate::oracles::{AccuracyTargets, OracleError};
use crate::Vector;

pub use model::{
    cauchy_decrease_bound, cauchy_step, rho_ratio, satisfies_cauchy_decrease, QuadraticModel, TrialStep,
    DECREASE_RTOL,
};
pub use potential::{
    complexity_bound, drift_constants, potential_value, renewal_route_bound, DriftConstants, PotentialSpec,
};
pub use run::{initial_radius, run_storm, snap_to_grid, RunOptions, RunOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StormError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Algorithm constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StormConfig {
    pub gamma: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub delta0: f64,
    pub delta_max: f64,
    pub kappa_fcd: f64,
    pub kappa_ef: f64,
    pub kappa_eg: f64,
    pub kappa_bhm: f64,
    pub eps_f: f64,
    pub max_iters: usize,
    /// Enforce the constant regime under which the drift constants hold.
    pub simplified_regime: bool,
}

impl Default for StormConfig {
    fn default() -> Self {
        StormConfig {
            gamma: 2.0,
            eta1: 0.1,
            eta2: 0.05,
            delta0: 1.0,
            delta_max: 10.0,
            kappa_fcd: 0.5,
            kappa_ef: 10.0,
            kappa_eg: 10.0,
            kappa_bhm: 1.0,
            eps_f: 0.25 * 0.1 * 0.05,
            max_iters: 100_000,
            simplified_regime: false,
        }
    }
}

impl StormConfig {
    pub fn validate(&self) -> Result<(), StormError> {
        let mut bad = Vec::new();
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            bad.push(format!("gamma = {} must exceed 1", self.gamma));
        }
        if !(self.eta1 > 0.0 && self.eta1 < 1.0) {
            bad.push(format!("eta1 = {} must lie in (0, 1)", self.eta1));
        }
        if !(self.eta2 > 0.0 && self.eta2.is_finite()) {
            bad.push(format!("eta2 = {} must be positive", self.eta2));
        }
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            bad.push(format!("delta0 = {} must be positive", self.delta0));
        }
        if !(self.delta_max > self.delta0 && self.delta_max.is_finite()) {
            bad.push(format!(
                "delta_max = {} must exceed delta0 = {}",
                self.delta_max, self.delta0
            ));
        }
        if !(self.kappa_fcd > 0.0 && self.kappa_fcd <= 1.0) {
            bad.push(format!("kappa_fcd = {} must lie in (0, 1]", self.kappa_fcd));
        }
        if !(self.kappa_ef > 0.0 && self.kappa_eg > 0.0) {
            bad.push("kappa_ef and kappa_eg must be positive".into());
        }
        if !(self.kappa_bhm >= 1.0) {
            bad.push(format!("kappa_bhm = {} must be at least 1", self.kappa_bhm));
        }
        if !(self.eps_f >= 0.0 && self.eps_f <= 0.25 * self.eta1 * self.eta2 * (1.0 + 1e-12)) {
            bad.push(format!(
                "eps_f = {} must lie in [0, eta1 eta2 / 4 = {}]",
                self.eps_f,
                0.25 * self.eta1 * self.eta2
            ));
        }
        if self.max_iters == 0 {
            bad.push("max_iters must be positive".into());
        }
        if self.simplified_regime {
            bad.extend(self.regime_violations());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(StormError::InvalidConfig(bad.join("; ")))
        }
    }

    /// Inequalities of the simplified constant regime that fail.
    pub fn regime_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.kappa_ef != self.kappa_eg {
            out.push(format!(
                "kappa_ef = kappa_eg (got {} and {})",
                self.kappa_ef, self.kappa_eg
            ));
        }
        if !(self.kappa_eg >= 10.0) {
            out.push(format!("kappa_eg >= 10 (got {})", self.kappa_eg));
        }
        if self.eta1 != 0.1 {
            out.push(format!("eta1 = 0.1 (got {})", self.eta1));
        }
        if self.kappa_fcd != 0.5 {
            out.push(format!("kappa_fcd = 0.5 (got {})", self.kappa_fcd));
        }
        if !(self.gamma <= 2.0) {
            out.push(format!("gamma <= 2 (got {})", self.gamma));
        }
        if !(self.eta2 > 0.03) {
            out.push(format!("eta2 > 0.03 (got {})", self.eta2));
        }
        if !(self.kappa_bhm <= 12.0 * self.kappa_ef) {
            out.push(format!(
                "kappa_bhm <= 12 kappa_ef (got {} > {})",
                self.kappa_bhm,
                12.0 * self.kappa_ef
            ));
        }
        out
    }

    pub fn targets(&self, alpha: f64, beta: f64) -> AccuracyTargets {
        AccuracyTargets {
            alpha,
            beta,
            kappa_ef: self.kappa_ef,
            kappa_eg: self.kappa_eg,
            eps_f: self.eps_f,
        }
    }

    /// Largest grid exponent `j` with `delta0 gamma^j <= delta_max`.
    pub fn max_exponent(&self) -> i32 {
        ((self.delta_max / self.delta0).ln() / self.gamma.ln() + 1e-9).floor() as i32
    }
}

/// Iterate and radius. The radius is `delta0 gamma^j` for an integer `j`
/// no larger than [`StormConfig::max_exponent`].
#[derive(Debug, Clone, PartialEq)]
pub struct StormState {
    pub iterate: Vector,
    pub iteration: usize,
    pub config: StormConfig,
    exponent: i32,
}

impl StormState {
    pub fn new(x0: Vector, config: StormConfig) -> Result<Self, StormError> {
        config.validate()?;
        Ok(StormState {
            iterate: x0,
            iteration: 0,
            config,
            exponent: 0,
        })
    }

    pub fn radius(&self) -> f64 {
        self.config.delta0 * self.config.gamma.powi(self.exponent)
    }

    pub fn exponent(&self) -> i32 {
        self.exponent
    }

    /// Radius cap actually reachable on the grid.
    pub fn effective_delta_max(&self) -> f64 {
        self.config.delta0 * self.config.gamma.powi(self.config.max_exponent())
    }
}

/// Outcome of a lemma check on one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LemmaCheck {
    #[default]
    NotApplicable,
    Held,
    Violated,
}

/// Everything observed in one iteration. Referee-dependent fields are
/// `None` when no referee is available.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub x_before: Vector,
    pub x_after: Vector,
    /// Trial step, taken or not.
    pub step: Vector,
    pub delta_before: f64,
    pub delta_after: f64,
    pub model_gradient_norm: f64,
    pub model_decrease: f64,
    pub cauchy_bound: f64,
    pub cauchy_ok: bool,
    pub f0_est: f64,
    pub fs_est: f64,
    pub rho: f64,
    pub success: bool,
    pub value_samples: u128,
    pub gradient_samples: u128,
    pub f_true_before: Option<f64>,
    pub f_true_after: Option<f64>,
    pub grad_norm_true: Option<f64>,
    pub model_good: Option<bool>,
    pub estimates_good: Option<bool>,
    pub phi: Option<f64>,
    pub phi_next: Option<f64>,
    pub success_lemma: LemmaCheck,
    pub decrease_lemma: LemmaCheck,
}

impl IterationRecord {
    /// `V_k = Phi_{k+1} - Phi_k`.
    pub fn v_k(&self) -> Option<f64> {
        Some(self.phi_next? - self.phi?)
    }

    /// Good model, good estimates and a radius small relative to `|g|`
    /// must give a successful iteration.
    pub fn check_success_lemma(&self, config: &StormConfig) -> LemmaCheck {
        let (Some(true), Some(true)) = (self.model_good, self.estimates_good) else {
            return LemmaCheck::NotApplicable;
        };
        if config.eps_f > config.kappa_ef {
            return LemmaCheck::NotApplicable;
        }
        let factor = (1.0 / config.kappa_bhm)
            .min(1.0 / config.eta2)
            .min(config.kappa_fcd * (1.0 - config.eta1) / (8.0 * config.kappa_ef));
        if self.delta_before > factor * self.model_gradient_norm * (1.0 - LEMMA_RTOL) {
            return LemmaCheck::NotApplicable;
        }
        if self.success {
            LemmaCheck::Held
        } else {
            LemmaCheck::Violated
        }
    }

    /// A successful iteration with good estimates decreases `f` by at
    /// least `C_2 delta^2`.
    pub fn check_decrease_lemma(&self, config: &StormConfig) -> LemmaCheck {
        let bound =
            0.5 * config.eta1 * config.eta2 * config.kappa_fcd * (config.eta2 / config.kappa_bhm).min(1.0);
        if !(self.success && self.estimates_good == Some(true) && config.eps_f < 0.5 * bound) {
            return LemmaCheck::NotApplicable;
        }
        let (Some(before), Some(after)) = (self.f_true_before, self.f_true_after) else {
            return LemmaCheck::NotApplicable;
        };
        let c2 = bound - 2.0 * config.eps_f;
        let required = -c2 * self.delta_before * self.delta_before;
        let slack = LEMMA_RTOL * (before.abs() + after.abs() + required.abs());
        if after - before <= required + slack {
            LemmaCheck::Held
        } else {
            LemmaCheck::Violated
        }
    }
}

/// Relative tolerance for the lemma checks.
pub const LEMMA_RTOL: f64 = 1e-8;

/// One STORM iteration from `state` with the given model.
///
/// `estimates` receives `(x_k, x_k + s_k)` and returns `(f_k^0, f_k^s)`
/// together with the number of samples it used per point.
pub fn storm_iterate<F>(
    state: &StormState,
    model: &QuadraticModel,
    estimates: F,
) -> Result<(StormState, IterationRecord), StormError>
where
    F: FnOnce(&Vector, &Vector) -> Result<(f64, f64, u128), StormError>,
{
    if model.dim() != state.iterate.len() {
        return Err(StormError::InvalidConfig(
            "model and iterate dimensions differ".into(),
        ));
    }
    let cfg = &state.config;
    let delta = state.radius();
    let trial = cauchy_step(model, delta)?;
    let bound = cauchy_decrease_bound(model, delta, cfg.kappa_fcd);
    let cauchy_ok = satisfies_cauchy_decrease(trial.model_decrease, bound);
    debug_assert!(
        cauchy_ok,
        "Cauchy decrease violated: {} < {bound}",
        trial.model_decrease
    );

    let x_trial = &state.iterate + &trial.step;
    let (f0, fs, n_est) = estimates(&state.iterate, &x_trial)?;
    let rho = rho_ratio(f0, fs, trial.model_decrease)?;
    let gn = model.gradient.norm();
    let success = rho >= cfg.eta1 && gn >= cfg.eta2 * delta;

    let mut next = state.clone();
    next.iteration += 1;
    if success {
        next.iterate = x_trial;
        next.exponent = (state.exponent + 1).min(cfg.max_exponent());
    } else {
        next.exponent = state.exponent - 1;
    }
    let record = IterationRecord {
        k: state.iteration,
        x_before: state.iterate.clone(),
        x_after: next.iterate.clone(),
        step: trial.step.clone(),
        delta_before: delta,
        delta_after: next.radius(),
        model_gradient_norm: gn,
        model_decrease: trial.model_decrease,
        cauchy_bound: bound,
        cauchy_ok,
        f0_est: f0,
        fs_est: fs,
        rho,
        success,
        value_samples: 2 * n_est,
        gradient_samples: 0,
        f_true_before: None,
        f_true_after: None,
        grad_norm_true: None,
        model_good: None,
        estimates_good: None,
        phi: None,
        phi_next: None,
        success_lemma: LemmaCheck::NotApplicable,
        decrease_lemma: LemmaCheck::NotApplicable,
    };
    Ok((next, record))
}
