use super::{
    potential_value, storm_iterate, IterationRecord, LemmaCheck, PotentialSpec, StormConfig, StormError,
    StormState,
};
use crate::oracles::{
    build_estimates, build_saa_model, build_saa_model_with_hessian, classify_events, OracleError,
    SaaSettings, StochasticOracle,
};
use crate::problems::Referee;
use crate::rng::stream_rng;
use crate::trace::{PhiDeltaPoint, PhiDeltaTrace};
use crate::Vector;

/// Sampling and instrumentation choices for [`run_storm`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Model accuracy probability.
    pub alpha: f64,
    /// Estimate accuracy probability.
    pub beta: f64,
    pub sampling: SaaSettings,
    /// Move `delta0` to the nearest `Delta_eps gamma^i`.
    pub snap_delta0: bool,
    /// Classify accuracy events and check the success/decrease lemmas.
    /// Needs a referee.
    pub instrument: bool,
    pub keep_records: bool,
    /// Average this many sampled Hessians into the model instead of `H = 0`.
    pub hessian_samples: Option<usize>,
    /// Box whose exits are counted (not enforced).
    pub domain_box: Option<Vec<(f64, f64)>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            alpha: 0.9,
            beta: 0.99,
            sampling: SaaSettings::default(),
            snap_delta0: false,
            instrument: false,
            keep_records: false,
            hessian_samples: None,
            domain_box: None,
        }
    }
}

/// Result of a run. Hitting `max_iters` is an outcome, not an error.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: StormState,
    /// Per-iteration records, when requested.
    pub records: Vec<IterationRecord>,
    /// First `k` with `|grad f(x_k)| <= eps`; needs a referee.
    pub t_eps: Option<usize>,
    /// A referee was present and the stopping time was not reached.
    pub timed_out: bool,
    pub iterations: usize,
    pub value_samples: u128,
    pub gradient_samples: u128,
    pub f_final: Option<f64>,
    pub grad_norm_final: Option<f64>,
    pub delta0: f64,
    pub phi0: Option<f64>,
    pub cauchy_violations: usize,
    pub success_lemma_checked: usize,
    pub success_lemma_violations: usize,
    pub decrease_lemma_checked: usize,
    pub decrease_lemma_violations: usize,
    pub box_exits: usize,
    pub successes: usize,
}

impl RunOutcome {
    /// `(Phi_k, Delta_k)` view of the recorded iterations.
    pub fn phi_delta_trace(&self) -> PhiDeltaTrace {
        PhiDeltaTrace {
            points: self
                .records
                .iter()
                .filter_map(|r| {
                    Some(PhiDeltaPoint {
                        k: r.k,
                        phi: r.phi?,
                        delta: r.delta_before,
                        v: r.v_k(),
                        success: r.success,
                        model_good: r.model_good,
                        estimates_good: r.estimates_good,
                    })
                })
                .collect(),
        }
    }

    /// `(Delta_k, V_k)` for recorded iterations before the stopping time.
    pub fn drift_samples(&self) -> Vec<(f64, f64)> {
        let stop = self.t_eps.unwrap_or(usize::MAX);
        self.records
            .iter()
            .filter(|r| r.k < stop)
            .filter_map(|r| Some((r.delta_before, r.v_k()?)))
            .collect()
    }
}

/// `delta_eps gamma^i` for the integer `i` nearest to `log_gamma(delta / delta_eps)`.
pub fn snap_to_grid(delta: f64, delta_eps: f64, gamma: f64) -> f64 {
    let i = ((delta / delta_eps).ln() / gamma.ln()).round() as i32;
    delta_eps * gamma.powi(i)
}

/// Starting radius of a run: `config.delta0`, or when `snap` is set its
/// nearest point on the `Delta_eps gamma^i` grid, stepped down below
/// `delta_max` if needed.
pub fn initial_radius(config: &StormConfig, potential: &PotentialSpec, epsilon: f64, snap: bool) -> f64 {
    if !snap {
        return config.delta0;
    }
    let mut d0 = snap_to_grid(config.delta0, potential.delta_eps(epsilon), config.gamma);
    while d0 >= config.delta_max {
        d0 /= config.gamma;
    }
    d0
}

/// Runs STORM from `x0` until the referee sees `|grad f| <= epsilon` or
/// `max_iters` iterations have been taken.
///
/// Without a referee the stopping time cannot be observed and the run
/// always takes `max_iters` iterations.
#[allow(clippy::too_many_arguments)]
pub fn run_storm(
    oracle: &dyn StochasticOracle,
    referee: Option<&dyn Referee>,
    x0: &Vector,
    config: &StormConfig,
    potential: &PotentialSpec,
    epsilon: f64,
    seed: u64,
    options: &RunOptions,
) -> Result<RunOutcome, StormError> {
    if !(epsilon > 0.0) {
        return Err(StormError::Domain(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    if x0.len() != oracle.dim() {
        return Err(StormError::InvalidConfig(
            "start point and oracle dimensions differ".into(),
        ));
    }
    let targets = config.targets(options.alpha, options.beta);
    targets.validate()?;
    if options.instrument && referee.is_none() {
        return Err(OracleError::Capability("classify events without a referee").into());
    }

    let mut cfg = *config;
    cfg.delta0 = initial_radius(config, potential, epsilon, options.snap_delta0);
    let mut state = StormState::new(x0.clone(), cfg)?;
    let mut rng = stream_rng(seed, 0);
    let phi_at = |f: Option<f64>, d: f64| f.and_then(|f| potential_value(f, d, potential).ok());

    let mut out = RunOutcome {
        state: state.clone(),
        records: Vec::new(),
        t_eps: None,
        timed_out: false,
        iterations: 0,
        value_samples: 0,
        gradient_samples: 0,
        f_final: None,
        grad_norm_final: None,
        delta0: cfg.delta0,
        phi0: phi_at(referee.map(|r| r.value(x0)), cfg.delta0),
        cauchy_violations: 0,
        success_lemma_checked: 0,
        success_lemma_violations: 0,
        decrease_lemma_checked: 0,
        decrease_lemma_violations: 0,
        box_exits: 0,
        successes: 0,
    };

    let mut f_current = referee.map(|r| r.value(&state.iterate));
    loop {
        if let Some(r) = referee {
            if r.gradient(&state.iterate).norm() <= epsilon {
                out.t_eps = Some(state.iteration);
                break;
            }
        }
        if state.iteration >= cfg.max_iters {
            out.timed_out = referee.is_some();
            break;
        }

        let delta = state.radius();
        let built = match options.hessian_samples {
            Some(h) => build_saa_model_with_hessian(
                oracle,
                &state.iterate,
                delta,
                &targets,
                &options.sampling,
                h,
                cfg.kappa_bhm,
                &mut rng,
            )?,
            None => build_saa_model(
                oracle,
                &state.iterate,
                delta,
                &targets,
                &options.sampling,
                &mut rng,
            )?,
        };
        let (next, mut rec) = storm_iterate(&state, &built.model, |x, xs| {
            let e = build_estimates(oracle, x, xs, delta, &targets, &options.sampling, &mut rng)?;
            Ok((e.f0, e.fs, e.samples_per_point))
        })?;
        rec.value_samples = rec.value_samples.saturating_add(built.value_samples);
        rec.gradient_samples = built.gradient_samples;

        if let Some(r) = referee {
            let f_before = f_current;
            let f_after = if rec.success {
                Some(r.value(&rec.x_after))
            } else {
                f_before
            };
            rec.f_true_before = f_before;
            rec.f_true_after = f_after;
            rec.grad_norm_true = Some(r.gradient(&rec.x_before).norm());
            rec.phi = phi_at(f_before, rec.delta_before);
            rec.phi_next = phi_at(f_after, rec.delta_after);
            f_current = f_after;
            if options.instrument {
                let flags = classify_events(
                    &built.model,
                    &rec.step,
                    (rec.f0_est, rec.fs_est),
                    delta,
                    &targets,
                    Some(r),
                )?;
                rec.model_good = Some(flags.model_good);
                rec.estimates_good = Some(flags.estimates_good);
                rec.success_lemma = rec.check_success_lemma(&cfg);
                rec.decrease_lemma = rec.check_decrease_lemma(&cfg);
            }
        }

        out.value_samples = out.value_samples.saturating_add(rec.value_samples);
        out.gradient_samples = out.gradient_samples.saturating_add(rec.gradient_samples);
        out.cauchy_violations += usize::from(!rec.cauchy_ok);
        out.successes += usize::from(rec.success);
        for (check, seen, bad) in [
            (
                rec.success_lemma,
                &mut out.success_lemma_checked,
                &mut out.success_lemma_violations,
            ),
            (
                rec.decrease_lemma,
                &mut out.decrease_lemma_checked,
                &mut out.decrease_lemma_violations,
            ),
        ] {
            if check != LemmaCheck::NotApplicable {
                *seen += 1;
                *bad += usize::from(check == LemmaCheck::Violated);
            }
        }
        if let Some(bx) = &options.domain_box {
            let inside = rec.x_after.iter().zip(bx).all(|(v, (lo, hi))| lo <= v && v <= hi);
            out.box_exits += usize::from(!inside);
        }
        if options.keep_records {
            out.records.push(rec);
        }
        state = next;
    }

    out.iterations = state.iteration;
    if let Some(r) = referee {
        out.f_final = Some(r.value(&state.iterate));
        out.grad_norm_final = Some(r.gradient(&state.iterate).norm());
    }
    out.state = state;
    Ok(out)
}
