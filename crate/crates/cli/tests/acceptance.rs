//! Acceptance criteria. Each prints one PASS/FAIL line; the process exits
//! nonzero if any criterion fails.

use std::time::Instant;

use storm_core::oracles::{build_estimates, build_saa_model, classify_events, SaaSettings, SampleRule};
use storm_core::problems::make_noisy_quadratic;
use storm_core::rng::stream_rng;
use storm_core::stats::binomial_sigma;
use storm_core::trace::drift_bins;
use storm_core::trust_region::{cauchy_step, run_storm, RunOptions, DECREASE_RTOL};
use storm_core::{PotentialSpec, StormConfig, Vector};
use storm_harness::renewal_check::{check_stop_time, check_walk, drift_configurations};
use storm_harness::{run_plan, ExperimentPlan};

const Z: f64 = 3.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Interarrival bound for p in {0.6, 0.75, 0.9} over 10^6 steps.
fn interarrival() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, p) in [0.6, 0.75, 0.9].into_iter().enumerate() {
        let w = check_walk(p, 1_000_000, 100 + i as u64).expect("walk");
        pass &= w.pass;
        detail.push(format!(
            "p={p}: mean {:.4} se {:.1e} bound {:.4}",
            w.mean, w.se, w.bound
        ));
    }
    outcome(pass, detail.join("; "))
}

/// Mean stopping time of three synthetic drift processes, 10^4 reps each.
fn stop_time() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, cfg, drift) in drift_configurations(7) {
        let s = check_stop_time(name, &cfg, &drift, 10_000).expect("stop times");
        pass &= s.pass;
        detail.push(format!(
            "{name}: mean {:.2} se {:.2} bound {:.2}",
            s.mean, s.se, s.bound
        ));
    }
    outcome(pass, detail.join("; "))
}

/// Noiseless dim-2 quadratic: monotone f, exact Cauchy steps, T < 200 at 1e-4.
fn deterministic() -> Outcome {
    let p = make_noisy_quadratic(2, 10.0, 0.0, 0.0, 0);
    let cfg = StormConfig {
        simplified_regime: true,
        ..StormConfig::default()
    };
    let pot = PotentialSpec::for_config(&cfg);
    let opts = RunOptions {
        keep_records: true,
        alpha: 1.0,
        beta: 1.0,
        ..RunOptions::default()
    };
    let out = run_storm(p.oracle().as_ref(), Some(&p), &p.x0, &cfg, &pot, 1e-4, 0, &opts).expect("run");
    let mut monotone = true;
    let mut exact_steps = true;
    let mut exact_models = true;
    for r in &out.records {
        let (before, after) = (r.f_true_before.unwrap(), r.f_true_after.unwrap());
        monotone &= after <= before * (1.0 + 1e-10);
        let model_value = p.value(&r.x_before);
        let g = p.gradient(&r.x_before);
        exact_models &= (r.f0_est - model_value).abs() <= 1e-10 * model_value.abs().max(1e-300);
        exact_models &= ((r.model_gradient_norm - g.norm()).abs()) <= 1e-10 * g.norm();
        // Recompute the Cauchy step on the exact first-order model.
        let model = storm_core::QuadraticModel::new(
            r.x_before.clone(),
            model_value,
            g,
            storm_core::Matrix::zeros(2, 2),
        )
        .unwrap();
        let c = cauchy_step(&model, r.delta_before).unwrap();
        exact_steps &= r.cauchy_ok
            && (&c.step - &r.step).norm() <= 1e-10 * r.step.norm().max(1e-300)
            && r.model_decrease >= r.cauchy_bound * (1.0 - DECREASE_RTOL);
    }
    let t = out.t_eps;
    let pass = monotone && exact_steps && exact_models && t.is_some_and(|t| t < 200);
    outcome(
        pass,
        format!(
            "T_eps = {t:?}, monotone {monotone}, Cauchy exact {exact_steps}, models exact {exact_models}"
        ),
    )
}

fn quadratic_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan::default();
    plan.problem.dim = 5;
    plan.problem.sigma = 0.1;
    plan.problem.sigma_g = 0.1;
    plan.run.seed = 2024;
    plan
}

/// Log-log slope of mean T_eps in [-2.4, -1.6] and every mean below the bound.
fn complexity_slope() -> Outcome {
    let mut plan = quadratic_plan();
    plan.run.epsilon = vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    plan.run.reps = 50;
    let out = run_plan(&plan).expect("plan");
    let means: Vec<String> = out
        .summary
        .per_epsilon
        .iter()
        .map(|e| format!("{:.2}", e.mean_t.unwrap_or(f64::NAN)))
        .collect();
    let slope = out.summary.slope;
    let in_window = slope.is_some_and(|f| (-2.4..=-1.6).contains(&f.slope));
    let below = out.bound.all_pass();
    outcome(
        in_window && below,
        format!(
            "slope {} (se {}), window [-2.4, -1.6]; means [{}]; all below bound {below}",
            slope.map_or("-".into(), |f| format!("{:.3}", f.slope)),
            slope.map_or("-".into(), |f| format!("{:.3}", f.slope_se)),
            means.join(", ")
        ),
    )
}

fn instrumented_config() -> StormConfig {
    // eps_F small enough that the decrease lemma applies.
    StormConfig {
        simplified_regime: true,
        eps_f: 1e-5,
        ..StormConfig::default()
    }
}

fn instrumented_options() -> RunOptions {
    RunOptions {
        alpha: 0.9,
        beta: 1.0 - 1e-7,
        snap_delta0: true,
        instrument: true,
        keep_records: true,
        ..RunOptions::default()
    }
}

/// Drift bins of V_k pooled over at least 10^5 iterations before T_eps.
fn drift() -> Outcome {
    let p = make_noisy_quadratic(5, 10.0, 0.1, 0.1, 0);
    let cfg = instrumented_config();
    let pot = PotentialSpec::for_config(&cfg);
    let opts = instrumented_options();
    let mut samples = Vec::new();
    let mut seed = 0;
    while samples.len() < 100_000 {
        let out = run_storm(
            p.oracle().as_ref(),
            Some(&p),
            &p.x0,
            &cfg,
            &pot,
            1e-3,
            seed,
            &opts,
        )
        .expect("run");
        samples.extend(out.drift_samples());
        seed += 1;
    }
    let theta = 1.0 / (1600.0 * cfg.kappa_eg);
    let n = samples.len();
    let bins = drift_bins(samples, theta, |d| d * d, 200, Z);
    let worst = bins
        .iter()
        .map(|b| (b.mean_v - b.required) / b.se_v.max(1e-300))
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        !bins.is_empty() && bins.iter().all(|b| b.pass),
        format!(
            "{n} samples from {seed} runs, {} bins, largest (mean - required)/se = {worst:.3e}",
            bins.len()
        ),
    )
}

/// P(I_k) >= alpha - 3 sigma and P(J_k) >= beta - 3 sigma over 10^4 builds at
/// three (x, delta) configurations, for both sample-size rules.
fn calibration() -> Outcome {
    let p = make_noisy_quadratic(5, 10.0, 0.1, 0.1, 0);
    let oracle = p.oracle();
    let cfg = StormConfig::default();
    let (alpha, beta) = (0.6, 0.9);
    let targets = cfg.targets(alpha, beta);
    let points = [
        (Vector::from_element(5, 1.0), 1.0),
        (Vector::from_element(5, 0.3), 0.1),
        (
            Vector::from_fn(5, |i, _| if i % 2 == 0 { 0.05 } else { -0.05 }),
            1e-3,
        ),
    ];
    let builds = 10_000;
    let mut pass = true;
    let mut detail = Vec::new();
    for rule in [SampleRule::Chebyshev, SampleRule::SubGaussian] {
        let settings = SaaSettings {
            rule,
            budget_cap: None,
        };
        for (ci, (x, delta)) in points.iter().enumerate() {
            let mut rng = stream_rng(99, ci as u64);
            let (mut good_model, mut good_est) = (0usize, 0usize);
            for _ in 0..builds {
                let m = build_saa_model(oracle.as_ref(), x, *delta, &targets, &settings, &mut rng).unwrap();
                let step = cauchy_step(&m.model, *delta).unwrap().step;
                let e = build_estimates(
                    oracle.as_ref(),
                    x,
                    &(x + &step),
                    *delta,
                    &targets,
                    &settings,
                    &mut rng,
                )
                .unwrap();
                let flags =
                    classify_events(&m.model, &step, (e.f0, e.fs), *delta, &targets, Some(&p)).unwrap();
                good_model += flags.model_good as usize;
                good_est += flags.estimates_good as usize;
            }
            let pm = good_model as f64 / builds as f64;
            let pe = good_est as f64 / builds as f64;
            pass &= pm >= alpha - Z * binomial_sigma(alpha, builds);
            pass &= pe >= beta - Z * binomial_sigma(beta, builds);
            detail.push(format!("{rule:?} #{ci}: P(I) {pm:.4}, P(J) {pe:.4}"));
        }
    }
    outcome(pass, format!("alpha {alpha}, beta {beta}; {}", detail.join("; ")))
}

/// Zero violations of the success and decrease lemmas in instrumented runs.
fn lemmas() -> Outcome {
    let p = make_noisy_quadratic(5, 10.0, 0.1, 0.1, 0);
    let mut checked = [0usize; 2];
    let mut violations = [0usize; 2];
    // Large and small initial radii; the success lemma only applies once the
    // radius is small relative to the model gradient.
    for delta0 in [1.0, 1e-4] {
        let cfg = StormConfig {
            delta0,
            ..instrumented_config()
        };
        let pot = PotentialSpec::for_config(&cfg);
        for eps in [1e-1, 1e-2, 1e-3] {
            for seed in 0..100 {
                let out = run_storm(
                    p.oracle().as_ref(),
                    Some(&p),
                    &p.x0,
                    &cfg,
                    &pot,
                    eps,
                    7000 + seed,
                    &instrumented_options(),
                )
                .expect("run");
                checked[0] += out.success_lemma_checked;
                checked[1] += out.decrease_lemma_checked;
                violations[0] += out.success_lemma_violations;
                violations[1] += out.decrease_lemma_violations;
            }
        }
    }
    outcome(
        violations == [0, 0] && checked.iter().all(|&c| c > 0),
        format!(
            "success lemma {}/{} violated, decrease lemma {}/{} violated",
            violations[0], checked[0], violations[1], checked[1]
        ),
    )
}

/// Per-query corruption with probability 0.02 and a +10^6 shift.
fn corruption() -> Outcome {
    let mut plan = quadratic_plan();
    plan.oracle.failure_prob = 0.02;
    plan.oracle.corruption_shift = 1e6;
    plan.storm.max_iters = 100_000;
    plan.run.epsilon = vec![1e-2];
    plan.run.reps = 50;
    let out = run_plan(&plan).expect("plan");
    let e = &out.summary.per_epsilon[0];
    outcome(
        e.timeout_fraction <= 0.1,
        format!(
            "{} of {} runs timed out, mean T over completed runs {:.1}",
            e.timeouts,
            e.runs,
            e.mean_t.unwrap_or(f64::NAN)
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 interarrival bound", interarrival),
        ("2 stopping-time bound", stop_time),
        ("3 deterministic degeneration", deterministic),
        ("4 complexity slope", complexity_slope),
        ("5 drift validation", drift),
        ("6 probability calibration", calibration),
        ("7 lemma assertions", lemmas),
        ("8 corruption robustness", corruption),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} criterion {name} ({:.1}s): {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
