use storm_core::renewal::{
    interarrival_stats, measure_interarrivals, replicate_stop_times, simulate_walk, theoretical_stop_bound,
    Deterministic, DriftSpec, IncrementLaw, TwoPoint, UniformJitter, WalkConfig,
};
use storm_core::stats::Summary;

use crate::harness::{Validation, Z_SLACK};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkCheck {
    pub p: f64,
    pub steps: usize,
    pub gaps: usize,
    pub mean: f64,
    pub se: f64,
    pub bound: f64,
    pub lag1_autocorrelation: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopCheck {
    pub name: &'static str,
    pub p: f64,
    pub reps: usize,
    pub mean: f64,
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenewalReport {
    pub walks: Vec<WalkCheck>,
    pub stops: Vec<StopCheck>,
}

impl RenewalReport {
    pub fn all_pass(&self) -> bool {
        self.walks.iter().all(|w| w.pass) && self.stops.iter().all(|s| s.pass)
    }

    pub fn validations(&self) -> Vec<Validation> {
        vec![
            Validation {
                name: "interarrival_bound",
                enabled: true,
                passed: self.walks.iter().all(|w| w.pass),
                detail: format!("{} walks", self.walks.len()),
            },
            Validation {
                name: "stop_time_bound",
                enabled: !self.stops.is_empty(),
                passed: self.stops.iter().all(|s| s.pass),
                detail: format!("{} drift configurations", self.stops.len()),
            },
        ]
    }

    pub fn render(&self) -> String {
        let mut out =
            String::from("p      steps     gaps      mean_tau    se          bound      lag1      pass\n");
        for w in &self.walks {
            out += &format!(
                "{:<6} {:<9} {:<9} {:<11.6} {:<11.3e} {:<10.6} {:<9} {}\n",
                w.p,
                w.steps,
                w.gaps,
                w.mean,
                w.se,
                w.bound,
                w.lag1_autocorrelation.map_or("-".into(), |r| format!("{r:.4}")),
                w.pass
            );
        }
        if !self.stops.is_empty() {
            out += "drift law       p      reps    mean_T      se          bound       pass\n";
            for s in &self.stops {
                out += &format!(
                    "{:<15} {:<6} {:<7} {:<11.4} {:<11.3e} {:<11.4} {}\n",
                    s.name, s.p, s.reps, s.mean, s.se, s.bound, s.pass
                );
            }
        }
        out
    }
}

/// Simulates the radius walk for each `p` over `steps` steps starting at the
/// threshold, and compares the mean renewal gap with `p / (2p - 1)`.
pub fn check_walk(p: f64, steps: usize, seed: u64) -> Result<WalkCheck, HarnessError> {
    let cfg = WalkConfig::on_grid(p, 2.0, 1e-3, 0, 4, seed);
    let deltas = simulate_walk(&cfg, steps).map_err(|e| HarnessError::Config(e.to_string()))?;
    let renewal = measure_interarrivals(&deltas, cfg.delta_eps);
    let stats = interarrival_stats(&deltas, &renewal, cfg.delta_eps, p);
    let (all, bound) = match (stats.all, stats.bound) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(HarnessError::Domain(format!("no interarrival bound at p = {p}"))),
    };
    Ok(WalkCheck {
        p,
        steps,
        gaps: all.count,
        mean: all.mean,
        se: all.se,
        bound,
        lag1_autocorrelation: stats.lag1_autocorrelation,
        pass: all.mean <= bound + Z_SLACK * all.se,
    })
}

/// Replicates the coupled potential/radius process under `law` and compares
/// the mean stopping time with the renewal bound. The process stops once the
/// potential drops below the largest single decrease, so the clamp at zero
/// never acts.
pub fn check_stop_time(
    name: &'static str,
    cfg: &WalkConfig,
    drift: &DriftSpec,
    reps: usize,
) -> Result<StopCheck, HarnessError> {
    let floor = drift
        .increments
        .max_decrease(drift.drift_at(cfg.delta_max), cfg.p);
    let times = replicate_stop_times(cfg, drift, |phi, _, _| phi <= floor, reps, None)
        .into_iter()
        .map(|r| r.map(|(t, _)| t as f64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| HarnessError::Domain(e.to_string()))?;
    let s = Summary::of(&times).ok_or_else(|| HarnessError::Config("reps must be at least 1".into()))?;
    let bound = theoretical_stop_bound(cfg.p, drift, cfg.delta_eps, cfg.delta0)
        .map_err(|e| HarnessError::Domain(e.to_string()))?;
    Ok(StopCheck {
        name,
        p: cfg.p,
        reps,
        mean: s.mean,
        se: s.se,
        bound,
        pass: s.mean <= bound + Z_SLACK * s.se,
    })
}

/// The three synthetic drift configurations used by the stop-time check.
pub fn drift_configurations(seed: u64) -> Vec<(&'static str, WalkConfig, DriftSpec)> {
    fn with(law: impl IncrementLaw + 'static, theta: f64, phi0: f64) -> DriftSpec {
        DriftSpec::power(theta, 2, phi0, 2.0 * phi0).with_increments(law)
    }
    vec![
        (
            "deterministic",
            WalkConfig::on_grid(0.6, 2.0, 0.5, 1, 3, seed),
            with(Deterministic, 0.5, 20.0),
        ),
        (
            "two-point",
            WalkConfig::on_grid(0.75, 2.0, 0.5, 1, 2, seed.wrapping_add(1)),
            with(TwoPoint { rise: 2.0 }, 0.5, 20.0),
        ),
        (
            "uniform-jitter",
            WalkConfig::on_grid(0.9, 1.5, 0.25, 0, 4, seed.wrapping_add(2)),
            with(UniformJitter { half_width: 0.9 }, 0.25, 10.0),
        ),
    ]
}

/// Interarrival checks for every `p` plus, when `stop_reps > 0`, the
/// stop-time checks on [`drift_configurations`].
pub fn renewal_validation(
    ps: &[f64],
    steps: usize,
    stop_reps: usize,
    seed: u64,
) -> Result<RenewalReport, HarnessError> {
    let walks = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| check_walk(p, steps, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let stops = if stop_reps == 0 {
        Vec::new()
    } else {
        drift_configurations(seed)
            .iter()
            .map(|(name, cfg, drift)| check_stop_time(name, cfg, drift, stop_reps))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(RenewalReport { walks, stops })
}
