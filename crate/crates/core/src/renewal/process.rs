use rand::Rng;
use rayon::prelude::*;

use super::walk::{measure_interarrivals_until, GridWalk};
use super::{theoretical_stop_bound, DriftSpec, RenewalError, RenewalTrace, WalkConfig};
use crate::rng::{stream_rng, StreamRng};
use crate::trace::{PhiDeltaPoint, PhiDeltaTrace};

/// Distribution of the potential increment `V_k` given the required drift
/// `theta * h(Delta_k)` and the outcome of the walk's coin.
///
/// Implementations must satisfy `E[V | Delta] <= -drift` when the coin is up
/// with probability `p`.
pub trait IncrementLaw: Send + Sync {
    fn name(&self) -> &'static str;

    fn sample(&self, drift: f64, up: bool, p: f64, rng: &mut StreamRng) -> f64;

    /// Largest possible decrease for this drift (used to size stop rules so
    /// the clamp at zero never bites before stopping).
    fn max_decrease(&self, drift: f64, p: f64) -> f64;
}

/// `V = -drift` exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deterministic;

impl IncrementLaw for Deterministic {
    fn name(&self) -> &'static str {
        "deterministic"
    }

    fn sample(&self, drift: f64, _up: bool, _p: f64, _rng: &mut StreamRng) -> f64 {
        -drift
    }

    fn max_decrease(&self, drift: f64, _p: f64) -> f64 {
        drift
    }
}

/// Two-point increments coupled to the walk: on a down-step the potential
/// rises by `rise * drift`; on an up-step it falls by
/// `drift * (1 + (1 - p) * rise) / p`, which makes the conditional mean
/// exactly `-drift`.
#[derive(Debug, Clone, Copy)]
pub struct TwoPoint {
    pub rise: f64,
}

impl Default for TwoPoint {
    fn default() -> Self {
        TwoPoint { rise: 1.0 }
    }
}

impl IncrementLaw for TwoPoint {
    fn name(&self) -> &'static str {
        "two-point"
    }

    fn sample(&self, drift: f64, up: bool, p: f64, _rng: &mut StreamRng) -> f64 {
        if up {
            -self.max_decrease(drift, p)
        } else {
            self.rise * drift
        }
    }

    fn max_decrease(&self, drift: f64, p: f64) -> f64 {
        drift * (1.0 + (1.0 - p) * self.rise) / p
    }
}

/// `V = -drift * (1 + U)` with `U` uniform on `[-half_width, half_width]`,
/// independent of the walk.
#[derive(Debug, Clone, Copy)]
pub struct UniformJitter {
    pub half_width: f64,
}

impl IncrementLaw for UniformJitter {
    fn name(&self) -> &'static str {
        "uniform-jitter"
    }

    fn sample(&self, drift: f64, _up: bool, _p: f64, rng: &mut StreamRng) -> f64 {
        let u: f64 = rng.random_range(-self.half_width..=self.half_width);
        -drift * (1.0 + u)
    }

    fn max_decrease(&self, drift: f64, _p: f64) -> f64 {
        drift * (1.0 + self.half_width)
    }
}

/// Default hard cap: `1000 * theoretical_stop_bound`, or one million steps
/// when the bound is undefined.
pub fn default_step_cap(cfg: &WalkConfig, drift: &DriftSpec) -> usize {
    theoretical_stop_bound(cfg.p, drift, cfg.delta_eps, cfg.delta0)
        .map(|b| (1000.0 * b).ceil().clamp(1000.0, 1e9) as usize)
        .unwrap_or(1_000_000)
}

/// Runs the coupled `(Phi, Delta)` process until `stop_rule(phi, delta, k)`
/// fires, using stream 0 of `cfg.seed`.
pub fn simulate_phi_delta<S>(
    cfg: &WalkConfig,
    drift: &DriftSpec,
    stop_rule: S,
    max_steps: Option<usize>,
) -> Result<(PhiDeltaTrace, RenewalTrace), RenewalError>
where
    S: Fn(f64, f64, usize) -> bool,
{
    simulate_phi_delta_with_rng(cfg, drift, stop_rule, max_steps, stream_rng(cfg.seed, 0))
}

/// As [`simulate_phi_delta`] with an explicit random stream.
///
/// The walk's coin drives both processes: `W_k` moves the radius and is
/// handed to the increment law, so renewals and potential are coupled the
/// way good iterations couple them in the optimizer. `Phi` is clamped to
/// `[0, phi_max]`; clamping at the top can only lower `V_k`.
pub fn simulate_phi_delta_with_rng<S>(
    cfg: &WalkConfig,
    drift: &DriftSpec,
    stop_rule: S,
    max_steps: Option<usize>,
    rng: StreamRng,
) -> Result<(PhiDeltaTrace, RenewalTrace), RenewalError>
where
    S: Fn(f64, f64, usize) -> bool,
{
    let mut walk = GridWalk::new(cfg, rng)?;
    let j0 = walk.exponent();
    let grid: Vec<f64> = (j0.min(0) - 8..=cfg.grid_exponent(cfg.delta_max).unwrap_or(j0))
        .map(|j| cfg.level(j))
        .collect();
    drift.validate(&grid)?;
    let cap = max_steps.unwrap_or_else(|| default_step_cap(cfg, drift));

    let mut trace = PhiDeltaTrace::default();
    let mut phi = drift.phi0;
    let mut k = 0;
    loop {
        let delta = walk.delta();
        if stop_rule(phi, delta, k) {
            trace.points.push(PhiDeltaPoint {
                k,
                phi,
                delta,
                v: None,
                success: false,
                model_good: None,
                estimates_good: None,
            });
            break;
        }
        if k >= cap {
            return Err(RenewalError::Timeout {
                steps: cap,
                trace: Box::new(trace),
            });
        }
        let up = walk.step();
        let raw = drift
            .increments
            .sample(drift.drift_at(delta), up, cfg.p, walk.rng_mut());
        let next = (phi + raw).clamp(0.0, drift.phi_max);
        trace.points.push(PhiDeltaPoint {
            k,
            phi,
            delta,
            v: Some(next - phi),
            success: up,
            model_good: None,
            estimates_good: None,
        });
        phi = next;
        k += 1;
    }
    let renewal = measure_interarrivals_until(&trace.deltas(), cfg.delta_eps, k);
    Ok((trace, renewal))
}

/// Stopping times of `reps` independent replications, run in parallel.
///
/// Replication `r` uses stream `r` of `cfg.seed`, so results do not depend on
/// scheduling.
pub fn replicate_stop_times<S>(
    cfg: &WalkConfig,
    drift: &DriftSpec,
    stop_rule: S,
    reps: usize,
    max_steps: Option<usize>,
) -> Vec<Result<(usize, usize), RenewalError>>
where
    S: Fn(f64, f64, usize) -> bool + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| {
            simulate_phi_delta_with_rng(cfg, drift, &stop_rule, max_steps, stream_rng(cfg.seed, r as u64))
                .map(|(_, renewal)| (renewal.stop_time, renewal.count_at_stop))
        })
        .collect()
}
