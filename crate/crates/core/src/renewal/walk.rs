use rand::Rng;

use super::{theoretical_interarrival_bound, RenewalError, RenewalTrace, WalkConfig, GRID_TOL};
use crate::rng::{stream_rng, StreamRng};
use crate::stats::{lag1_autocorrelation, Summary};

/// Birth-death walk on the grid `delta_eps * e^(j lambda)`, capped at
/// `delta_max`.
///
/// Up-steps multiply the radius by `e^lambda` (clipped at the cap), down-steps
/// divide by it. On the grid this is the tightest dynamics allowed by
/// `Delta_(k+1) >= min(Delta_k e^(lambda W_k), delta_eps)`: any radius above
/// `delta_eps` is at least one grid step above it and so cannot fall below it.
#[derive(Debug, Clone)]
pub struct GridWalk {
    j: i64,
    j_max: i64,
    p: f64,
    lambda: f64,
    delta_eps: f64,
    rng: StreamRng,
}

impl GridWalk {
    pub fn new(cfg: &WalkConfig, rng: StreamRng) -> Result<Self, RenewalError> {
        cfg.validate()?;
        Ok(GridWalk {
            j: cfg.grid_exponent(cfg.delta0).expect("validated"),
            j_max: cfg.grid_exponent(cfg.delta_max).expect("validated"),
            p: cfg.p,
            lambda: cfg.lambda,
            delta_eps: cfg.delta_eps,
            rng,
        })
    }

    pub fn exponent(&self) -> i64 {
        self.j
    }

    pub fn delta(&self) -> f64 {
        self.delta_eps * (self.j as f64 * self.lambda).exp()
    }

    /// Draws `W_k` and moves; returns `true` on an up-step.
    pub fn step(&mut self) -> bool {
        let up = self.rng.random_bool(self.p);
        self.j = if up {
            (self.j + 1).min(self.j_max)
        } else {
            self.j - 1
        };
        up
    }

    pub(crate) fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }
}

/// Simulates `horizon` radii `Delta_0, ..., Delta_(horizon-1)`.
pub fn simulate_walk(cfg: &WalkConfig, horizon: usize) -> Result<Vec<f64>, RenewalError> {
    if horizon == 0 {
        return Err(RenewalError::InvalidConfig("horizon must be >= 1".into()));
    }
    let mut walk = GridWalk::new(cfg, stream_rng(cfg.seed, 0))?;
    let mut out = Vec::with_capacity(horizon);
    out.push(walk.delta());
    for _ in 1..horizon {
        walk.step();
        out.push(walk.delta());
    }
    Ok(out)
}

/// Renewal arrivals of a radius trace, with `T` taken as the last index.
pub fn measure_interarrivals(deltas: &[f64], delta_eps: f64) -> RenewalTrace {
    measure_interarrivals_until(deltas, delta_eps, deltas.len().saturating_sub(1))
}

/// Renewal arrivals over the whole trace, with `N(T)` evaluated at
/// `stop_time`.
pub fn measure_interarrivals_until(deltas: &[f64], delta_eps: f64, stop_time: usize) -> RenewalTrace {
    if deltas.is_empty() {
        return RenewalTrace::default();
    }
    let threshold = delta_eps * (1.0 - GRID_TOL);
    let mut arrival_times = vec![0];
    arrival_times.extend(
        deltas
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &d)| d >= threshold)
            .map(|(m, _)| m),
    );
    let interarrivals = arrival_times.windows(2).map(|w| w[1] - w[0]).collect();
    let count_at_stop = arrival_times.iter().filter(|&&a| a <= stop_time).count() - 1;
    RenewalTrace {
        arrival_times,
        interarrivals,
        count_at_stop,
        stop_time,
    }
}

/// Interarrival statistics, split by the radius level at which each gap
/// starts.
///
/// A gap starting strictly above `delta_eps` always has length one; a gap
/// starting at `delta_eps` is a return time of the walk. Both conditionings
/// are reported separately.
#[derive(Debug, Clone, PartialEq)]
pub struct InterarrivalStats {
    pub all: Option<Summary>,
    pub from_threshold: Option<Summary>,
    pub from_above: Option<Summary>,
    /// Only the first gap can start below the threshold (when `Delta_0 < delta_eps`).
    pub from_below: Option<Summary>,
    /// `p / (2p - 1)` when `p > 1/2`.
    pub bound: Option<f64>,
    pub lag1_autocorrelation: Option<f64>,
}

impl InterarrivalStats {
    /// Whether the overall mean is within `z` standard errors of the bound.
    pub fn within_bound(&self, z: f64) -> Option<bool> {
        let all = self.all?;
        Some(all.mean <= self.bound? + z * all.se)
    }
}

pub fn interarrival_stats(
    deltas: &[f64],
    renewal: &RenewalTrace,
    delta_eps: f64,
    p: f64,
) -> InterarrivalStats {
    let mut threshold = Vec::new();
    let mut above = Vec::new();
    let mut below = Vec::new();
    for (start, &tau) in renewal.arrival_times.iter().zip(&renewal.interarrivals) {
        let level = deltas[*start];
        let tau = tau as f64;
        if (level - delta_eps).abs() <= GRID_TOL * delta_eps {
            threshold.push(tau);
        } else if level > delta_eps {
            above.push(tau);
        } else {
            below.push(tau);
        }
    }
    let all: Vec<f64> = renewal.interarrivals.iter().map(|&t| t as f64).collect();
    InterarrivalStats {
        all: Summary::of(&all),
        from_threshold: Summary::of(&threshold),
        from_above: Summary::of(&above),
        from_below: Summary::of(&below),
        bound: theoretical_interarrival_bound(p).ok(),
        lag1_autocorrelation: lag1_autocorrelation(&all),
    }
}
