use super::{AccuracyTargets, OracleError};
use crate::problems::Referee;
use crate::trust_region::QuadraticModel;
use crate::Vector;

/// Number of low-discrepancy ball points used for the value condition.
pub const BALL_SAMPLE_POINTS: usize = 16;

/// Outcome of checking one iteration's model and estimates against a referee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventFlags {
    /// Model is fully linear on the ball (gradient and sampled values).
    pub model_good: bool,
    /// Both estimates are within `eps_f * delta^2`.
    pub estimates_good: bool,
    /// `|g - grad f(x)|`.
    pub gradient_error: f64,
    /// Largest `|m(y) - f(y)|` over the checked points.
    pub value_error: f64,
    /// The value condition holds on the whole ball by the Taylor bound
    /// `|f(x) - m(x)| + |g - grad f| delta + (L + |H|) delta^2 / 2`.
    pub analytic_certificate: bool,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut scale = inv;
    while i > 0 {
        out += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    out
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().all(|p| !c.is_multiple_of(*p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// Fixed points of the closed unit ball in `dim` dimensions, built from a
/// Halton sequence: direction from bases 3, 5, 7, ... and radius from base 2.
/// Every fourth point is pushed to the sphere, where the Taylor remainder
/// is largest.
pub fn ball_sample_points(dim: usize) -> Vec<Vector> {
    let bases = primes(dim + 1);
    (1..=BALL_SAMPLE_POINTS as u64)
        .map(|i| {
            let mut dir = Vector::from_fn(dim, |j, _| 2.0 * radical_inverse(i, bases[j + 1]) - 1.0);
            let norm = dir.norm();
            if norm < 1e-12 {
                dir = Vector::zeros(dim);
                dir[0] = 1.0;
            } else {
                dir /= norm;
            }
            let r = if i % 4 == 0 {
                1.0
            } else {
                radical_inverse(i, 2).powf(1.0 / dim as f64)
            };
            dir * r
        })
        .collect()
}

/// Decides the accuracy events for one iteration with exact information.
///
/// The gradient condition is exact. The value condition is checked at the
/// center, the trial point `x + step` and the fixed ball sample scaled to
/// `radius`.
pub fn classify_events(
    model: &QuadraticModel,
    step: &Vector,
    estimates: (f64, f64),
    radius: f64,
    targets: &AccuracyTargets,
    referee: Option<&dyn Referee>,
) -> Result<EventFlags, OracleError> {
    let referee = referee.ok_or(OracleError::Capability("classify events without a referee"))?;
    let x = &model.center;
    let d2 = radius * radius;

    let gradient_error = (&model.gradient - referee.gradient(x)).norm();
    let f_x = referee.value(x);
    let x_plus_s = x + step;
    let f_s = referee.value(&x_plus_s);

    let mut value_error = (model.value - f_x)
        .abs()
        .max((model.eval_at(&x_plus_s) - f_s).abs());
    for u in ball_sample_points(x.len()) {
        let y = x + u * radius;
        value_error = value_error.max((model.eval_at(&y) - referee.value(&y)).abs());
    }

    let model_good = gradient_error <= targets.kappa_eg * radius && value_error <= targets.kappa_ef * d2;
    let certificate = (model.value - f_x).abs()
        + gradient_error * radius
        + 0.5 * (referee.lipschitz() + model.hessian_norm()) * d2;
    let estimates_good =
        (estimates.0 - f_x).abs() <= targets.eps_f * d2 && (estimates.1 - f_s).abs() <= targets.eps_f * d2;

    Ok(EventFlags {
        model_good,
        estimates_good,
        gradient_error,
        value_error,
        analytic_certificate: gradient_error <= targets.kappa_eg * radius
            && certificate <= targets.kappa_ef * d2,
    })
}
