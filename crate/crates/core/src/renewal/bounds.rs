use super::{DriftSpec, RenewalError};

/// Upper bound `p / (2p - 1)` on the expected renewal interarrival time.
pub fn theoretical_interarrival_bound(p: f64) -> Result<f64, RenewalError> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(RenewalError::Domain(format!(
            "interarrival bound needs 1/2 < p <= 1, got {p}"
        )));
    }
    Ok(p / (2.0 * p - 1.0))
}

/// Upper bound on `E[T]`:
///
/// `p/(2p-1) * (Phi_0 / (Theta h(delta_eps)) + h(delta0) / h(delta_eps) + 1)`.
///
/// The middle two terms bound the expected number of renewals before `T`;
/// the leading factor bounds each gap.
pub fn theoretical_stop_bound(
    p: f64,
    drift: &DriftSpec,
    delta_eps: f64,
    delta0: f64,
) -> Result<f64, RenewalError> {
    let per_gap = theoretical_interarrival_bound(p)?;
    let h_eps = (drift.h)(delta_eps);
    if !(h_eps > 0.0) {
        return Err(RenewalError::Domain(format!(
            "h(delta_eps) = {h_eps} must be positive"
        )));
    }
    let renewals = drift.phi0 / (drift.theta * h_eps) + (drift.h)(delta0) / h_eps;
    Ok(per_gap * (renewals + 1.0))
}
