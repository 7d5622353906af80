use super::{StormConfig, StormError};
use crate::renewal::{theoretical_stop_bound, DriftSpec};

/// Weight `nu` of the potential `Phi = nu f + (1 - nu) delta^2` and the
/// gradient-to-radius ratio `zeta` that defines `Delta_eps = eps / zeta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub nu: f64,
    pub zeta: f64,
}

impl PotentialSpec {
    /// `nu = 320 / (320 + eta2)`, the smallest weight the simplified
    /// constants allow, and `zeta = 20 kappa_eg`.
    pub fn for_config(config: &StormConfig) -> Self {
        PotentialSpec {
            nu: 320.0 / (320.0 + config.eta2),
            zeta: 20.0 * config.kappa_eg,
        }
    }

    /// Checks `nu / (1 - nu) >= max{4 gamma^2 / (zeta C1), 4 gamma^2 /
    /// (eta1 eta2 kappa_fcd), gamma^2 / kappa_ef}` and
    /// `zeta >= kappa_eg + max{eta2, kappa_bhm, 8 kappa_ef / (kappa_fcd (1 - eta1))}`.
    ///
    /// The first inequality is checked non-strictly so that the default
    /// (equality) weight passes.
    pub fn validate(&self, config: &StormConfig, c1: f64) -> Result<(), StormError> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(StormError::InvalidConfig(format!(
                "nu = {} must lie in (0, 1)",
                self.nu
            )));
        }
        let g2 = config.gamma * config.gamma;
        let need = (4.0 * g2 / (self.zeta * c1))
            .max(4.0 * g2 / (config.eta1 * config.eta2 * config.kappa_fcd))
            .max(g2 / config.kappa_ef);
        let ratio = self.nu / (1.0 - self.nu);
        if ratio < need * (1.0 - 1e-12) {
            return Err(StormError::InvalidConfig(format!(
                "nu / (1 - nu) = {ratio} is below {need}"
            )));
        }
        let zeta_min = config.kappa_eg
            + config
                .eta2
                .max(config.kappa_bhm)
                .max(8.0 * config.kappa_ef / (config.kappa_fcd * (1.0 - config.eta1)));
        if self.zeta < zeta_min {
            return Err(StormError::InvalidConfig(format!(
                "zeta = {} is below {zeta_min}",
                self.zeta
            )));
        }
        Ok(())
    }

    pub fn delta_eps(&self, epsilon: f64) -> f64 {
        epsilon / self.zeta
    }
}

/// `nu f + (1 - nu) delta^2`.
pub fn potential_value(f_true: f64, delta: f64, potential: &PotentialSpec) -> Result<f64, StormError> {
    if !(f_true >= 0.0) {
        return Err(StormError::Domain(format!("f = {f_true} must be nonnegative")));
    }
    if !(delta >= 0.0) {
        return Err(StormError::Domain(format!("delta = {delta} must be nonnegative")));
    }
    Ok(potential.nu * f_true + (1.0 - potential.nu) * delta * delta)
}

/// Constants of the expected-decrease argument in the simplified regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConstants {
    /// `E[V_k] <= -theta Delta_k^2`.
    pub theta: f64,
    pub zeta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Smallest admissible `beta`.
    pub beta_min: f64,
    /// Right side of `(alpha beta - 1/2) / ((1 - alpha)(1 - beta)) >= .`.
    pub ab_threshold: f64,
    pub lipschitz: f64,
}

impl DriftConstants {
    pub fn ab_ratio(alpha: f64, beta: f64) -> f64 {
        let num = alpha * beta - 0.5;
        let den = (1.0 - alpha) * (1.0 - beta);
        if den == 0.0 {
            if num > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        } else {
            num / den
        }
    }

    /// Whether `(alpha, beta)` satisfy both probability conditions.
    pub fn feasible(&self, alpha: f64, beta: f64) -> bool {
        alpha > 0.0
            && alpha <= 1.0
            && beta <= 1.0
            && alpha * beta > 0.5
            && beta >= self.beta_min
            && Self::ab_ratio(alpha, beta) >= self.ab_threshold
    }

    /// Smallest `alpha` meeting the product condition for this `beta`.
    pub fn alpha_min(&self, beta: f64) -> f64 {
        let t = self.ab_threshold * (1.0 - beta);
        (0.5 + t) / (beta + t)
    }
}

/// Drift constants for `config` and a Lipschitz constant `lipschitz` of the
/// gradient. Requires the simplified regime.
pub fn drift_constants(config: &StormConfig, lipschitz: f64) -> Result<DriftConstants, StormError> {
    let violated = config.regime_violations();
    if !violated.is_empty() {
        return Err(StormError::InvalidConfig(format!(
            "simplified constant regime requires {}",
            violated.join(", ")
        )));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(StormError::InvalidConfig(format!(
            "Lipschitz constant {lipschitz}"
        )));
    }
    let k = config.kappa_eg;
    let zeta = 20.0 * k;
    let c2 = 0.5 * config.eta1 * config.eta2 * config.kappa_fcd * (config.eta2 / config.kappa_bhm).min(1.0)
        - 2.0 * config.eps_f;
    let base = 8800.0 * k + lipschitz;
    Ok(DriftConstants {
        theta: 1.0 / (1600.0 * k),
        zeta,
        c1: 0.1,
        c2,
        c3: 1.0 + 3.0 * lipschitz / (2.0 * zeta),
        beta_min: (base + 8.0 * config.eta2) / (base + 9.0 * config.eta2),
        ab_threshold: 10.0 + 30.0 * lipschitz / (40.0 * k),
        lipschitz,
    })
}

fn check_product(alpha: f64, beta: f64) -> Result<f64, StormError> {
    let p = alpha * beta;
    if !(p > 0.5 && p <= 1.0) {
        return Err(StormError::Domain(format!(
            "alpha * beta = {p} must lie in (1/2, 1]"
        )));
    }
    Ok(p)
}

/// `(ab / (2ab - 1)) (20 Phi0 kappa_eg / (theta eps^2) + 20 delta0 kappa_eg / eps + 1)`
/// with `theta = 1 / (1600 kappa_ef)`, taken literally (the squares on
/// `kappa_eg` are not restored; see [`renewal_route_bound`]).
pub fn complexity_bound(
    alpha: f64,
    beta: f64,
    phi0: f64,
    kappa_ef: f64,
    kappa_eg: f64,
    delta0: f64,
    epsilon: f64,
) -> Result<f64, StormError> {
    let p = check_product(alpha, beta)?;
    let theta = 1.0 / (1600.0 * kappa_ef);
    Ok(p / (2.0 * p - 1.0)
        * (20.0 * phi0 * kappa_eg / (theta * epsilon * epsilon) + 20.0 * delta0 * kappa_eg / epsilon + 1.0))
}

/// The stopping-time bound obtained by feeding `p = alpha beta`,
/// `h(delta) = delta^2`, `theta = 1 / (1600 kappa)` and
/// `Delta_eps = eps / (20 kappa)` to the renewal-process bound.
///
/// This keeps the squares of `Delta_eps` that the closed form in
/// [`complexity_bound`] drops, so it is the larger of the two.
pub fn renewal_route_bound(
    alpha: f64,
    beta: f64,
    phi0: f64,
    kappa: f64,
    delta0: f64,
    epsilon: f64,
) -> Result<f64, StormError> {
    let p = check_product(alpha, beta)?;
    let theta = 1.0 / (1600.0 * kappa);
    let drift = DriftSpec::power(theta, 2, phi0, f64::INFINITY);
    theoretical_stop_bound(p, &drift, epsilon / (20.0 * kappa), delta0)
        .map_err(|e| StormError::Domain(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn regime() -> StormConfig {
        StormConfig {
            simplified_regime: true,
            eps_f: 0.0,
            ..StormConfig::default()
        }
    }

    #[test]
    fn potential_examples() {
        let p = PotentialSpec { nu: 0.5, zeta: 200.0 };
        assert_eq!(potential_value(2.0, 1.0, &p).unwrap(), 1.5);
        assert_eq!(potential_value(0.0, 0.0, &p).unwrap(), 0.0);
        assert!(matches!(
            potential_value(-1.0, 1.0, &p),
            Err(StormError::Domain(_))
        ));

        let d = PotentialSpec::for_config(&StormConfig::default());
        assert_relative_eq!(d.nu, 0.999_843_774_4, max_relative = 1e-9);
        assert_eq!(d.zeta, 200.0);
        d.validate(&StormConfig::default(), 0.1).unwrap();
        assert!(PotentialSpec {
            nu: 0.99,
            zeta: 200.0
        }
        .validate(&StormConfig::default(), 0.1)
        .is_err());
    }

    #[test]
    fn drift_constant_examples() {
        let c = drift_constants(&regime(), 10.0).unwrap();
        assert_eq!(c.theta, 1.0 / 16000.0);
        assert_eq!(c.zeta, 200.0);
        assert_eq!(c.c1, 0.1);
        assert_relative_eq!(c.c2, 6.25e-5, max_relative = 1e-12);
        assert_eq!(c.ab_threshold, 10.75);
        assert_relative_eq!(c.c3, 1.075, max_relative = 1e-12);
        assert_relative_eq!(
            c.beta_min,
            (88_010.0 + 0.4) / (88_010.0 + 0.45),
            max_relative = 1e-15
        );
    }

    #[test]
    fn feasibility_predicate() {
        let c = drift_constants(&regime(), 10.0).unwrap();
        assert!(c.feasible(0.9, 1.0 - 1e-7));
        assert!(c.feasible(1.0, 1.0));
        assert!(!c.feasible(0.9, 0.99));
        assert!(!c.feasible(0.5, 1.0));
        let beta = 1.0 - 1e-7;
        let a = c.alpha_min(beta);
        assert_relative_eq!(
            DriftConstants::ab_ratio(a, beta),
            c.ab_threshold,
            max_relative = 1e-6
        );
    }

    #[test]
    fn regime_violation_is_reported() {
        let cfg = StormConfig {
            eta2: 0.02,
            ..regime()
        };
        let err = drift_constants(&cfg, 10.0).unwrap_err().to_string();
        assert!(err.contains("eta2 > 0.03"), "{err}");
    }

    #[test]
    fn complexity_bound_examples() {
        // exact oracle
        let b = complexity_bound(1.0, 1.0, 2.0, 10.0, 10.0, 1.0, 0.1).unwrap();
        assert_relative_eq!(b, 20.0 * 2.0 * 10.0 * 16000.0 / 0.01 + 20.0 * 10.0 / 0.1 + 1.0);
        let ratio = complexity_bound(0.9, 0.9, 1.0, 10.0, 10.0, 1.0, 1e-6).unwrap()
            / complexity_bound(0.9, 0.9, 1.0, 10.0, 10.0, 1.0, 2e-6).unwrap();
        assert_relative_eq!(ratio, 4.0, max_relative = 1e-3);
        let trivial = complexity_bound(0.8, 0.9, 0.0, 10.0, 10.0, 0.0, 1e6).unwrap();
        assert!(trivial >= 1.0);
        assert!(complexity_bound(0.7, 0.7, 1.0, 10.0, 10.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn renewal_route_bound_dominates() {
        for eps in [0.1, 0.01, 0.001] {
            let closed = complexity_bound(0.9, 0.99, 3.0, 10.0, 10.0, 0.5, eps).unwrap();
            let renewal = renewal_route_bound(0.9, 0.99, 3.0, 10.0, 0.5, eps).unwrap();
            assert!(renewal >= closed);
        }
    }
}
