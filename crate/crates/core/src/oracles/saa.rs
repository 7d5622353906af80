use super::{
    gradient_sample_size, value_sample_size, AccuracyTargets, OracleError, SampleRule, StochasticOracle,
};
use crate::rng::StreamRng;
use crate::trust_region::QuadraticModel;
use crate::{Matrix, Vector};

/// How sample averages are sized.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SaaSettings {
    pub rule: SampleRule,
    /// Largest sample count a single query may request.
    pub budget_cap: Option<u128>,
}

impl SaaSettings {
    fn check_budget(&self, required: u128) -> Result<u128, OracleError> {
        match self.budget_cap {
            Some(cap) if required > cap => Err(OracleError::Budget { required, cap }),
            _ => Ok(required),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaaModel {
    pub model: QuadraticModel,
    pub value_samples: u128,
    pub gradient_samples: u128,
}

/// Function-value estimates at the current point and the trial point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimates {
    pub f0: f64,
    pub fs: f64,
    /// Samples drawn at each of the two points.
    pub samples_per_point: u128,
}

/// First-order sample-average model on `B(center, radius)`.
///
/// The model failure probability `1 - alpha` is split evenly between the
/// gradient condition and the center value. The gradient tolerance is
/// `min(kappa_eg, kappa_ef / 2) * radius`, so the gradient error contributes
/// at most `kappa_ef radius^2 / 2` to the value error anywhere in the ball;
/// the center value gets the other half, `kappa_ef radius^2 / 2`. The Hessian
/// is zero.
pub fn build_saa_model(
    oracle: &dyn StochasticOracle,
    center: &Vector,
    radius: f64,
    targets: &AccuracyTargets,
    settings: &SaaSettings,
    rng: &mut StreamRng,
) -> Result<SaaModel, OracleError> {
    if !oracle.has_gradient() {
        return Err(OracleError::Capability("sample gradients"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(OracleError::Infeasible(format!("radius {radius}")));
    }
    let fail = (1.0 - targets.alpha) / 2.0;
    let grad_tol = targets.kappa_eg.min(0.5 * targets.kappa_ef) * radius;
    let value_tol = 0.5 * targets.kappa_ef * radius * radius;
    let n_grad = settings.check_budget(gradient_sample_size(
        settings.rule,
        oracle.gradient_variance_bound(),
        fail,
        grad_tol,
    )?)?;
    let n_value = settings.check_budget(value_sample_size(
        settings.rule,
        oracle.value_variance_bound(),
        fail,
        value_tol,
    )?)?;
    let gradient = oracle
        .mean_gradient(center, n_grad, rng)
        .ok_or(OracleError::Capability("sample gradients"))?;
    let value = oracle.mean_value(center, n_value, rng);
    Ok(SaaModel {
        model: QuadraticModel::first_order(center.clone(), value, gradient),
        value_samples: n_value,
        gradient_samples: n_grad,
    })
}

/// As [`build_saa_model`], plus a Hessian averaged over `hessian_samples`
/// draws, symmetrized and scaled down so its spectral norm is at most
/// `kappa_bhm`.
#[allow(clippy::too_many_arguments)]
pub fn build_saa_model_with_hessian(
    oracle: &dyn StochasticOracle,
    center: &Vector,
    radius: f64,
    targets: &AccuracyTargets,
    settings: &SaaSettings,
    hessian_samples: usize,
    kappa_bhm: f64,
    rng: &mut StreamRng,
) -> Result<SaaModel, OracleError> {
    let mut built = build_saa_model(oracle, center, radius, targets, settings, rng)?;
    let n = oracle.dim();
    let mut sum = Matrix::zeros(n, n);
    for _ in 0..hessian_samples.max(1) {
        sum += oracle
            .sample_hessian(center, rng)
            .ok_or(OracleError::Capability("sample Hessians"))?;
    }
    let mean = sum / hessian_samples.max(1) as f64;
    let mut hessian = (&mean + mean.transpose()) * 0.5;
    let norm = spectral_norm(&hessian);
    if norm > kappa_bhm {
        hessian *= kappa_bhm / norm;
    }
    built.model = QuadraticModel::new(center.clone(), built.model.value, built.model.gradient, hessian)
        .map_err(|e| OracleError::Infeasible(e.to_string()))?;
    Ok(built)
}

fn spectral_norm(sym: &Matrix) -> f64 {
    sym.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Estimates of `f(x)` and `f(x + s)`, each within `eps_f * radius^2` with
/// probability at least `1 - (1 - beta) / 2`, so both hold jointly with
/// probability at least `beta`.
pub fn build_estimates(
    oracle: &dyn StochasticOracle,
    x: &Vector,
    x_plus_s: &Vector,
    radius: f64,
    targets: &AccuracyTargets,
    settings: &SaaSettings,
    rng: &mut StreamRng,
) -> Result<Estimates, OracleError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(OracleError::Infeasible(format!("radius {radius}")));
    }
    let variance = oracle.value_variance_bound();
    if variance > 0.0 && targets.eps_f == 0.0 {
        return Err(OracleError::Infeasible(
            "eps_f = 0 requires a noiseless oracle".into(),
        ));
    }
    let fail = (1.0 - targets.beta) / 2.0;
    let n = settings.check_budget(value_sample_size(
        settings.rule,
        variance,
        fail,
        targets.eps_f * radius * radius,
    )?)?;
    let f0 = oracle.mean_value(x, n, rng);
    let fs = oracle.mean_value(x_plus_s, n, rng);
    Ok(Estimates {
        f0,
        fs,
        samples_per_point: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::SamplerOracle;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn targets(alpha: f64, beta: f64) -> AccuracyTargets {
        AccuracyTargets {
            alpha,
            beta,
            kappa_ef: 10.0,
            kappa_eg: 10.0,
            eps_f: 0.00125,
        }
    }

    // f(x) = 1/2 |x|^2 with optional Gaussian noise
    fn oracle(sigma: f64) -> SamplerOracle {
        SamplerOracle::new(
            2,
            move |x: &Vector, rng: &mut StreamRng| {
                let z: f64 = StandardNormal.sample(rng);
                0.5 * x.norm_squared() + sigma * z
            },
            sigma * sigma,
        )
        .with_gradient(
            move |x: &Vector, rng: &mut StreamRng| {
                x + Vector::from_fn(2, |_, _| {
                    sigma * Distribution::<f64>::sample(&StandardNormal, rng)
                })
            },
            2.0 * sigma * sigma,
        )
    }

    #[test]
    fn noiseless_model_is_exact_with_one_sample() {
        let x = Vector::from_vec(vec![1.0, -2.0]);
        let built = build_saa_model(
            &oracle(0.0),
            &x,
            0.1,
            &targets(0.9, 0.9),
            &SaaSettings::default(),
            &mut stream_rng(0, 0),
        )
        .unwrap();
        assert_eq!(built.gradient_samples, 1);
        assert_eq!(built.value_samples, 1);
        assert_eq!(built.model.gradient, x);
        assert_eq!(built.model.value, 2.5);
        assert_eq!(built.model.hessian_norm(), 0.0);
    }

    #[test]
    fn gradient_sample_count_is_at_least_the_plain_rule() {
        // trace bound 1, alpha 0.9, kappa_eg 10, delta 0.1 -> plain rule gives 10
        let o = SamplerOracle::new(2, |_: &Vector, _: &mut StreamRng| 0.0, 0.0)
            .with_gradient(|x: &Vector, _: &mut StreamRng| x.clone(), 1.0);
        let built = build_saa_model(
            &o,
            &Vector::zeros(2),
            0.1,
            &targets(0.9, 0.9),
            &SaaSettings::default(),
            &mut stream_rng(0, 0),
        )
        .unwrap();
        assert!(built.gradient_samples >= 10);
    }

    #[test]
    fn missing_gradient_is_a_capability_error() {
        let o = SamplerOracle::new(2, |_: &Vector, _: &mut StreamRng| 0.0, 0.0);
        let err = build_saa_model(
            &o,
            &Vector::zeros(2),
            1.0,
            &targets(0.9, 0.9),
            &SaaSettings::default(),
            &mut stream_rng(0, 0),
        )
        .unwrap_err();
        assert_eq!(err, OracleError::Capability("sample gradients"));
    }

    #[test]
    fn budget_cap_reports_required_count() {
        let settings = SaaSettings {
            budget_cap: Some(1000),
            ..SaaSettings::default()
        };
        let x = Vector::zeros(2);
        let err = build_estimates(
            &oracle(1.0),
            &x,
            &x,
            0.5,
            &targets(0.9, 0.98),
            &settings,
            &mut stream_rng(0, 0),
        )
        .unwrap_err();
        match err {
            OracleError::Budget { required, cap } => {
                assert_eq!(cap, 1000);
                assert_eq!(required, 1_024_000_000);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_eps_f_needs_noiseless_oracle() {
        let t = AccuracyTargets {
            eps_f: 0.0,
            ..targets(0.9, 0.9)
        };
        let x = Vector::zeros(2);
        let noisy = build_estimates(
            &oracle(0.1),
            &x,
            &x,
            1.0,
            &t,
            &SaaSettings::default(),
            &mut stream_rng(0, 0),
        );
        assert!(matches!(noisy, Err(OracleError::Infeasible(_))));
        let exact = build_estimates(
            &oracle(0.0),
            &x,
            &x,
            1.0,
            &t,
            &SaaSettings::default(),
            &mut stream_rng(0, 0),
        )
        .unwrap();
        assert_eq!((exact.f0, exact.fs, exact.samples_per_point), (0.0, 0.0, 1));
    }

    #[test]
    fn hessian_builder_caps_the_norm() {
        let o = oracle(0.0);
        struct WithHessian(SamplerOracle);
        impl StochasticOracle for WithHessian {
            fn dim(&self) -> usize {
                2
            }
            fn sample_value(&self, x: &Vector, rng: &mut StreamRng) -> f64 {
                self.0.sample_value(x, rng)
            }
            fn sample_gradient(&self, x: &Vector, rng: &mut StreamRng) -> Option<Vector> {
                self.0.sample_gradient(x, rng)
            }
            fn sample_hessian(&self, _: &Vector, _: &mut StreamRng) -> Option<Matrix> {
                Some(Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]))
            }
            fn value_variance_bound(&self) -> f64 {
                0.0
            }
            fn gradient_variance_bound(&self) -> f64 {
                0.0
            }
            fn has_gradient(&self) -> bool {
                true
            }
        }
        let built = build_saa_model_with_hessian(
            &WithHessian(o.clone()),
            &Vector::zeros(2),
            1.0,
            &targets(0.9, 0.9),
            &SaaSettings::default(),
            3,
            2.0,
            &mut stream_rng(0, 0),
        )
        .unwrap();
        assert!((built.model.hessian_norm() - 2.0).abs() < 1e-12);
        let err = build_saa_model_with_hessian(
            &o,
            &Vector::zeros(2),
            1.0,
            &targets(0.9, 0.9),
            &SaaSettings::default(),
            1,
            2.0,
            &mut stream_rng(0, 0),
        );
        assert_eq!(err.unwrap_err(), OracleError::Capability("sample Hessians"));
    }

    #[test]
    fn sample_mean_error_shrinks_like_inverse_sqrt_n() {
        let o = oracle(1.0);
        let x = Vector::from_vec(vec![0.3, 0.4]);
        let mut rng = stream_rng(17, 0);
        let mut log_n = Vec::new();
        let mut log_err = Vec::new();
        for n in [100u128, 10_000] {
            let reps = 200;
            let rms = (0..reps)
                .map(|_| (o.mean_gradient(&x, n, &mut rng).unwrap() - &x).norm_squared())
                .sum::<f64>()
                / reps as f64;
            log_n.push((n as f64).ln());
            log_err.push(0.5 * rms.ln());
        }
        let slope = (log_err[1] - log_err[0]) / (log_n[1] - log_n[0]);
        assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
    }
}
