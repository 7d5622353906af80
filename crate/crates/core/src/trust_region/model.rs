use super::StormError;
use crate::{Matrix, Vector};

/// `m(center + s) = value + g^T s + 1/2 s^T H s`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub center: Vector,
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

impl QuadraticModel {
    /// Checks dimensions and symmetry of `hessian` (relative `1e-10`).
    pub fn new(center: Vector, value: f64, gradient: Vector, hessian: Matrix) -> Result<Self, StormError> {
        let n = center.len();
        if gradient.len() != n || hessian.nrows() != n || hessian.ncols() != n {
            return Err(StormError::InvalidConfig(format!(
                "model dimensions disagree: center {n}, gradient {}, hessian {}x{}",
                gradient.len(),
                hessian.nrows(),
                hessian.ncols()
            )));
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-10 * hessian.amax().max(1.0) {
            return Err(StormError::InvalidConfig(format!(
                "model Hessian is not symmetric ({asym:e})"
            )));
        }
        Ok(QuadraticModel {
            center,
            value,
            gradient,
            hessian,
        })
    }

    /// Linear model with `H = 0`.
    pub fn first_order(center: Vector, value: f64, gradient: Vector) -> Self {
        let n = center.len();
        QuadraticModel {
            center,
            value,
            gradient,
            hessian: Matrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Model value at `center + step`.
    pub fn eval_step(&self, step: &Vector) -> f64 {
        self.value + self.gradient.dot(step) + 0.5 * step.dot(&(&self.hessian * step))
    }

    /// Model value at the point `y`.
    pub fn eval_at(&self, y: &Vector) -> f64 {
        self.eval_step(&(y - &self.center))
    }

    /// Spectral norm of the Hessian.
    pub fn hessian_norm(&self) -> f64 {
        if self.hessian.iter().all(|v| *v == 0.0) {
            return 0.0;
        }
        let sym = (&self.hessian + self.hessian.transpose()) * 0.5;
        sym.symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.gradient.iter().all(|v| v.is_finite())
            && self.hessian.iter().all(|v| v.is_finite())
    }
}

/// Cauchy point and the decrease it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStep {
    pub step: Vector,
    /// `m(0) - m(step)`, never negative.
    pub model_decrease: f64,
}

/// Minimizer of the model along `-g` inside the ball of the given radius.
///
/// With `c = g^T H g`, the unconstrained minimizer along `-g` is at
/// `t = |g|^2 / c` when `c > 0`; otherwise the boundary `t = radius / |g|`
/// is taken.
pub fn cauchy_step(model: &QuadraticModel, radius: f64) -> Result<TrialStep, StormError> {
    if !model.is_finite() {
        return Err(StormError::Numeric("non-finite model coefficients".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(StormError::Numeric(format!("trust-region radius {radius}")));
    }
    let g = &model.gradient;
    let gg = g.norm_squared();
    if gg == 0.0 {
        return Ok(TrialStep {
            step: Vector::zeros(model.dim()),
            model_decrease: 0.0,
        });
    }
    let gn = gg.sqrt();
    let curvature = g.dot(&(&model.hessian * g));
    let t_boundary = radius / gn;
    let t = if curvature > 0.0 {
        (gg / curvature).min(t_boundary)
    } else {
        t_boundary
    };
    let mut step = g * (-t);
    let len = step.norm();
    if len > radius {
        step *= radius / len;
    }
    let model_decrease = (t * gg - 0.5 * t * t * curvature).max(0.0);
    Ok(TrialStep { step, model_decrease })
}

/// `(kappa_fcd / 2) |g| min(|g| / |H|, radius)`, reading the minimum as
/// `radius` when `H = 0`.
pub fn cauchy_decrease_bound(model: &QuadraticModel, radius: f64, kappa_fcd: f64) -> f64 {
    let gn = model.gradient.norm();
    let hn = model.hessian_norm();
    let reach = if hn == 0.0 { radius } else { (gn / hn).min(radius) };
    0.5 * kappa_fcd * gn * reach
}

/// Relative slack for comparisons of analytically equal quantities.
pub const DECREASE_RTOL: f64 = 1e-10;

pub fn satisfies_cauchy_decrease(decrease: f64, bound: f64) -> bool {
    decrease >= bound - DECREASE_RTOL * bound.abs()
}

/// Acceptance ratio; `-inf` when the model predicts no decrease, which
/// forces rejection.
pub fn rho_ratio(f0_est: f64, fs_est: f64, model_decrease: f64) -> Result<f64, StormError> {
    if !(f0_est.is_finite() && fs_est.is_finite()) {
        return Err(StormError::Numeric(format!(
            "non-finite estimates ({f0_est}, {fs_est})"
        )));
    }
    if !(model_decrease >= 0.0 && model_decrease.is_finite()) {
        return Err(StormError::Numeric(format!("model decrease {model_decrease}")));
    }
    if model_decrease == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((f0_est - fs_est) / model_decrease)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model(g: &[f64], h: &[f64]) -> QuadraticModel {
        let n = g.len();
        QuadraticModel::new(
            Vector::zeros(n),
            0.0,
            Vector::from_column_slice(g),
            Matrix::from_row_slice(n, n, h),
        )
        .unwrap()
    }

    /// Best decrease along `-g` on a fine grid of `t`.
    fn brute_force(m: &QuadraticModel, radius: f64) -> f64 {
        let gn = m.gradient.norm();
        let tmax = radius / gn;
        (0..=100_000)
            .map(|i| {
                let s = &m.gradient * (-tmax * i as f64 / 100_000.0);
                m.value - m.eval_step(&s)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn zero_gradient_gives_zero_step() {
        let t = cauchy_step(&model(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]), 1.0).unwrap();
        assert_eq!(t.step, Vector::zeros(2));
        assert_eq!(t.model_decrease, 0.0);
    }

    #[test]
    fn positive_curvature_interior_minimizer() {
        let m = model(&[1.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        let t = cauchy_step(&m, 2.0).unwrap();
        assert_eq!(t.step.as_slice(), &[-1.0, 0.0]);
        assert_eq!(t.model_decrease, 0.5);
        assert_eq!(cauchy_decrease_bound(&m, 2.0, 0.5), 0.25);
        assert_relative_eq!(brute_force(&m, 2.0), 0.5, max_relative = 1e-9);
    }

    #[test]
    fn negative_curvature_goes_to_the_boundary() {
        let m = model(&[1.0, 0.0], &[-1.0, 0.0, 0.0, -1.0]);
        let t = cauchy_step(&m, 1.0).unwrap();
        assert_eq!(t.step.as_slice(), &[-1.0, 0.0]);
        assert_eq!(t.model_decrease, 1.5);
        assert_relative_eq!(brute_force(&m, 1.0), 1.5, max_relative = 1e-12);
    }

    #[test]
    fn non_finite_model_is_rejected() {
        let m = model(&[f64::NAN, 0.0], &[0.0; 4]);
        assert!(matches!(cauchy_step(&m, 1.0), Err(StormError::Numeric(_))));
    }

    #[test]
    fn asymmetric_hessian_is_rejected() {
        let r = QuadraticModel::new(
            Vector::zeros(2),
            0.0,
            Vector::zeros(2),
            Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
        );
        assert!(r.is_err());
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho_ratio(1.5, 1.0, 0.5).unwrap(), 1.0);
        assert_eq!(rho_ratio(1.0, 1.0, 0.5).unwrap(), 0.0);
        assert_eq!(rho_ratio(1.0, 0.0, 0.0).unwrap(), f64::NEG_INFINITY);
        assert!(rho_ratio(f64::INFINITY, 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn cauchy_step_satisfies_the_decrease_condition(
            g in proptest::collection::vec(-10.0f64..10.0, 3),
            a in proptest::collection::vec(-5.0f64..5.0, 9),
            radius in 1e-4f64..10.0,
        ) {
            let h = Matrix::from_row_slice(3, 3, &a);
            let h = (&h + h.transpose()) * 0.5;
            let m = QuadraticModel::new(Vector::zeros(3), 0.0, Vector::from_vec(g), h).unwrap();
            let t = cauchy_step(&m, radius).unwrap();
            prop_assert!(t.step.norm() <= radius * (1.0 + 1e-15));
            prop_assert!(t.model_decrease >= 0.0);
            let actual = m.value - m.eval_step(&t.step);
            prop_assert!((actual - t.model_decrease).abs() <= 1e-9 * t.model_decrease.abs().max(1e-12));
            // The Cauchy point itself meets the condition with kappa_fcd = 1.
            prop_assert!(satisfies_cauchy_decrease(t.model_decrease, cauchy_decrease_bound(&m, radius, 1.0)));
        }
    }
}
