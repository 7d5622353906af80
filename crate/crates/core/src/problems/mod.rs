//! Test problems with exact values, gradients and the constants (`L`,
//! `F_max`) the analysis needs. They serve as referees: they measure the
//! stopping time and decide whether a model or estimate was accurate.

mod logistic;

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::oracles::StochasticOracle;
use crate::rng::StreamRng;
use crate::{Matrix, Vector};

pub use logistic::{logistic_problem, make_finite_sum_logistic, LogisticData, MinibatchOracle};

/// Exact evaluator of `f` and its gradient.
pub trait Referee: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    /// Lipschitz constant of the gradient on the working box.
    fn lipschitz(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    /// `f(x) = 1/2 sum d_i x_i^2`.
    Quadratic { diag: Vec<f64> },
    /// `f(x, y) = 100 (y - x^2)^2 + (1 - x)^2`.
    Rosenbrock,
    /// Mean of ridge-regularized logistic losses, sampled by minibatch.
    Logistic { data: Arc<LogisticData>, batch: usize },
}

/// Additive Gaussian noise: value standard deviation `sigma`, per-component
/// gradient standard deviation `sigma_g`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub sigma_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestProblem {
    pub name: String,
    pub kind: ProblemKind,
    pub dim: usize,
    pub lipschitz: f64,
    pub f_max: f64,
    /// Per-coordinate `(lower, upper)` of the working box.
    pub domain_box: Vec<(f64, f64)>,
    pub x0: Vector,
    pub noise: NoiseSpec,
}

impl TestProblem {
    pub fn value(&self, x: &Vector) -> f64 {
        match &self.kind {
            ProblemKind::Quadratic { diag } => {
                0.5 * x.iter().zip(diag).map(|(xi, d)| d * xi * xi).sum::<f64>()
            }
            ProblemKind::Rosenbrock => {
                let (a, b) = (x[0], x[1]);
                100.0 * (b - a * a).powi(2) + (1.0 - a).powi(2)
            }
            ProblemKind::Logistic { data, .. } => data.value(x),
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match &self.kind {
            ProblemKind::Quadratic { diag } => {
                Vector::from_iterator(self.dim, x.iter().zip(diag).map(|(xi, d)| d * xi))
            }
            ProblemKind::Rosenbrock => {
                let (a, b) = (x[0], x[1]);
                let r = b - a * a;
                Vector::from_vec(vec![-400.0 * a * r - 2.0 * (1.0 - a), 200.0 * r])
            }
            ProblemKind::Logistic { data, .. } => data.gradient(x),
        }
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        match &self.kind {
            ProblemKind::Quadratic { diag } => Matrix::from_diagonal(&Vector::from_column_slice(diag)),
            ProblemKind::Rosenbrock => {
                let (a, b) = (x[0], x[1]);
                Matrix::from_row_slice(
                    2,
                    2,
                    &[1200.0 * a * a - 400.0 * b + 2.0, -400.0 * a, -400.0 * a, 200.0],
                )
            }
            ProblemKind::Logistic { data, .. } => data.hessian(x),
        }
    }

    pub fn in_box(&self, x: &Vector) -> bool {
        x.iter()
            .zip(&self.domain_box)
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Noisy oracle for this problem. Gaussian problems draw sample means
    /// exactly; the logistic problem samples minibatches.
    pub fn oracle(&self) -> Arc<dyn StochasticOracle> {
        match &self.kind {
            ProblemKind::Logistic { data, batch } => Arc::new(MinibatchOracle::new(data.clone(), *batch)),
            _ => Arc::new(GaussianOracle::new(self.clone())),
        }
    }
}

impl Referee for TestProblem {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector) -> f64 {
        TestProblem::value(self, x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        TestProblem::gradient(self, x)
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Unbiased oracle `f(x) + sigma z`, `grad f(x) + sigma_g z'`.
///
/// The mean of `n` draws is Gaussian with standard deviation `sigma /
/// sqrt(n)`, so averaged queries cost one draw regardless of `n`.
#[derive(Debug, Clone)]
pub struct GaussianOracle {
    pub problem: TestProblem,
}

impl GaussianOracle {
    pub fn new(problem: TestProblem) -> Self {
        GaussianOracle { problem }
    }

    fn value_draw(&self, x: &Vector, scale: f64, rng: &mut StreamRng) -> f64 {
        let f = self.problem.value(x);
        if scale == 0.0 {
            return f;
        }
        let z: f64 = StandardNormal.sample(rng);
        f + scale * z
    }

    fn gradient_draw(&self, x: &Vector, scale: f64, rng: &mut StreamRng) -> Vector {
        let g = self.problem.gradient(x);
        if scale == 0.0 {
            return g;
        }
        g + Vector::from_fn(self.problem.dim, |_, _| {
            scale * Distribution::<f64>::sample(&StandardNormal, rng)
        })
    }
}

impl StochasticOracle for GaussianOracle {
    fn dim(&self) -> usize {
        self.problem.dim
    }

    fn sample_value(&self, x: &Vector, rng: &mut StreamRng) -> f64 {
        self.value_draw(x, self.problem.noise.sigma, rng)
    }

    fn sample_gradient(&self, x: &Vector, rng: &mut StreamRng) -> Option<Vector> {
        Some(self.gradient_draw(x, self.problem.noise.sigma_g, rng))
    }

    fn sample_hessian(&self, x: &Vector, _rng: &mut StreamRng) -> Option<Matrix> {
        Some(self.problem.hessian(x))
    }

    fn value_variance_bound(&self) -> f64 {
        self.problem.noise.sigma.powi(2)
    }

    fn gradient_variance_bound(&self) -> f64 {
        self.problem.dim as f64 * self.problem.noise.sigma_g.powi(2)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn mean_value(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> f64 {
        self.value_draw(x, self.problem.noise.sigma / (n.max(1) as f64).sqrt(), rng)
    }

    fn mean_gradient(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> Option<Vector> {
        Some(self.gradient_draw(x, self.problem.noise.sigma_g / (n.max(1) as f64).sqrt(), rng))
    }
}

fn cube(dim: usize, half: f64) -> Vec<(f64, f64)> {
    vec![(-half, half); dim]
}

/// `f(x) = 1/2 x^T D x` with `D` log-spaced on `[1, condition_number]`,
/// box `[-2, 2]^dim` and start at the all-ones vector.
///
/// The spectrum is deterministic; `seed` is accepted for interface symmetry
/// with the other constructors and does not change the problem.
pub fn make_noisy_quadratic(
    dim: usize,
    condition_number: f64,
    sigma: f64,
    sigma_g: f64,
    _seed: u64,
) -> TestProblem {
    assert!(dim >= 1, "dimension must be positive");
    assert!(condition_number >= 1.0, "condition number must be at least 1");
    let diag: Vec<f64> = (0..dim)
        .map(|i| {
            if dim == 1 {
                1.0
            } else {
                condition_number.powf(i as f64 / (dim - 1) as f64)
            }
        })
        .collect();
    let f_max = 2.0 * diag.iter().sum::<f64>();
    TestProblem {
        name: "quadratic".into(),
        kind: ProblemKind::Quadratic { diag },
        dim,
        lipschitz: condition_number,
        f_max,
        domain_box: cube(dim, 2.0),
        x0: Vector::from_element(dim, 1.0),
        noise: NoiseSpec { sigma, sigma_g },
    }
}

/// Rosenbrock on `[-2, 2]^2` from the classical start `(-1.2, 1)`.
///
/// `L = 6402` bounds the Hessian on the box by Gershgorin:
/// `|1200 x^2 - 400 y + 2| + |400 x| <= 5602 + 800`.
pub fn make_noisy_rosenbrock(sigma: f64, sigma_g: f64, _seed: u64) -> TestProblem {
    TestProblem {
        name: "rosenbrock".into(),
        kind: ProblemKind::Rosenbrock,
        dim: 2,
        lipschitz: 6402.0,
        f_max: 3609.0,
        domain_box: cube(2, 2.0),
        x0: Vector::from_vec(vec![-1.2, 1.0]),
        noise: NoiseSpec { sigma, sigma_g },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_point(p: &TestProblem, rng: &mut StreamRng) -> Vector {
        Vector::from_iterator(
            p.dim,
            p.domain_box.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)),
        )
    }

    fn problems() -> Vec<TestProblem> {
        vec![
            make_noisy_quadratic(1, 1.0, 0.0, 0.0, 0),
            make_noisy_quadratic(5, 100.0, 0.1, 0.1, 0),
            make_noisy_rosenbrock(0.0, 0.0, 0),
            make_finite_sum_logistic(200, 4, 20, 5).0,
        ]
    }

    #[test]
    fn quadratic_examples() {
        let p = make_noisy_quadratic(1, 1.0, 0.0, 0.0, 0);
        assert_eq!(p.value(&Vector::from_vec(vec![2.0])), 2.0);
        assert_eq!(p.gradient(&Vector::from_vec(vec![2.0]))[0], 2.0);
        assert_eq!(p.lipschitz, 1.0);

        let p = make_noisy_quadratic(2, 10.0, 0.0, 0.0, 0);
        let g = p.gradient(&Vector::from_vec(vec![1.0, 1.0]));
        assert_eq!(g.as_slice(), &[1.0, 10.0]);
        assert_eq!(p.value(&Vector::zeros(2)), 0.0);
        assert_eq!(p.f_max, 22.0);
    }

    #[test]
    fn rosenbrock_examples() {
        let p = make_noisy_rosenbrock(0.0, 0.0, 0);
        assert_eq!(p.value(&Vector::from_vec(vec![1.0, 1.0])), 0.0);
        assert_eq!(p.gradient(&Vector::zeros(2)).as_slice(), &[-2.0, 0.0]);
        assert_eq!(p.value(&Vector::from_vec(vec![-1.0, 1.0])), 4.0);
    }

    #[test]
    fn finite_differences_match_gradients() {
        let mut rng = stream_rng(1, 0);
        for p in problems() {
            for _ in 0..10 {
                let x = random_point(&p, &mut rng);
                let g = p.gradient(&x);
                let fd = Vector::from_fn(p.dim, |i, _| {
                    let h = 1e-5 * x[i].abs().max(1.0);
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    (p.value(&xp) - p.value(&xm)) / (2.0 * h)
                });
                let rel = (&fd - &g).norm() / g.norm().max(1.0);
                assert!(rel <= 1e-6, "{}: relative error {rel}", p.name);
            }
        }
    }

    #[test]
    fn finite_differences_match_hessians() {
        let mut rng = stream_rng(2, 0);
        for p in problems() {
            let x = random_point(&p, &mut rng);
            let h = 1e-6;
            for i in 0..p.dim {
                let mut xp = x.clone();
                xp[i] += h;
                let col = (p.gradient(&xp) - p.gradient(&x)) / h;
                let exact = p.hessian(&x).column(i).into_owned();
                assert!(
                    (&col - &exact).norm() <= 1e-3 * exact.norm().max(1.0),
                    "{}",
                    p.name
                );
            }
        }
    }

    #[test]
    fn values_stay_in_range_on_the_box() {
        let mut rng = stream_rng(3, 0);
        for p in problems() {
            for _ in 0..1000 {
                let x = random_point(&p, &mut rng);
                let f = p.value(&x);
                assert!(
                    f >= 0.0 && f <= p.f_max,
                    "{}: {f} outside [0, {}]",
                    p.name,
                    p.f_max
                );
            }
        }
    }

    #[test]
    fn configured_lipschitz_constant_holds_on_random_pairs() {
        let mut rng = stream_rng(4, 0);
        for p in problems() {
            for _ in 0..1000 {
                let x = random_point(&p, &mut rng);
                let y = random_point(&p, &mut rng);
                let lhs = (p.gradient(&x) - p.gradient(&y)).norm();
                assert!(
                    lhs <= p.lipschitz * (&x - &y).norm() * (1.0 + 1e-12),
                    "{}",
                    p.name
                );
            }
        }
    }

    #[test]
    fn gaussian_noise_is_unbiased() {
        let p = make_noisy_quadratic(3, 10.0, 0.5, 0.5, 0);
        let o = p.oracle();
        let x = Vector::from_vec(vec![0.3, -0.2, 0.7]);
        let mut rng = stream_rng(5, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| o.sample_value(&x, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - p.value(&x)).abs() <= 4.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn exact_mean_draw_has_the_sample_mean_spread() {
        let p = make_noisy_quadratic(2, 10.0, 1.0, 1.0, 0);
        let o = p.oracle();
        let x = Vector::from_vec(vec![0.5, 0.5]);
        let mut rng = stream_rng(6, 0);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| o.mean_value(&x, 400, &mut rng) - p.value(&x))
            .collect();
        let sd = crate::stats::Summary::of(&draws).unwrap().std;
        assert!((sd - 0.05).abs() < 0.002, "sd {sd}");
    }

    #[test]
    fn gaussian_variance_bounds() {
        let p = make_noisy_quadratic(5, 10.0, 0.1, 0.1, 0);
        let o = p.oracle();
        assert!((o.value_variance_bound() - 0.01).abs() < 1e-15);
        assert!((o.gradient_variance_bound() - 0.05).abs() < 1e-15);
    }
}
