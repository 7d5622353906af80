use std::sync::Arc;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use super::{NoiseSpec, ProblemKind, TestProblem};
use crate::oracles::StochasticOracle;
use crate::rng::{stream_rng, StreamRng};
use crate::{Matrix, Vector};

const BOX_HALF_WIDTH: f64 = 4.0;
const RIDGE: f64 = 1e-2;
const PROBE_POINTS: usize = 8;
const VARIANCE_SAFETY: f64 = 1.5;

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample losses `ln(1 + exp(-y_i a_i^T w)) + ridge/2 |w|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticData {
    /// One row per sample.
    pub features: Matrix,
    /// Labels in `{-1, +1}`.
    pub labels: Vec<f64>,
    pub ridge: f64,
}

impl LogisticData {
    pub fn new(features: Matrix, labels: Vec<f64>, ridge: f64) -> Self {
        assert_eq!(features.nrows(), labels.len(), "one label per row");
        assert!(ridge >= 0.0);
        LogisticData {
            features,
            labels,
            ridge,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn margin(&self, i: usize, w: &Vector) -> f64 {
        self.labels[i] * self.features.row(i).transpose().dot(w)
    }

    pub fn sample_value(&self, i: usize, w: &Vector) -> f64 {
        softplus(-self.margin(i, w)) + 0.5 * self.ridge * w.norm_squared()
    }

    pub fn sample_gradient(&self, i: usize, w: &Vector) -> Vector {
        let c = -self.labels[i] * sigmoid(-self.margin(i, w));
        self.features.row(i).transpose() * c + w * self.ridge
    }

    fn batch_value(&self, idx: impl Iterator<Item = usize>, w: &Vector) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for i in idx {
            sum += self.sample_value(i, w);
            n += 1;
        }
        sum / n as f64
    }

    fn batch_gradient(&self, idx: impl Iterator<Item = usize>, w: &Vector) -> Vector {
        let mut sum = Vector::zeros(self.dim());
        let mut n = 0usize;
        for i in idx {
            sum += self.sample_gradient(i, w);
            n += 1;
        }
        sum / n as f64
    }

    fn batch_hessian(&self, idx: impl Iterator<Item = usize>, w: &Vector) -> Matrix {
        let d = self.dim();
        let mut sum = Matrix::zeros(d, d);
        let mut n = 0usize;
        for i in idx {
            let s = sigmoid(self.margin(i, w));
            let a = self.features.row(i).transpose();
            sum += &a * a.transpose() * (s * (1.0 - s));
            n += 1;
        }
        sum / n as f64 + Matrix::identity(d, d) * self.ridge
    }

    pub fn value(&self, w: &Vector) -> f64 {
        self.batch_value(0..self.len(), w)
    }

    pub fn gradient(&self, w: &Vector) -> Vector {
        self.batch_gradient(0..self.len(), w)
    }

    pub fn hessian(&self, w: &Vector) -> Matrix {
        self.batch_hessian(0..self.len(), w)
    }

    /// `1/4 max |a_i|^2 + ridge`, a global bound on every sample Hessian.
    pub fn lipschitz(&self) -> f64 {
        let max_sq = (0..self.len())
            .map(|i| self.features.row(i).norm_squared())
            .fold(0.0, f64::max);
        0.25 * max_sq + self.ridge
    }

    /// Population variances (value, gradient trace) of the per-sample terms
    /// at `w`.
    fn population_variances(&self, w: &Vector) -> (f64, f64) {
        let n = self.len() as f64;
        let f = self.value(w);
        let g = self.gradient(w);
        let (mut vv, mut gv) = (0.0, 0.0);
        for i in 0..self.len() {
            vv += (self.sample_value(i, w) - f).powi(2);
            gv += (self.sample_gradient(i, w) - &g).norm_squared();
        }
        (vv / n, gv / n)
    }
}

/// Draws minibatches of fixed size without replacement.
///
/// The variance bounds are measured at the origin and a fixed set of probe
/// points in the box, inflated by a safety factor and scaled by the
/// finite-population correction `(N - b) / ((N - 1) b)`. They are empirical
/// bounds, not guarantees.
#[derive(Debug, Clone)]
pub struct MinibatchOracle {
    pub data: Arc<LogisticData>,
    pub batch: usize,
    value_variance: f64,
    gradient_variance: f64,
}

impl MinibatchOracle {
    pub fn new(data: Arc<LogisticData>, batch: usize) -> Self {
        let n = data.len();
        assert!(batch >= 1 && batch <= n, "batch size must lie in [1, {n}]");
        let (value_variance, gradient_variance) = if batch == n {
            (0.0, 0.0)
        } else {
            let d = data.dim();
            let mut rng = stream_rng(0x5eed, 0);
            let mut probes = vec![Vector::zeros(d)];
            for _ in 0..PROBE_POINTS {
                probes.push(Vector::from_fn(d, |_, _| {
                    BOX_HALF_WIDTH * (2.0 * rand::Rng::random::<f64>(&mut rng) - 1.0)
                }));
            }
            let (mut vmax, mut gmax) = (0.0f64, 0.0f64);
            for w in &probes {
                let (v, g) = data.population_variances(w);
                vmax = vmax.max(v);
                gmax = gmax.max(g);
            }
            let fpc = (n - batch) as f64 / ((n - 1) as f64 * batch as f64);
            (VARIANCE_SAFETY * vmax * fpc, VARIANCE_SAFETY * gmax * fpc)
        };
        MinibatchOracle {
            data,
            batch,
            value_variance,
            gradient_variance,
        }
    }

    fn full_batch(&self) -> bool {
        self.batch == self.data.len()
    }

    fn draw(&self, rng: &mut StreamRng) -> index::IndexVec {
        index::sample(rng, self.data.len(), self.batch)
    }
}

impl StochasticOracle for MinibatchOracle {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn sample_value(&self, x: &Vector, rng: &mut StreamRng) -> f64 {
        if self.full_batch() {
            return self.data.value(x);
        }
        self.data.batch_value(self.draw(rng).into_iter(), x)
    }

    fn sample_gradient(&self, x: &Vector, rng: &mut StreamRng) -> Option<Vector> {
        if self.full_batch() {
            return Some(self.data.gradient(x));
        }
        Some(self.data.batch_gradient(self.draw(rng).into_iter(), x))
    }

    fn sample_hessian(&self, x: &Vector, rng: &mut StreamRng) -> Option<Matrix> {
        if self.full_batch() {
            return Some(self.data.hessian(x));
        }
        Some(self.data.batch_hessian(self.draw(rng).into_iter(), x))
    }

    fn value_variance_bound(&self) -> f64 {
        self.value_variance
    }

    fn gradient_variance_bound(&self) -> f64 {
        self.gradient_variance
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn mean_value(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> f64 {
        if self.full_batch() {
            return self.data.value(x);
        }
        (0..n).map(|_| self.sample_value(x, rng)).sum::<f64>() / n as f64
    }

    fn mean_gradient(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> Option<Vector> {
        if self.full_batch() {
            return Some(self.data.gradient(x));
        }
        let mut sum = Vector::zeros(self.dim());
        for _ in 0..n {
            sum += self.sample_gradient(x, rng)?;
        }
        Some(sum / n as f64)
    }
}

/// Wraps explicit data as a test problem on `[-4, 4]^dim` starting at the
/// origin.
pub fn logistic_problem(data: Arc<LogisticData>, batch: usize) -> (TestProblem, MinibatchOracle) {
    let oracle = MinibatchOracle::new(data.clone(), batch);
    let dim = data.dim();
    let f_max = (0..data.len())
        .map(|i| softplus(BOX_HALF_WIDTH * data.features.row(i).abs().sum()))
        .fold(0.0, f64::max)
        + 0.5 * data.ridge * BOX_HALF_WIDTH * BOX_HALF_WIDTH * dim as f64;
    let problem = TestProblem {
        name: "logistic".into(),
        kind: ProblemKind::Logistic {
            data: data.clone(),
            batch,
        },
        dim,
        lipschitz: data.lipschitz(),
        f_max,
        domain_box: vec![(-BOX_HALF_WIDTH, BOX_HALF_WIDTH); dim],
        x0: Vector::zeros(dim),
        noise: NoiseSpec {
            sigma: oracle.value_variance_bound().sqrt(),
            sigma_g: (oracle.gradient_variance_bound() / dim as f64).sqrt(),
        },
    };
    (problem, oracle)
}

/// Synthetic logistic regression: Gaussian features scaled by `1/sqrt(dim)`,
/// labels from a random planted separator with label noise, ridge `1e-2`.
pub fn make_finite_sum_logistic(
    n_samples: usize,
    dim: usize,
    subsample_size: usize,
    seed: u64,
) -> (TestProblem, MinibatchOracle) {
    assert!(n_samples >= 1 && dim >= 1);
    assert!(subsample_size <= n_samples, "subsample larger than the data set");
    let mut rng = stream_rng(seed, 0);
    let scale = 1.0 / (dim as f64).sqrt();
    let planted = Vector::from_fn(dim, |_, _| {
        2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
    });
    let features = Matrix::from_fn(n_samples, dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    });
    let labels = (0..n_samples)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if features.row(i).transpose().dot(&planted) + 0.5 * z > 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    logistic_problem(
        Arc::new(LogisticData::new(features, labels, RIDGE)),
        subsample_size.max(1),
    )
}
