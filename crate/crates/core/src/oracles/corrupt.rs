use std::sync::Arc;

use rand::Rng;

use super::StochasticOracle;
use crate::rng::StreamRng;
use crate::{Matrix, Vector};

type ValueCorruptor = Arc<dyn Fn(f64, &mut StreamRng) -> f64 + Send + Sync>;
type GradientCorruptor = Arc<dyn Fn(Vector, &mut StreamRng) -> Vector + Send + Sync>;

/// With probability `failure_prob` a query returns an arbitrary value
/// produced by the generators instead of the honest answer.
#[derive(Clone)]
pub struct CorruptionSpec {
    pub failure_prob: f64,
    pub value: ValueCorruptor,
    pub gradient: GradientCorruptor,
}

impl CorruptionSpec {
    pub fn new(
        failure_prob: f64,
        value: impl Fn(f64, &mut StreamRng) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(Vector, &mut StreamRng) -> Vector + Send + Sync + 'static,
    ) -> Self {
        CorruptionSpec {
            failure_prob,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    /// Adds `shift` to corrupted values and to every corrupted gradient
    /// component.
    pub fn constant_shift(failure_prob: f64, shift: f64) -> Self {
        Self::new(
            failure_prob,
            move |v, _| v + shift,
            move |g, _| g.add_scalar(shift),
        )
    }

    fn hit(&self, rng: &mut StreamRng) -> bool {
        // No draw at the endpoints, so a zero-probability wrapper leaves the
        // stream untouched.
        if self.failure_prob <= 0.0 {
            false
        } else if self.failure_prob >= 1.0 {
            true
        } else {
            rng.random::<f64>() < self.failure_prob
        }
    }
}

impl std::fmt::Debug for CorruptionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorruptionSpec")
            .field("failure_prob", &self.failure_prob)
            .finish_non_exhaustive()
    }
}

/// Oracle whose queries fail independently with a fixed probability.
///
/// One query is one call, including the averaged `mean_*` calls: a
/// corrupted model build or estimate is wrong as a whole, which is the
/// failure mode probabilistic accuracy has to absorb. The variance bounds
/// are those of the honest oracle.
#[derive(Clone)]
pub struct CorruptedOracle<O> {
    pub base: O,
    pub spec: CorruptionSpec,
}

pub fn corrupt<O: StochasticOracle>(base: O, spec: CorruptionSpec) -> CorruptedOracle<O> {
    CorruptedOracle { base, spec }
}

impl<O: StochasticOracle> StochasticOracle for CorruptedOracle<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn sample_value(&self, x: &Vector, rng: &mut StreamRng) -> f64 {
        let hit = self.spec.hit(rng);
        let v = self.base.sample_value(x, rng);
        if hit {
            (self.spec.value)(v, rng)
        } else {
            v
        }
    }

    fn sample_gradient(&self, x: &Vector, rng: &mut StreamRng) -> Option<Vector> {
        let hit = self.spec.hit(rng);
        let g = self.base.sample_gradient(x, rng)?;
        Some(if hit { (self.spec.gradient)(g, rng) } else { g })
    }

    fn sample_hessian(&self, x: &Vector, rng: &mut StreamRng) -> Option<Matrix> {
        self.base.sample_hessian(x, rng)
    }

    fn value_variance_bound(&self) -> f64 {
        self.base.value_variance_bound()
    }

    fn gradient_variance_bound(&self) -> f64 {
        self.base.gradient_variance_bound()
    }

    fn has_gradient(&self) -> bool {
        self.base.has_gradient()
    }

    fn mean_value(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> f64 {
        let hit = self.spec.hit(rng);
        let v = self.base.mean_value(x, n, rng);
        if hit {
            (self.spec.value)(v, rng)
        } else {
            v
        }
    }

    fn mean_gradient(&self, x: &Vector, n: u128, rng: &mut StreamRng) -> Option<Vector> {
        let hit = self.spec.hit(rng);
        let g = self.base.mean_gradient(x, n, rng)?;
        Some(if hit { (self.spec.gradient)(g, rng) } else { g })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::SamplerOracle;
    use crate::rng::stream_rng;
    use crate::stats::chi_square_independence_2x2;

    fn zero_oracle() -> SamplerOracle {
        SamplerOracle::new(1, |_: &Vector, rng: &mut StreamRng| rng.random::<f64>(), 1.0)
            .with_gradient(|x: &Vector, _: &mut StreamRng| x.clone(), 0.0)
    }

    #[test]
    fn zero_probability_is_the_identity() {
        let base = zero_oracle();
        let wrapped = corrupt(base.clone(), CorruptionSpec::constant_shift(0.0, 1e6));
        let x = Vector::zeros(1);
        let (mut a, mut b) = (stream_rng(3, 0), stream_rng(3, 0));
        for _ in 0..100 {
            assert_eq!(base.sample_value(&x, &mut a), wrapped.sample_value(&x, &mut b));
        }
    }

    #[test]
    fn unit_probability_corrupts_every_query() {
        let wrapped = corrupt(zero_oracle(), CorruptionSpec::constant_shift(1.0, 1e6));
        let x = Vector::zeros(1);
        let mut rng = stream_rng(3, 0);
        for _ in 0..100 {
            assert!(wrapped.sample_value(&x, &mut rng) >= 1e6);
            assert_eq!(wrapped.mean_gradient(&x, 10, &mut rng).unwrap()[0], 1e6);
        }
    }

    #[test]
    fn corruption_frequency_and_lag_one_independence() {
        let p = 0.02;
        let wrapped = corrupt(zero_oracle(), CorruptionSpec::constant_shift(p, 1e6));
        let x = Vector::zeros(1);
        let mut rng = stream_rng(11, 0);
        let n = 200_000;
        let hits: Vec<bool> = (0..n).map(|_| wrapped.sample_value(&x, &mut rng) > 1.0).collect();
        let freq = hits.iter().filter(|h| **h).count() as f64 / n as f64;
        assert!((freq - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
        let mut table = [[0u64; 2]; 2];
        for w in hits.windows(2) {
            table[w[0] as usize][w[1] as usize] += 1;
        }
        assert!(chi_square_independence_2x2(table) > 0.01);
    }
}
