use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use storm_core::oracles::{corrupt, CorruptionSpec, SaaSettings, SampleRule, StochasticOracle};
use storm_core::problems::{
    make_finite_sum_logistic, make_noisy_quadratic, make_noisy_rosenbrock, TestProblem,
};
use storm_core::trust_region::{drift_constants, RunOptions};
use storm_core::{DriftConstants, PotentialSpec, StormConfig};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProblemName {
    Quadratic,
    Rosenbrock,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RuleName {
    Chebyshev,
    Subgaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub name: ProblemName,
    pub dim: usize,
    pub cond: f64,
    pub sigma: f64,
    pub sigma_g: f64,
    /// Logistic data set size.
    pub n_samples: usize,
    /// Logistic minibatch size.
    pub batch: usize,
    pub seed: u64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            name: ProblemName::Quadratic,
            dim: 5,
            cond: 10.0,
            sigma: 0.1,
            sigma_g: 0.1,
            n_samples: 1000,
            batch: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StormSection {
    pub gamma: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub delta0: f64,
    pub delta_max: f64,
    pub kappa_fcd: f64,
    pub kappa_ef: f64,
    pub kappa_eg: f64,
    pub kappa_bhm: f64,
    pub eps_f: f64,
    pub max_iters: usize,
    pub snap_delta0: bool,
    /// Potential weight; the smallest admissible value when absent.
    pub nu: Option<f64>,
}

impl Default for StormSection {
    fn default() -> Self {
        let c = StormConfig::default();
        StormSection {
            gamma: c.gamma,
            eta1: c.eta1,
            eta2: c.eta2,
            delta0: c.delta0,
            delta_max: c.delta_max,
            kappa_fcd: c.kappa_fcd,
            kappa_ef: c.kappa_ef,
            kappa_eg: c.kappa_eg,
            kappa_bhm: c.kappa_bhm,
            eps_f: c.eps_f,
            max_iters: c.max_iters,
            snap_delta0: true,
            nu: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub alpha: f64,
    pub beta: f64,
    /// Overrides the value noise variance `sigma^2`.
    pub sigma2: Option<f64>,
    /// Overrides the per-component gradient noise variance `sigma_g^2`.
    pub sigma_g2: Option<f64>,
    pub budget_cap: Option<u64>,
    pub failure_prob: f64,
    pub corruption_shift: f64,
    pub rule: RuleName,
    pub hessian_samples: Option<usize>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            alpha: 0.9,
            beta: 1.0 - 1e-7,
            sigma2: None,
            sigma_g2: None,
            budget_cap: None,
            failure_prob: 0.0,
            corruption_shift: 1e6,
            rule: RuleName::Chebyshev,
            hessian_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Tolerances, strictly positive and sorted descending.
    pub epsilon: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    /// Write one row per iteration to traces.csv.
    pub trace: bool,
    /// Classify accuracy events, check the lemmas and the drift.
    pub instrument: bool,
    /// Record wall-clock time per run; off keeps runs.csv reproducible.
    pub timing: bool,
    /// Refuse accuracy targets that fail the drift feasibility conditions.
    pub check_feasibility: bool,
    pub out: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            epsilon: vec![1e-1, 1e-2, 1e-3],
            reps: 10,
            seed: 0,
            trace: false,
            instrument: false,
            timing: false,
            check_feasibility: true,
            out: None,
        }
    }
}

/// A full experiment: problem, algorithm constants, oracle accuracy and the
/// tolerance grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub problem: ProblemSection,
    pub storm: StormSection,
    pub oracle: OracleSection,
    pub run: RunSection,
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn storm_config(&self) -> StormConfig {
        let s = &self.storm;
        StormConfig {
            gamma: s.gamma,
            eta1: s.eta1,
            eta2: s.eta2,
            delta0: s.delta0,
            delta_max: s.delta_max,
            kappa_fcd: s.kappa_fcd,
            kappa_ef: s.kappa_ef,
            kappa_eg: s.kappa_eg,
            kappa_bhm: s.kappa_bhm,
            eps_f: s.eps_f,
            max_iters: s.max_iters,
            simplified_regime: self.run.check_feasibility,
        }
    }

    pub fn potential(&self) -> PotentialSpec {
        let cfg = self.storm_config();
        let default = PotentialSpec::for_config(&cfg);
        PotentialSpec {
            nu: self.storm.nu.unwrap_or(default.nu),
            ..default
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            alpha: self.oracle.alpha,
            beta: self.oracle.beta,
            sampling: SaaSettings {
                rule: match self.oracle.rule {
                    RuleName::Chebyshev => SampleRule::Chebyshev,
                    RuleName::Subgaussian => SampleRule::SubGaussian,
                },
                budget_cap: self.oracle.budget_cap.map(u128::from),
            },
            snap_delta0: self.storm.snap_delta0,
            instrument: self.run.instrument,
            keep_records: self.run.instrument || self.run.trace,
            hessian_samples: self.oracle.hessian_samples,
            domain_box: None,
        }
    }

    /// The referee problem and the (possibly corrupted) oracle queried by
    /// the algorithm.
    pub fn build_problem(&self) -> Result<(TestProblem, Arc<dyn StochasticOracle>), HarnessError> {
        let p = &self.problem;
        let sigma = self.oracle.sigma2.map_or(p.sigma, f64::sqrt);
        let sigma_g = self.oracle.sigma_g2.map_or(p.sigma_g, f64::sqrt);
        if !(sigma >= 0.0 && sigma_g >= 0.0) {
            return Err(HarnessError::Config("noise levels must be nonnegative".into()));
        }
        let problem = match p.name {
            ProblemName::Quadratic => {
                if p.dim == 0 || !(p.cond >= 1.0) {
                    return Err(HarnessError::Config(
                        "quadratic needs dim >= 1 and cond >= 1".into(),
                    ));
                }
                make_noisy_quadratic(p.dim, p.cond, sigma, sigma_g, p.seed)
            }
            ProblemName::Rosenbrock => make_noisy_rosenbrock(sigma, sigma_g, p.seed),
            ProblemName::Logistic => {
                if p.dim == 0 || p.n_samples == 0 || p.batch == 0 || p.batch > p.n_samples {
                    return Err(HarnessError::Config(
                        "logistic needs 1 <= batch <= n_samples and dim >= 1".into(),
                    ));
                }
                make_finite_sum_logistic(p.n_samples, p.dim, p.batch, p.seed).0
            }
        };
        let base = problem.oracle();
        let fp = self.oracle.failure_prob;
        if !(0.0..=1.0).contains(&fp) {
            return Err(HarnessError::Config(format!(
                "failure_prob = {fp} must lie in [0, 1]"
            )));
        }
        let oracle: Arc<dyn StochasticOracle> = if fp > 0.0 {
            Arc::new(corrupt(
                base,
                CorruptionSpec::constant_shift(fp, self.oracle.corruption_shift),
            ))
        } else {
            base
        };
        Ok((problem, oracle))
    }

    /// Drift constants for this plan's problem.
    pub fn drift_constants(&self, lipschitz: f64) -> Result<DriftConstants, HarnessError> {
        drift_constants(&self.storm_config(), lipschitz).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Checks everything that can be checked before running.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let eps = &self.run.epsilon;
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(HarnessError::Config(
                "epsilon grid must be nonempty and positive".into(),
            ));
        }
        if eps.windows(2).any(|w| w[0] <= w[1]) {
            return Err(HarnessError::Config(
                "epsilon grid must be strictly descending".into(),
            ));
        }
        if self.run.reps == 0 {
            return Err(HarnessError::Config("reps must be at least 1".into()));
        }
        let cfg = self.storm_config();
        cfg.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.targets(self.oracle.alpha, self.oracle.beta)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let (problem, _) = self.build_problem()?;
        if self.run.check_feasibility {
            let constants = self.drift_constants(problem.lipschitz)?;
            if !constants.feasible(self.oracle.alpha, self.oracle.beta) {
                return Err(HarnessError::Config(format!(
                    "alpha = {}, beta = {} fail the drift conditions: need beta >= {} and \
                     (alpha beta - 1/2) / ((1 - alpha)(1 - beta)) >= {}",
                    self.oracle.alpha, self.oracle.beta, constants.beta_min, constants.ab_threshold
                )));
            }
            self.potential()
                .validate(&cfg, constants.c1)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let plan = ExperimentPlan::default();
        plan.validate().unwrap();
        assert_eq!(ExperimentPlan::from_toml(&plan.to_toml()).unwrap(), plan);
    }

    #[test]
    fn dotted_keys_are_accepted() {
        let plan = ExperimentPlan::from_toml(
            "problem.name = \"rosenbrock\"\nproblem.sigma = 0.5\noracle.budget_cap = 1000\nrun.epsilon = [0.1, 0.01]\n",
        )
        .unwrap();
        assert_eq!(plan.problem.name, ProblemName::Rosenbrock);
        assert_eq!(plan.problem.sigma, 0.5);
        assert_eq!(plan.oracle.budget_cap, Some(1000));
        assert_eq!(plan.run.epsilon, vec![0.1, 0.01]);
        assert!(ExperimentPlan::from_toml("problem.colour = 1").is_err());
    }

    #[test]
    fn infeasible_targets_are_rejected_before_running() {
        let mut plan = ExperimentPlan::default();
        plan.oracle.beta = 0.99;
        let err = plan.validate().unwrap_err().to_string();
        assert!(err.contains("drift conditions"), "{err}");
        plan.run.check_feasibility = false;
        plan.validate().unwrap();
    }

    #[test]
    fn grid_must_descend() {
        let mut plan = ExperimentPlan::default();
        plan.run.epsilon = vec![0.01, 0.1];
        assert!(plan.validate().is_err());
    }
}
