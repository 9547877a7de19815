//! Experiment configuration (TOML).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::simdata::{ResponseCoefficients, DEFAULT_BETA, DEFAULT_GAMMA, DEFAULT_PAIRS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every available core. Never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub truth: TruthConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_features: usize,
    pub rho: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_features: 8,
            rho: 0.5,
            n_train: 1000,
            n_test: 250,
        }
    }
}

/// Response coefficients; `beta[0]` is the intercept and pairs are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub pairs: Vec<[usize; 2]>,
    pub noise_sd: f64,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA.to_vec(),
            gamma: DEFAULT_GAMMA.to_vec(),
            pairs: DEFAULT_PAIRS.iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
            noise_sd: 1.0,
        }
    }
}

impl CoefficientConfig {
    pub fn to_coefficients(&self) -> Result<ResponseCoefficients> {
        let pairs = self
            .pairs
            .iter()
            .map(|&[a, b]| {
                if a == 0 || b == 0 {
                    Err(Error::Config(format!(
                        "interaction pair [{a}, {b}] is not 1-based"
                    )))
                } else {
                    Ok((a - 1, b - 1))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResponseCoefficients {
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            pairs,
            noise_sd: self.noise_sd,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Ridge fit of the response basis on the training data.
    FittedBasis,
    /// The noiseless response mean itself.
    Analytic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub lambda: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::FittedBasis,
            lambda: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub k_truth: usize,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self { k_truth: 50_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub top_k: usize,
    pub permutation_shuffles: usize,
    pub scaled_mae_floor: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            top_k: 3,
            permutation_shuffles: 10_000,
            scaled_mae_floor: 0.1,
        }
    }
}

fn default_seed() -> u64 {
    2023
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// The three samplers plus both regression estimators. The regression
/// estimators use the nearest-neighbor family: the polynomial basis cannot
/// represent the cubic interaction terms of the default response.
fn default_estimators() -> Vec<EstimatorSpec> {
    let mut specs: Vec<EstimatorSpec> = [
        "gaussian",
        "empirical",
        "independence",
        "separate_regression",
        "surrogate_regression",
    ]
    .iter()
    .map(|m| EstimatorSpec::new(m))
    .collect();
    for spec in &mut specs[3..] {
        spec.family = "knn".into();
    }
    specs
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            output_dir: default_output_dir(),
            threads: None,
            data: DataConfig::default(),
            coefficients: CoefficientConfig::default(),
            model: ModelConfig::default(),
            truth: TruthConfig::default(),
            evaluation: EvaluationConfig::default(),
            estimators: default_estimators(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let config_err = |e: Error| Error::Config(e.to_string());
        if d.n_features == 0 {
            return Err(Error::Config("data.n_features must be at least 1".into()));
        }
        if d.n_train < 2 || d.n_test < 4 {
            return Err(Error::Config(format!(
                "need n_train >= 2 and n_test >= 4, got {} and {}",
                d.n_train, d.n_test
            )));
        }
        if !(d.rho.abs() < 1.0) {
            return Err(Error::Config(format!(
                "data.rho must lie in (-1, 1), got {}",
                d.rho
            )));
        }
        self.coefficients
            .to_coefficients()?
            .validate(d.n_features)
            .map_err(config_err)?;
        if self.truth.k_truth < 2 {
            return Err(Error::Config("truth.k_truth must be at least 2".into()));
        }
        if self.evaluation.top_k == 0 || self.evaluation.top_k > d.n_features {
            return Err(Error::Config(format!(
                "evaluation.top_k must lie in 1..={}",
                d.n_features
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        let mut labels = HashSet::new();
        for spec in &self.estimators {
            if !labels.insert(spec.label.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate estimator label `{}`",
                    spec.label
                )));
            }
            if spec.k == 0 {
                return Err(Error::Config(format!(
                    "estimator `{}`: k must be at least 1",
                    spec.label
                )));
            }
        }
        Ok(())
    }
}

/// Commented default configuration written by `init-config`.
pub const TEMPLATE: &str = r#"# Conditional Shapley benchmark configuration.
# Every key is optional; the values below are the defaults.

seed = 2023
output_dir = "results"
# threads = 4            # worker threads; default: all cores. Results do not depend on it.

[data]
n_features = 8           # M
rho = 0.5                # feature correlation, cov[j, l] = rho^|j - l|
n_train = 1000
n_test = 250

[coefficients]
# y = beta[0] + sum_j beta[j] cos(x_j) + sum_p gamma[p] g(x_a, x_b) + noise,
# g(a, b) = a b + a b^2 + a^2 b
beta = [1.0, 0.2, -0.8, 1.0, 0.5, -0.8, 0.6, -0.7, -0.6]
gamma = [0.8, -1.0]
pairs = [[1, 2], [3, 4]]  # 1-based feature indices
noise_sd = 1.0

[model]
kind = "fitted_basis"    # "fitted_basis" (ridge on the response basis) or "analytic"
lambda = 1e-6

[truth]
k_truth = 50000          # Monte Carlo draws per coalition (antithetic pairs)

[evaluation]
top_k = 3                # rank-agreement depth
permutation_shuffles = 10000
scaled_mae_floor = 0.1   # denominator floor of the diagnostic scaled MAE

# One table per estimator. Keys not listed take these defaults:
#   k = 1000                   Monte Carlo samples per coalition
#   bandwidth = 0.1            empirical kernel scale (width = bandwidth * sqrt(|S|))
#   jitter = 1e-8              covariance diagonal jitter (gaussian)
#   use_dgp_params = false     gaussian: condition on the true distribution
#   family = "ridge_poly"      regression family: "ridge_poly" or "knn"
#   lambda = 1e-4              ridge penalty
#   neighbors = 25             knn neighbours
#   weighted = true            knn inverse-distance weights
#   coalitions_per_row = 16    surrogate training coalitions per row

[[estimators]]
label = "gaussian"
method = "gaussian"

[[estimators]]
label = "empirical"
method = "empirical"

[[estimators]]
label = "independence"
method = "independence"

[[estimators]]
label = "separate_regression"
method = "separate_regression"
family = "knn"

[[estimators]]
label = "surrogate_regression"
method = "surrogate_regression"
family = "knn"
"#;
