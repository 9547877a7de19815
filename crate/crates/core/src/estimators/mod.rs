//! Contribution-function estimators and the registry that builds them by name.
//!
//! Every strategy implements [`ContributionEstimator`]. The built-in methods
//! are `independence`, `empirical` and `gaussian` (Monte Carlo samplers) and
//! `separate_regression` and `surrogate_regression` (regression fits).
//! Additional strategies can be registered at runtime.

pub mod mc;
pub mod regression;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::model::PredictiveModel;
use crate::rng;
use crate::simdata::{Dataset, GaussianParams};

pub use mc::{
    estimate_v_mc, gaussian_condition, Bandwidth, Completions, ConditionalGaussian,
    ConditionalSampler, EmpiricalSampler, GaussianSampler, IndependenceSampler, McEstimate,
    MonteCarloEstimator,
};
pub use regression::{
    estimate_v_reg, fit_separate, fit_surrogate, regression_family, NearestNeighbors,
    RegressionContribution, RegressionEstimator, RegressionFamily, Regressor, RidgePolynomial,
    SeparateRegressions, SurrogateRegression,
};

/// One estimated contribution value, with its Monte Carlo variance when the
/// estimator is stochastic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub variance: Option<f64>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            variance: None,
        }
    }
}

/// Estimates `v(S)` for a fixed model and training set.
///
/// Implementations must be safe to query concurrently and deterministic for a
/// given `(coalition, x_star, observation)`.
pub trait ContributionEstimator: Send + Sync {
    /// Label used in reports.
    fn name(&self) -> &str;

    /// Registered method name.
    fn method(&self) -> &str;

    fn n_features(&self) -> usize;

    /// The model being explained.
    fn model(&self) -> &dyn PredictiveModel;

    /// `v̂(∅)`, shared by every observation.
    fn empty_value(&self) -> Estimate;

    fn estimate(
        &self,
        coalition: Coalition,
        x_star: &[f64],
        observation: usize,
    ) -> Result<Estimate>;

    fn diagnostics(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
}

/// Per-estimator settings. Unused keys are ignored by methods that do not
/// need them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    /// Report label; must be unique within an experiment.
    pub label: String,
    /// Registered method name.
    pub method: String,
    /// Monte Carlo samples per coalition.
    #[serde(default = "defaults::k")]
    pub k: usize,
    /// Empirical kernel width scale; the width for coalition `S` is
    /// `bandwidth * sqrt(|S|)`.
    #[serde(default = "defaults::bandwidth")]
    pub bandwidth: f64,
    /// Diagonal jitter added to the estimated training covariance.
    #[serde(default = "defaults::jitter")]
    pub jitter: f64,
    /// Use the true data-generating Gaussian instead of training estimates.
    #[serde(default)]
    pub use_dgp_params: bool,
    /// Regression family for the regression methods.
    #[serde(default = "defaults::family")]
    pub family: String,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::neighbors")]
    pub neighbors: usize,
    /// Inverse-distance weights for the nearest-neighbor family.
    #[serde(default = "defaults::weighted")]
    pub weighted: bool,
    #[serde(default = "defaults::coalitions_per_row")]
    pub coalitions_per_row: usize,
}

pub(crate) mod defaults {
    pub fn k() -> usize {
        1000
    }
    pub fn bandwidth() -> f64 {
        0.1
    }
    pub fn jitter() -> f64 {
        1e-8
    }
    pub fn family() -> String {
        "ridge_poly".into()
    }
    pub fn lambda() -> f64 {
        1e-4
    }
    pub fn neighbors() -> usize {
        25
    }
    pub fn weighted() -> bool {
        true
    }
    pub fn coalitions_per_row() -> usize {
        16
    }
}

impl EstimatorSpec {
    /// Defaults for `method`, labelled with the method name.
    pub fn new(method: &str) -> Self {
        Self {
            label: method.into(),
            method: method.into(),
            k: defaults::k(),
            bandwidth: defaults::bandwidth(),
            jitter: defaults::jitter(),
            use_dgp_params: false,
            family: defaults::family(),
            lambda: defaults::lambda(),
            neighbors: defaults::neighbors(),
            weighted: defaults::weighted(),
            coalitions_per_row: defaults::coalitions_per_row(),
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }
}

/// Everything an estimator may be fitted on.
pub struct BuildContext<'a> {
    pub train: &'a Dataset,
    pub model: Arc<dyn PredictiveModel>,
    /// The true feature distribution; only used when a spec asks for it.
    pub dgp: Option<&'a GaussianParams>,
    pub seed: u64,
}

pub type EstimatorFactory =
    fn(&EstimatorSpec, &BuildContext<'_>) -> Result<Box<dyn ContributionEstimator>>;

/// Name → factory map for contribution estimators.
pub struct EstimatorRegistry {
    factories: BTreeMap<String, EstimatorFactory>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("independence", build_independence);
        r.register("empirical", build_empirical);
        r.register("gaussian", build_gaussian);
        r.register("separate_regression", build_separate);
        r.register("surrogate_regression", build_surrogate);
        r
    }

    /// Registers (or replaces) a method.
    pub fn register(&mut self, name: &str, factory: EstimatorFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(
        &self,
        spec: &EstimatorSpec,
        ctx: &BuildContext<'_>,
    ) -> Result<Box<dyn ContributionEstimator>> {
        let factory = self
            .factories
            .get(&spec.method)
            .ok_or_else(|| Error::UnknownName {
                kind: "estimator method",
                name: spec.method.clone(),
                known: self.names().join(", "),
            })?;
        factory(spec, ctx)
    }
}

fn purpose(spec: &EstimatorSpec) -> String {
    format!("fit/{}", spec.label)
}

fn build_independence(
    spec: &EstimatorSpec,
    ctx: &BuildContext<'_>,
) -> Result<Box<dyn ContributionEstimator>> {
    let sampler = IndependenceSampler::new(ctx.train)?;
    Ok(Box::new(MonteCarloEstimator::new(
        &spec.label,
        Box::new(sampler),
        ctx.model.clone(),
        spec.k,
        ctx.seed,
    )?))
}

fn build_empirical(
    spec: &EstimatorSpec,
    ctx: &BuildContext<'_>,
) -> Result<Box<dyn ContributionEstimator>> {
    let sampler = EmpiricalSampler::new(ctx.train, Bandwidth::ScaledBySize(spec.bandwidth))?;
    Ok(Box::new(MonteCarloEstimator::new(
        &spec.label,
        Box::new(sampler),
        ctx.model.clone(),
        spec.k,
        ctx.seed,
    )?))
}

fn build_gaussian(
    spec: &EstimatorSpec,
    ctx: &BuildContext<'_>,
) -> Result<Box<dyn ContributionEstimator>> {
    let sampler = if spec.use_dgp_params {
        let dgp = ctx.dgp.ok_or_else(|| {
            Error::Parameter(format!(
                "estimator `{}` asks for the true Gaussian parameters but none were supplied",
                spec.label
            ))
        })?;
        GaussianSampler::new(dgp.clone())?
    } else {
        GaussianSampler::from_training(ctx.train, spec.jitter)?
    };
    Ok(Box::new(MonteCarloEstimator::new(
        &spec.label,
        Box::new(sampler),
        ctx.model.clone(),
        spec.k,
        ctx.seed,
    )?))
}

fn family_for(spec: &EstimatorSpec) -> Result<Box<dyn RegressionFamily>> {
    regression_family(&spec.family, spec.lambda, spec.neighbors, spec.weighted)
}

fn build_separate(
    spec: &EstimatorSpec,
    ctx: &BuildContext<'_>,
) -> Result<Box<dyn ContributionEstimator>> {
    let family = family_for(spec)?;
    let fitted = fit_separate(ctx.train, ctx.model.clone(), family.as_ref())?;
    Ok(Box::new(RegressionEstimator::new(
        &spec.label,
        "separate_regression",
        fitted,
        ctx.model.clone(),
    )))
}

fn build_surrogate(
    spec: &EstimatorSpec,
    ctx: &BuildContext<'_>,
) -> Result<Box<dyn ContributionEstimator>> {
    let family = family_for(spec)?;
    let mut rng = rng::stream(ctx.seed, &purpose(spec));
    let fitted = fit_surrogate(
        ctx.train,
        ctx.model.clone(),
        spec.coalitions_per_row,
        family.as_ref(),
        &mut rng,
    )?;
    Ok(Box::new(RegressionEstimator::new(
        &spec.label,
        "surrogate_regression",
        fitted,
        ctx.model.clone(),
    )))
}
