//! Exact Shapley aggregation over the full coalition table, batch
//! explanation, and the ground-truth oracle.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::coalition::{
    enumerate_coalitions, full_mask, merge_completion, shapley_weights, Coalition,
};
use crate::error::{Error, Result};
use crate::estimators::{ContributionEstimator, Estimate, GaussianSampler};
use crate::model::PredictiveModel;
use crate::rng;
use crate::simdata::GaussianParams;

/// `v̂(S)` for every coalition of one observation, indexed by mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ContributionTable {
    n_features: usize,
    values: Vec<Option<f64>>,
    variances: Vec<Option<f64>>,
    pub estimator: String,
    pub observation: usize,
}

impl ContributionTable {
    pub fn new(
        n_features: usize,
        estimator: impl Into<String>,
        observation: usize,
    ) -> Result<Self> {
        enumerate_coalitions(n_features)?; // capacity
        let len = full_mask(n_features) as usize + 1;
        Ok(Self {
            n_features,
            values: vec![None; len],
            variances: vec![None; len],
            estimator: estimator.into(),
            observation,
        })
    }

    /// A complete table from dense values (length `2^M`).
    pub fn from_values(n_features: usize, values: &[f64]) -> Result<Self> {
        let mut t = Self::new(n_features, "table", 0)?;
        if values.len() != t.values.len() {
            return Err(Error::shape(
                "contribution table",
                t.values.len(),
                values.len(),
            ));
        }
        for (slot, &v) in t.values.iter_mut().zip(values) {
            *slot = Some(v);
        }
        Ok(t)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn set(&mut self, coalition: Coalition, estimate: Estimate) {
        let i = coalition.mask() as usize;
        self.values[i] = Some(estimate.value);
        self.variances[i] = estimate.variance;
    }

    pub fn get(&self, mask: u32) -> Option<f64> {
        self.values.get(mask as usize).copied().flatten()
    }

    pub fn grand_value(&self) -> Option<f64> {
        self.get(full_mask(self.n_features))
    }

    fn dense(&self) -> Result<Vec<f64>> {
        let missing: Vec<u32> = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(i, _)| i as u32)
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingCoalitions { masks: missing });
        }
        let dense: Vec<f64> = self.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        if let Some(i) = dense.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite contribution {} for coalition {:#b}",
                dense[i], i
            )));
        }
        Ok(dense)
    }
}

/// `(φ₀, φ_1..φ_M)` for one observation under one estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Explanation {
    pub observation: usize,
    pub estimator: String,
    /// `f(x*)`, the grand-coalition value.
    pub prediction: f64,
    pub phi0: f64,
    pub phi: Vec<f64>,
    /// Monte Carlo standard error of each `φ_j`, when the table carries
    /// variances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
}

/// `φ_j = Σ_{S ⊆ M\{j}} w(|S|) (v̂(S ∪ {j}) - v̂(S))`, `φ₀ = v̂(∅)`.
///
/// Evaluated as one pass over the table: coalition `T` enters `φ_j` with
/// weight `w(|T|-1)` when `j ∈ T` and `-w(|T|)` otherwise. Variances, when
/// present, propagate with squared weights (coalitions are independent).
pub fn aggregate(table: &ContributionTable) -> Result<Explanation> {
    let m = table.n_features;
    let values = table.dense()?;
    let weights = shapley_weights(m)?;
    let has_var = table.variances.iter().any(Option::is_some);
    let mut phi = vec![0.0; m];
    let mut var = vec![0.0; m];
    for (mask, &v) in values.iter().enumerate() {
        let mask = mask as u32;
        let size = mask.count_ones() as usize;
        let tv = table.variances[mask as usize].unwrap_or(0.0);
        for j in 0..m {
            let c = if mask & (1 << j) != 0 {
                weights[size - 1]
            } else if size < m {
                -weights[size]
            } else {
                continue;
            };
            phi[j] += c * v;
            if has_var {
                var[j] += c * c * tv;
            }
        }
    }
    Ok(Explanation {
        observation: table.observation,
        estimator: table.estimator.clone(),
        prediction: values[full_mask(m) as usize],
        phi0: values[0],
        phi,
        std_errors: has_var.then(|| var.iter().map(|v| v.sqrt()).collect()),
    })
}

/// Fills the table from `estimator` (grand coalition forced to `f(x*)`, empty
/// coalition to the estimator's `v̂(∅)`) and aggregates.
pub fn explain_observation(
    estimator: &dyn ContributionEstimator,
    x_star: &[f64],
    observation: usize,
) -> Result<Explanation> {
    let m = estimator.n_features();
    let annotate = |mask: u32| {
        move |e: Error| Error::Estimation {
            observation,
            mask,
            source: Box::new(e),
        }
    };
    let full = full_mask(m);
    let prediction = estimator.model().predict(x_star).map_err(annotate(full))?;
    let mut table = ContributionTable::new(m, estimator.name(), observation)?;
    for c in enumerate_coalitions(m)? {
        let est = if c.is_grand() {
            Estimate::exact(prediction)
        } else if c.is_empty() {
            estimator.empty_value()
        } else {
            estimator
                .estimate(c, x_star, observation)
                .map_err(annotate(c.mask()))?
        };
        table.set(c, est);
    }
    aggregate(&table)
}

/// Explains every row of `rows`; observation ids are row positions. Runs on
/// the current rayon pool; output order follows `rows`.
pub fn explain_batch(
    estimator: &dyn ContributionEstimator,
    rows: &[Vec<f64>],
) -> Result<Vec<Explanation>> {
    rows.par_iter()
        .enumerate()
        .map(|(i, x)| explain_observation(estimator, x, i))
        .collect()
}

/// Shapley values under the known data-generating Gaussian: exact
/// conditioning, `k_truth` antithetic Monte Carlo draws per coalition.
pub struct TruthOracle<'a> {
    sampler: GaussianSampler,
    model: &'a dyn PredictiveModel,
    k_truth: usize,
    seed: u64,
    empty: Estimate,
}

const TRUTH_PURPOSE: &str = "truth";

impl<'a> TruthOracle<'a> {
    pub fn new(
        dgp: &GaussianParams,
        model: &'a dyn PredictiveModel,
        k_truth: usize,
        seed: u64,
    ) -> Result<Self> {
        if k_truth < 2 {
            return Err(Error::Parameter(format!(
                "k_truth must be at least 2 for antithetic pairs, got {k_truth}"
            )));
        }
        if dgp.n_features() != model.n_features() {
            return Err(Error::shape(
                "truth feature count",
                model.n_features(),
                dgp.n_features(),
            ));
        }
        let sampler = GaussianSampler::new(dgp.clone())?;
        let mut oracle = Self {
            sampler,
            model,
            k_truth,
            seed,
            empty: Estimate::exact(0.0),
        };
        let m = dgp.n_features();
        let origin = dgp.mean().iter().copied().collect::<Vec<_>>();
        oracle.empty = oracle.antithetic(Coalition::empty(m)?, &origin, u64::MAX)?;
        Ok(oracle)
    }

    pub fn k_truth(&self) -> usize {
        self.k_truth
    }

    fn antithetic(&self, coalition: Coalition, x_star: &[f64], stream: u64) -> Result<Estimate> {
        let (mean, chol) = self.sampler.conditional_factors(coalition, x_star)?;
        let width = mean.len();
        let mut rng = rng::substream(self.seed, TRUTH_PURPOSE, stream);
        let pairs = self.k_truth / 2;
        let mut z = vec![0.0; width];
        let mut plus = vec![0.0; width];
        let mut minus = vec![0.0; width];
        let mut x = x_star.to_vec();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut shift = None;
        for _ in 0..pairs {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            for r in 0..width {
                let mut dev = 0.0;
                for c in 0..=r {
                    dev += chol[(r, c)] * z[c];
                }
                plus[r] = mean[r] + dev;
                minus[r] = mean[r] - dev;
            }
            merge_completion(&mut x, x_star, &plus, coalition);
            let a = self.model.evaluate(&x);
            merge_completion(&mut x, x_star, &minus, coalition);
            let b = self.model.evaluate(&x);
            let y = 0.5 * (a + b);
            let s = *shift.get_or_insert(y);
            sum += y - s;
            sum_sq += (y - s) * (y - s);
        }
        let n = pairs as f64;
        let value = shift.unwrap_or(0.0) + sum / n;
        let var = if pairs > 1 {
            ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0) / n
        } else {
            0.0
        };
        Ok(Estimate {
            value,
            variance: Some(var),
        })
    }

    /// Truth explanation with per-feature standard errors.
    pub fn explain(&self, x_star: &[f64], observation: usize) -> Result<Explanation> {
        let m = self.sampler.params().n_features();
        let prediction = self.model.predict(x_star)?;
        let mut table = ContributionTable::new(m, "truth", observation)?;
        for c in enumerate_coalitions(m)? {
            let est = if c.is_grand() {
                Estimate {
                    value: prediction,
                    variance: Some(0.0),
                }
            } else if c.is_empty() {
                self.empty
            } else {
                self.antithetic(c, x_star, rng::evaluation_stream_id(observation, c.mask()))
                    .map_err(|e| Error::Estimation {
                        observation,
                        mask: c.mask(),
                        source: Box::new(e),
                    })?
            };
            table.set(c, est);
        }
        aggregate(&table)
    }

    pub fn explain_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<Explanation>> {
        rows.par_iter()
            .enumerate()
            .map(|(i, x)| self.explain(x, i))
            .collect()
    }
}

/// One-shot truth explanation for a single observation.
pub fn true_shapley(
    x_star: &[f64],
    dgp: &GaussianParams,
    f: &dyn PredictiveModel,
    k_truth: usize,
    seed: u64,
) -> Result<Explanation> {
    TruthOracle::new(dgp, f, k_truth, seed)?.explain(x_star, 0)
}
