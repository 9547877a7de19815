//! Error metrics and per-instance precision analysis.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::engine::Explanation;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, column_means, sample_covariance};
use crate::rng;
use crate::simdata::Dataset;

/// Overall MAE and the per-instance vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mae {
    pub overall: f64,
    pub per_instance: Vec<f64>,
}

/// Mean absolute difference per row (averaged over features), then over rows.
pub fn mae(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<Mae> {
    if truth.shape() != estimate.shape() {
        return Err(Error::InvalidInput(format!(
            "mae shape mismatch: {:?} vs {:?}",
            truth.shape(),
            estimate.shape()
        )));
    }
    let (n, m) = truth.shape();
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("mae of an empty matrix".into()));
    }
    let per_instance: Vec<f64> = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (truth[(i, j)] - estimate[(i, j)]).abs())
                .sum::<f64>()
                / m as f64
        })
        .collect();
    let overall = per_instance.iter().sum::<f64>() / n as f64;
    Ok(Mae {
        overall,
        per_instance,
    })
}

fn check_width(train: &Dataset, test: &DMatrix<f64>) -> Result<()> {
    if train.features().ncols() != test.ncols() {
        return Err(Error::shape(
            "test feature count",
            train.features().ncols(),
            test.ncols(),
        ));
    }
    if train.features().nrows() == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    Ok(())
}

/// Euclidean distance of each test row to the training feature mean.
pub fn distance_to_center(train: &Dataset, test: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_width(train, test)?;
    let center = column_means(train.features());
    Ok(test
        .row_iter()
        .map(|row| {
            row.iter()
                .zip(center.iter())
                .map(|(x, c)| (x - c) * (x - c))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Mahalanobis distance to the training mean under the training covariance.
pub fn mahalanobis_to_center(train: &Dataset, test: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_width(train, test)?;
    let center = column_means(train.features());
    let cov = sample_covariance(train.features());
    let chol = cholesky_lower(&cov).ok_or_else(|| Error::NotSpd("training covariance".into()))?;
    Ok(test
        .row_iter()
        .map(|row| {
            let diff = row.transpose() - &center;
            let z = chol
                .solve_lower_triangular(&diff)
                .expect("cholesky factor has a positive diagonal");
            z.norm()
        })
        .collect())
}

/// Mid-ranks (1-based, ties averaged).
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape("spearman input", a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "spearman needs at least 3 values, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("spearman input is not finite".into()));
    }
    Ok(())
}

/// Spearman rank correlation; `None` when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    check_pair(a, b)?;
    Ok(pearson(&mid_ranks(a), &mid_ranks(b)))
}

/// Spearman correlation with a one-sided permutation p-value for a positive
/// association: `(1 + #{ρ_perm ≥ ρ}) / (1 + shuffles)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankTest {
    pub spearman: Option<f64>,
    pub p_value: Option<f64>,
}

pub fn spearman_permutation_test(
    a: &[f64],
    b: &[f64],
    shuffles: usize,
    seed: u64,
    purpose: &str,
) -> Result<RankTest> {
    check_pair(a, b)?;
    let ra = mid_ranks(a);
    let mut rb = mid_ranks(b);
    let Some(observed) = pearson(&ra, &rb) else {
        return Ok(RankTest {
            spearman: None,
            p_value: None,
        });
    };
    let mut rng = rng::stream(seed, purpose);
    let mut hits = 0usize;
    for _ in 0..shuffles {
        rb.shuffle(&mut rng);
        if pearson(&ra, &rb).is_some_and(|r| r >= observed - 1e-12) {
            hits += 1;
        }
    }
    Ok(RankTest {
        spearman: Some(observed),
        p_value: Some((1 + hits) as f64 / (1 + shuffles) as f64),
    })
}

/// Sample quantile by linear interpolation of order statistics (type 7).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Indices with `value > Q3 + 1.5 (Q3 - Q1)`, type-7 quartiles.
pub fn tukey_outliers(values: &[f64]) -> Result<Vec<usize>> {
    if values.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "outlier detection needs at least 4 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("outlier input is not finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_type7(&sorted, 0.25);
    let q3 = quantile_type7(&sorted, 0.75);
    let fence = q3 + 1.5 * (q3 - q1);
    Ok((0..values.len()).filter(|&i| values[i] > fence).collect())
}

fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Fraction of the top-`k` features by `|φ|` shared between two rows.
pub fn rank_agreement(truth: &[f64], estimate: &[f64], k: usize) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::shape("rank agreement", truth.len(), estimate.len()));
    }
    if k == 0 || k > truth.len() {
        return Err(Error::Parameter(format!(
            "top count k={k} outside 1..={}",
            truth.len()
        )));
    }
    let a = top_k(truth, k);
    let b = top_k(estimate, k);
    Ok(a.iter().filter(|i| b.contains(i)).count() as f64 / k as f64)
}

/// Per-instance MAE divided by `max(|f(x*) - φ₀|, floor)`. Diagnostic only:
/// the ratio explodes for predictions near `φ₀`.
pub fn scaled_mae(per_instance: &[f64], prediction_gap: &[f64], floor: f64) -> Vec<f64> {
    per_instance
        .iter()
        .zip(prediction_gap)
        .map(|(e, g)| e / g.max(floor))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSettings {
    pub top_k: usize,
    pub permutation_shuffles: usize,
    pub scaled_mae_floor: f64,
    pub seed: u64,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            top_k: 3,
            permutation_shuffles: 10_000,
            scaled_mae_floor: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub overall_mae: f64,
    pub per_instance_mae: Vec<f64>,
    pub mae_vs_distance: RankTest,
    pub mae_vs_prediction_gap: Option<f64>,
    pub outliers: Vec<usize>,
    pub rank_agreement: Vec<f64>,
    pub mean_rank_agreement: f64,
    /// Diagnostic only, see [`scaled_mae`].
    pub scaled_mae: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairCorrelation {
    pub first: String,
    pub second: String,
    pub spearman: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub observations: Vec<usize>,
    pub distance: Vec<f64>,
    /// Auxiliary companion to `distance`.
    pub mahalanobis: Vec<f64>,
    pub prediction: Vec<f64>,
    /// `|f(x*) - φ₀|` with the truth oracle's `φ₀`.
    pub prediction_gap: Vec<f64>,
    pub truth_mean_std_error: Option<f64>,
    pub top_k: usize,
    pub methods: Vec<MethodReport>,
    pub method_correlations: Vec<PairCorrelation>,
}

impl EvaluationReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn phi_matrix(explanations: &[Explanation]) -> DMatrix<f64> {
    let m = explanations.first().map_or(0, |e| e.phi.len());
    DMatrix::from_fn(explanations.len(), m, |i, j| explanations[i].phi[j])
}

fn check_alignment(truth: &[Explanation], other: &[Explanation], method: &str) -> Result<()> {
    if truth.len() != other.len() {
        return Err(Error::Alignment(format!(
            "{method}: {} explanations for {} truth observations",
            other.len(),
            truth.len()
        )));
    }
    for (t, o) in truth.iter().zip(other) {
        if t.observation != o.observation || t.phi.len() != o.phi.len() {
            return Err(Error::Alignment(format!(
                "{method}: observation {} does not line up with truth observation {}",
                o.observation, t.observation
            )));
        }
    }
    Ok(())
}

/// Assembles every metric for the truth explanations against each method's.
pub fn build_report(
    truth: &[Explanation],
    estimates: &[(String, Vec<Explanation>)],
    train: &Dataset,
    test: &DMatrix<f64>,
    settings: &ReportSettings,
) -> Result<EvaluationReport> {
    if truth.len() != test.nrows() {
        return Err(Error::Alignment(format!(
            "{} truth explanations for {} test rows",
            truth.len(),
            test.nrows()
        )));
    }
    let distance = distance_to_center(train, test)?;
    let mahalanobis = mahalanobis_to_center(train, test)?;
    let prediction: Vec<f64> = truth.iter().map(|e| e.prediction).collect();
    let prediction_gap: Vec<f64> = truth
        .iter()
        .map(|e| (e.prediction - e.phi0).abs())
        .collect();
    let truth_phi = phi_matrix(truth);
    let truth_mean_std_error = {
        let ses: Vec<f64> = truth
            .iter()
            .filter_map(|e| e.std_errors.as_ref())
            .flatten()
            .copied()
            .collect();
        (!ses.is_empty()).then(|| ses.iter().sum::<f64>() / ses.len() as f64)
    };

    let mut methods = Vec::with_capacity(estimates.len());
    for (name, explanations) in estimates {
        check_alignment(truth, explanations, name)?;
        let err = mae(&truth_phi, &phi_matrix(explanations))?;
        let mae_vs_distance = spearman_permutation_test(
            &err.per_instance,
            &distance,
            settings.permutation_shuffles,
            settings.seed,
            &format!("evaluation/permutation/{name}"),
        )?;
        let rank_agreement = truth
            .iter()
            .zip(explanations)
            .map(|(t, e)| rank_agreement(&t.phi, &e.phi, settings.top_k))
            .collect::<Result<Vec<_>>>()?;
        methods.push(MethodReport {
            method: name.clone(),
            overall_mae: err.overall,
            mae_vs_distance,
            mae_vs_prediction_gap: spearman(&err.per_instance, &prediction_gap)?,
            outliers: tukey_outliers(&err.per_instance)?,
            mean_rank_agreement: rank_agreement.iter().sum::<f64>() / rank_agreement.len() as f64,
            rank_agreement,
            scaled_mae: scaled_mae(
                &err.per_instance,
                &prediction_gap,
                settings.scaled_mae_floor,
            ),
            per_instance_mae: err.per_instance,
        });
    }

    let mut method_correlations = Vec::new();
    for (i, a) in methods.iter().enumerate() {
        for b in &methods[i + 1..] {
            method_correlations.push(PairCorrelation {
                first: a.method.clone(),
                second: b.method.clone(),
                spearman: spearman(&a.per_instance_mae, &b.per_instance_mae)?,
            });
        }
    }

    Ok(EvaluationReport {
        observations: truth.iter().map(|e| e.observation).collect(),
        distance,
        mahalanobis,
        prediction,
        prediction_gap,
        truth_mean_std_error,
        top_k: settings.top_k,
        methods,
        method_correlations,
    })
}
