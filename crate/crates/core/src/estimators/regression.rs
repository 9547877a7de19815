//! Regression estimation of the contribution function: `v(S)` minimizes the
//! conditional squared error of `f`, so any squared-loss regression of
//! `f(x)` on `x_S` estimates it. Either one regression per coalition
//! ([`SeparateRegressions`]) or one surrogate over mask-augmented inputs
//! ([`SurrogateRegression`]).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::{ContributionEstimator, Estimate};
use crate::coalition::{full_mask, Coalition};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::PredictiveModel;
use crate::rng::StreamRng;
use crate::simdata::Dataset;

/// A fitted regression `g`.
pub trait Regressor: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

/// A family of regression models, fitted by squared-error minimization.
pub trait RegressionFamily: Send + Sync {
    fn name(&self) -> &'static str;

    /// `inputs` is row-major with `width` columns, one row per target.
    fn fit(&self, inputs: &[f64], width: usize, targets: &[f64]) -> Result<Box<dyn Regressor>>;
}

/// Builds a family from its registered name.
pub fn regression_family(
    name: &str,
    lambda: f64,
    neighbors: usize,
    weighted: bool,
) -> Result<Box<dyn RegressionFamily>> {
    match name {
        "ridge_poly" => Ok(Box::new(RidgePolynomial::new(lambda)?)),
        "ridge_linear" => Ok(Box::new(RidgePolynomial::linear(lambda)?)),
        "knn" => Ok(Box::new(NearestNeighbors::new(neighbors, weighted)?)),
        other => Err(Error::UnknownName {
            kind: "regression family",
            name: other.into(),
            known: REGRESSION_FAMILIES.join(", "),
        }),
    }
}

pub const REGRESSION_FAMILIES: [&str; 3] = ["ridge_poly", "ridge_linear", "knn"];

/// Ridge regression on a fixed basis; the intercept is not penalized.
///
/// `ridge_poly` uses `1, x_i, x_i x_j (i ≤ j), cos(x_i)`; `ridge_linear` uses
/// `1, x_i`.
#[derive(Clone, Debug)]
pub struct RidgePolynomial {
    lambda: f64,
    quadratic: bool,
}

impl RidgePolynomial {
    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_basis(lambda, true)
    }

    pub fn linear(lambda: f64) -> Result<Self> {
        Self::with_basis(lambda, false)
    }

    fn with_basis(lambda: f64, quadratic: bool) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::Parameter(format!(
                "ridge penalty must be non-negative, got {lambda}"
            )));
        }
        Ok(Self { lambda, quadratic })
    }

    fn width(&self, width: usize) -> usize {
        if self.quadratic {
            1 + width + width * (width + 1) / 2 + width
        } else {
            1 + width
        }
    }
}

fn expand(x: &[f64], quadratic: bool, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    out.extend_from_slice(x);
    if quadratic {
        for i in 0..x.len() {
            for j in i..x.len() {
                out.push(x[i] * x[j]);
            }
        }
        out.extend(x.iter().map(|v| v.cos()));
    }
}

struct RidgePolynomialFit {
    coefficients: Vec<f64>,
    quadratic: bool,
}

impl Regressor for RidgePolynomialFit {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut feats = Vec::with_capacity(self.coefficients.len());
        expand(x, self.quadratic, &mut feats);
        feats
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum()
    }
}

impl RegressionFamily for RidgePolynomial {
    fn name(&self) -> &'static str {
        if self.quadratic {
            "ridge_poly"
        } else {
            "ridge_linear"
        }
    }

    fn fit(&self, inputs: &[f64], width: usize, targets: &[f64]) -> Result<Box<dyn Regressor>> {
        let n = targets.len();
        if n == 0 {
            return Err(Error::Data("no rows to fit".into()));
        }
        let p = self.width(width);
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        let mut feats = Vec::with_capacity(p);
        for (row, &y) in inputs.chunks_exact(width.max(1)).take(n).zip(targets) {
            let row = if width == 0 { &[][..] } else { row };
            expand(row, self.quadratic, &mut feats);
            for a in 0..p {
                let fa = feats[a];
                rhs[a] += fa * y;
                for b in 0..=a {
                    gram[(a, b)] += fa * feats[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
            // intercept unpenalized
            if a > 0 {
                gram[(a, a)] += self.lambda;
            }
        }
        let coef = linalg::solve_spd_or_pivoted(&gram, &rhs)?;
        Ok(Box::new(RidgePolynomialFit {
            coefficients: coef.iter().copied().collect(),
            quadratic: self.quadratic,
        }))
    }
}

/// k-nearest-neighbor regression under Euclidean distance, either uniform or
/// inverse-distance weighted.
#[derive(Clone, Debug)]
pub struct NearestNeighbors {
    k: usize,
    weighted: bool,
}

impl NearestNeighbors {
    pub fn new(k: usize, weighted: bool) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        Ok(Self { k, weighted })
    }
}

struct NearestNeighborsFit {
    k: usize,
    weighted: bool,
    width: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Regressor for NearestNeighborsFit {
    fn predict(&self, x: &[f64]) -> f64 {
        let n = self.targets.len();
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let row = &self.inputs[i * self.width..(i + 1) * self.width];
                let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let k = self.k.min(n);
        if k < n {
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        let nearest = &dist[..k];
        if !self.weighted {
            return nearest.iter().map(|&(_, i)| self.targets[i]).sum::<f64>() / k as f64;
        }
        // exact matches take all the weight
        let exact: Vec<usize> = nearest
            .iter()
            .filter(|(d2, _)| *d2 == 0.0)
            .map(|&(_, i)| i)
            .collect();
        if !exact.is_empty() {
            return exact.iter().map(|&i| self.targets[i]).sum::<f64>() / exact.len() as f64;
        }
        let (num, den) = nearest.iter().fold((0.0, 0.0), |(num, den), &(d2, i)| {
            let w = 1.0 / d2.sqrt();
            (num + w * self.targets[i], den + w)
        });
        num / den
    }
}

impl RegressionFamily for NearestNeighbors {
    fn name(&self) -> &'static str {
        "knn"
    }

    fn fit(&self, inputs: &[f64], width: usize, targets: &[f64]) -> Result<Box<dyn Regressor>> {
        if targets.is_empty() {
            return Err(Error::Data("no rows to fit".into()));
        }
        Ok(Box::new(NearestNeighborsFit {
            k: self.k,
            weighted: self.weighted,
            width,
            inputs: inputs[..targets.len() * width].to_vec(),
            targets: targets.to_vec(),
        }))
    }
}

/// Training features and the model's predictions on them.
struct RegressionData {
    n: usize,
    m: usize,
    rows: Vec<f64>,
    targets: Vec<f64>,
    empty_value: f64,
}

impl RegressionData {
    fn new(train: &Dataset, f: &dyn PredictiveModel) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        if train.n_features() != f.n_features() {
            return Err(Error::shape(
                "training features",
                f.n_features(),
                train.n_features(),
            ));
        }
        let (n, m) = (train.n_rows(), train.n_features());
        let mut rows = Vec::with_capacity(n * m);
        for i in 0..n {
            rows.extend(train.features().row(i).iter());
        }
        let targets: Vec<f64> = rows.chunks_exact(m).map(|r| f.evaluate(r)).collect();
        let empty_value = targets.iter().sum::<f64>() / n as f64;
        Ok(Self {
            n,
            m,
            rows,
            targets,
            empty_value,
        })
    }
}

/// One regression `g_S(x_S)` per coalition with `0 < |S| < M`.
pub struct SeparateRegressions {
    n_features: usize,
    family: &'static str,
    models: Vec<Option<Box<dyn Regressor>>>,
    empty_value: f64,
    model: Arc<dyn PredictiveModel>,
}

pub fn fit_separate(
    train: &Dataset,
    f: Arc<dyn PredictiveModel>,
    family: &dyn RegressionFamily,
) -> Result<SeparateRegressions> {
    let data = RegressionData::new(train, f.as_ref())?;
    let m = data.m;
    let coalitions = crate::coalition::enumerate_coalitions(m)?;
    let fitted: Vec<Option<Box<dyn Regressor>>> = coalitions
        .par_iter()
        .map(|c| {
            if c.is_empty() || c.is_grand() {
                return Ok(None);
            }
            let members = c.members();
            let mut inputs = Vec::with_capacity(data.n * members.len());
            for row in data.rows.chunks_exact(m) {
                inputs.extend(members.iter().map(|&j| row[j]));
            }
            family
                .fit(&inputs, members.len(), &data.targets)
                .map(Some)
                .map_err(|e| Error::Fit {
                    mask: c.mask(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    Ok(SeparateRegressions {
        n_features: m,
        family: family.name(),
        models: fitted,
        empty_value: data.empty_value,
        model: f,
    })
}

impl SeparateRegressions {
    pub fn family(&self) -> &'static str {
        self.family
    }

    /// Number of fitted per-coalition regressions (`2^M - 2`).
    pub fn fitted_count(&self) -> usize {
        self.models.iter().filter(|m| m.is_some()).count()
    }

    pub fn empty_value(&self) -> f64 {
        self.empty_value
    }

    pub fn value(&self, coalition: Coalition, x_star: &[f64]) -> Result<f64> {
        check_query(self.n_features, coalition, x_star)?;
        if coalition.is_empty() {
            return Ok(self.empty_value);
        }
        if coalition.is_grand() {
            return self.model.predict(x_star);
        }
        let g =
            self.models[coalition.mask() as usize]
                .as_ref()
                .ok_or(Error::UnfittedCoalition {
                    mask: coalition.mask(),
                })?;
        let xs: Vec<f64> = coalition.members().iter().map(|&j| x_star[j]).collect();
        Ok(g.predict(&xs))
    }
}

fn check_query(n_features: usize, coalition: Coalition, x_star: &[f64]) -> Result<()> {
    if coalition.n_features() != n_features {
        return Err(Error::shape(
            "coalition feature count",
            n_features,
            coalition.n_features(),
        ));
    }
    if x_star.len() != n_features {
        return Err(Error::shape("x*", n_features, x_star.len()));
    }
    Ok(())
}

/// Writes `(x with non-members set to 0, mask bits)` into `out`.
fn augment(x: &[f64], coalition: Coalition, out: &mut Vec<f64>) {
    out.clear();
    out.extend(
        x.iter()
            .enumerate()
            .map(|(j, &v)| if coalition.contains(j) { v } else { 0.0 }),
    );
    out.extend((0..x.len()).map(|j| if coalition.contains(j) { 1.0 } else { 0.0 }));
}

/// A single regression over `2M` augmented inputs covering every coalition.
pub struct SurrogateRegression {
    n_features: usize,
    family: &'static str,
    regressor: Box<dyn Regressor>,
    empty_value: f64,
    model: Arc<dyn PredictiveModel>,
}

/// Each training row is paired with `coalitions_per_row` coalitions drawn
/// uniformly from `P(M) \ {∅, M}`.
pub fn fit_surrogate(
    train: &Dataset,
    f: Arc<dyn PredictiveModel>,
    coalitions_per_row: usize,
    family: &dyn RegressionFamily,
    rng: &mut StreamRng,
) -> Result<SurrogateRegression> {
    if coalitions_per_row == 0 {
        return Err(Error::Parameter(
            "coalitions_per_row must be at least 1".into(),
        ));
    }
    let data = RegressionData::new(train, f.as_ref())?;
    let m = data.m;
    if m < 2 {
        return Err(Error::Parameter(
            "surrogate regression needs at least two features".into(),
        ));
    }
    let top = full_mask(m);
    let width = 2 * m;
    let rows = data.n * coalitions_per_row;
    let mut inputs = Vec::with_capacity(rows * width);
    let mut targets = Vec::with_capacity(rows);
    let mut buf = Vec::with_capacity(width);
    for (row, &y) in data.rows.chunks_exact(m).zip(&data.targets) {
        for _ in 0..coalitions_per_row {
            let mask = rng.random_range(1..top);
            let c = Coalition::new(mask, m)?;
            augment(row, c, &mut buf);
            inputs.extend_from_slice(&buf);
            targets.push(y);
        }
    }
    let regressor = family.fit(&inputs, width, &targets)?;
    Ok(SurrogateRegression {
        n_features: m,
        family: family.name(),
        regressor,
        empty_value: data.empty_value,
        model: f,
    })
}

impl SurrogateRegression {
    pub fn family(&self) -> &'static str {
        self.family
    }

    pub fn input_width(&self) -> usize {
        2 * self.n_features
    }

    pub fn empty_value(&self) -> f64 {
        self.empty_value
    }

    pub fn value(&self, coalition: Coalition, x_star: &[f64]) -> Result<f64> {
        check_query(self.n_features, coalition, x_star)?;
        if coalition.is_empty() {
            return Ok(self.empty_value);
        }
        if coalition.is_grand() {
            return self.model.predict(x_star);
        }
        let mut buf = Vec::with_capacity(self.input_width());
        augment(x_star, coalition, &mut buf);
        Ok(self.regressor.predict(&buf))
    }
}

/// Either regression estimator.
pub enum RegressionContribution<'a> {
    Separate(&'a SeparateRegressions),
    Surrogate(&'a SurrogateRegression),
}

/// `v̂(S) = g_S(x*_S)` (or `g(x̃*_S)`), with `v̂(∅)` the training mean of `f`
/// and `v̂(M) = f(x*)`.
pub fn estimate_v_reg(
    model: RegressionContribution<'_>,
    coalition: Coalition,
    x_star: &[f64],
) -> Result<f64> {
    match model {
        RegressionContribution::Separate(m) => m.value(coalition, x_star),
        RegressionContribution::Surrogate(m) => m.value(coalition, x_star),
    }
}

/// Registry adapter for either regression estimator.
pub struct RegressionEstimator<T> {
    label: String,
    method: &'static str,
    inner: T,
    model: Arc<dyn PredictiveModel>,
}

impl<T> RegressionEstimator<T> {
    pub fn new(
        label: impl Into<String>,
        method: &'static str,
        inner: T,
        model: Arc<dyn PredictiveModel>,
    ) -> Self {
        Self {
            label: label.into(),
            method,
            inner,
            model,
        }
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

macro_rules! regression_estimator {
    ($ty:ty) => {
        impl ContributionEstimator for RegressionEstimator<$ty> {
            fn name(&self) -> &str {
                &self.label
            }

            fn method(&self) -> &str {
                self.method
            }

            fn n_features(&self) -> usize {
                self.inner.n_features
            }

            fn model(&self) -> &dyn PredictiveModel {
                self.model.as_ref()
            }

            fn empty_value(&self) -> Estimate {
                Estimate {
                    value: self.inner.empty_value,
                    variance: None,
                }
            }

            fn estimate(
                &self,
                coalition: Coalition,
                x_star: &[f64],
                _observation: usize,
            ) -> Result<Estimate> {
                Ok(Estimate {
                    value: self.inner.value(coalition, x_star)?,
                    variance: None,
                })
            }
        }
    };
}

regression_estimator!(SeparateRegressions);
regression_estimator!(SurrogateRegression);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;
    use crate::rng;
    use crate::simdata::{sample_dataset, GaussianParams, ResponseCoefficients, Role};

    fn gaussian_train(m: usize, rho: f64, n: usize, seed: u64) -> Dataset {
        let p = GaussianParams::centered_ar(m, rho).unwrap();
        let coef = ResponseCoefficients {
            beta: vec![0.0; m + 1],
            gamma: vec![],
            pairs: vec![],
            noise_sd: 1.0,
        };
        sample_dataset(&p, &coef, n, seed, Role::Train).unwrap()
    }

    #[test]
    fn constant_target_separate() {
        let train = gaussian_train(3, 0.5, 200, 1);
        let f: Arc<dyn PredictiveModel> = Arc::new(LinearModel::constant(4.0, 3));
        let fam = RidgePolynomial::new(1e-4).unwrap();
        let sep = fit_separate(&train, f, &fam).unwrap();
        assert_eq!(sep.fitted_count(), 6);
        assert_eq!(sep.empty_value(), 4.0);
        for mask in 0..8 {
            let c = Coalition::new(mask, 3).unwrap();
            let v = sep.value(c, &[0.3, -1.0, 2.0]).unwrap();
            assert!((v - 4.0).abs() < 1e-8, "mask {mask}: {v}");
        }
    }

    #[test]
    fn knn_with_all_rows_is_the_mean() {
        let train = gaussian_train(3, 0.5, 60, 2);
        let f: Arc<dyn PredictiveModel> = Arc::new(LinearModel::new(0.5, vec![1.0, -2.0, 0.5]));
        let fam = NearestNeighbors::new(60, false).unwrap();
        let sep = fit_separate(&train, f.clone(), &fam).unwrap();
        let mean = sep.empty_value();
        for mask in 1..7 {
            let c = Coalition::new(mask, 3).unwrap();
            let v = sep.value(c, &[1.0, 2.0, -3.0]).unwrap();
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_knn_prefers_exact_match() {
        let fam = NearestNeighbors::new(3, true).unwrap();
        let g = fam
            .fit(&[0.0, 1.0, 2.0, 10.0], 1, &[5.0, 6.0, 7.0, 8.0])
            .unwrap();
        assert_eq!(g.predict(&[1.0]), 6.0);
        let between = g.predict(&[0.5]);
        assert!(between > 5.0 && between < 7.0);
    }

    #[test]
    fn linear_target_independent_features() {
        let train = gaussian_train(3, 0.0, 20_000, 3);
        let beta = [1.0, -0.5, 2.0];
        let f: Arc<dyn PredictiveModel> = Arc::new(LinearModel::new(0.0, beta.to_vec()));
        let means = linalg::column_means(train.features());
        let sep = fit_separate(&train, f, &RidgePolynomial::new(1e-4).unwrap()).unwrap();
        let x = [0.7, -1.2, 0.4];
        for mask in 1..7u32 {
            let c = Coalition::new(mask, 3).unwrap();
            let oracle: f64 = (0..3)
                .map(|j| {
                    if c.contains(j) {
                        beta[j] * x[j]
                    } else {
                        beta[j] * means[j]
                    }
                })
                .sum();
            let v = sep.value(c, &x).unwrap();
            assert!((v - oracle).abs() < 0.05, "mask {mask}: {v} vs {oracle}");
        }
    }

    #[test]
    fn surrogate_constant_and_special_cases() {
        let train = gaussian_train(4, 0.5, 150, 4);
        let f: Arc<dyn PredictiveModel> = Arc::new(LinearModel::constant(-1.5, 4));
        let mut r = rng::stream(1, "surrogate");
        let sur = fit_surrogate(
            &train,
            f.clone(),
            4,
            &RidgePolynomial::new(1e-4).unwrap(),
            &mut r,
        )
        .unwrap();
        assert_eq!(sur.input_width(), 8);
        for mask in 0..16 {
            let c = Coalition::new(mask, 4).unwrap();
            let v = sur.value(c, &[0.1, 0.2, -0.3, 1.0]).unwrap();
            assert!((v + 1.5).abs() < 1e-6, "mask {mask}: {v}");
        }
        let lin: Arc<dyn PredictiveModel> =
            Arc::new(LinearModel::new(1.0, vec![1.0, 2.0, 3.0, 4.0]));
        let mut r = rng::stream(1, "surrogate");
        let sur = fit_surrogate(
            &train,
            lin.clone(),
            2,
            &RidgePolynomial::new(1e-4).unwrap(),
            &mut r,
        )
        .unwrap();
        let x = [0.5, -0.5, 1.0, 2.0];
        assert_eq!(
            sur.value(Coalition::grand(4).unwrap(), &x).unwrap(),
            lin.evaluate(&x)
        );
        let first = sur.value(Coalition::new(5, 4).unwrap(), &x).unwrap();
        assert_eq!(first, sur.value(Coalition::new(5, 4).unwrap(), &x).unwrap());
        assert!(
            fit_surrogate(&train, lin, 0, &RidgePolynomial::new(1e-4).unwrap(), &mut r).is_err()
        );
    }

    #[test]
    fn empty_value_shared_between_paradigms() {
        let train = gaussian_train(3, 0.5, 100, 5);
        let f: Arc<dyn PredictiveModel> = Arc::new(LinearModel::new(0.3, vec![1.0, 1.0, -1.0]));
        let fam = RidgePolynomial::new(1e-4).unwrap();
        let sep = fit_separate(&train, f.clone(), &fam).unwrap();
        let mut r = rng::stream(2, "surrogate");
        let sur = fit_surrogate(&train, f, 3, &fam, &mut r).unwrap();
        let e = Coalition::empty(3).unwrap();
        assert_eq!(
            estimate_v_reg(RegressionContribution::Separate(&sep), e, &[9.0; 3]).unwrap(),
            estimate_v_reg(RegressionContribution::Surrogate(&sur), e, &[-9.0; 3]).unwrap()
        );
    }

    #[test]
    fn unknown_family_is_reported() {
        assert!(matches!(
            regression_family("forest", 1e-4, 25, true),
            Err(Error::UnknownName { .. })
        ));
        assert_eq!(
            regression_family("knn", 1e-4, 25, true).unwrap().name(),
            "knn"
        );
    }
}
