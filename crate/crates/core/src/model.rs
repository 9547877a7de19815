//! Predictive models being explained.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::simdata::{response_mean_unchecked, Dataset, ResponseCoefficients};

/// A model `f` mapping a feature vector to a real prediction.
///
/// `evaluate` is the hot path used by the estimators and assumes a
/// well-formed input; `predict` validates first.
pub trait PredictiveModel: Send + Sync {
    fn n_features(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::shape("model input", self.n_features(), x.len()));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {} in feature x{}",
                x[j],
                j + 1
            )));
        }
        Ok(self.evaluate(x))
    }

    fn batch_predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut row = vec![0.0; x.ncols()];
        let mut out = DVector::zeros(x.nrows());
        for i in 0..x.nrows() {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = x[(i, j)];
            }
            out[i] = self.predict(&row)?;
        }
        Ok(out)
    }
}

/// The noiseless data-generating mean used directly as `f`.
#[derive(Clone, Debug)]
pub struct AnalyticModel {
    coef: ResponseCoefficients,
}

pub fn analytic_model(coef: ResponseCoefficients) -> Result<AnalyticModel> {
    coef.validate(coef.n_features())?;
    Ok(AnalyticModel { coef })
}

impl AnalyticModel {
    pub fn coefficients(&self) -> &ResponseCoefficients {
        &self.coef
    }
}

impl PredictiveModel for AnalyticModel {
    fn n_features(&self) -> usize {
        self.coef.n_features()
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        response_mean_unchecked(x, &self.coef)
    }
}

/// `f(x) = intercept + weights · x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn new(intercept: f64, weights: Vec<f64>) -> Self {
        Self { intercept, weights }
    }

    pub fn constant(value: f64, n_features: usize) -> Self {
        Self::new(value, vec![0.0; n_features])
    }
}

impl PredictiveModel for LinearModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisTerm {
    Intercept,
    Cos(usize),
    /// `x_a x_b`
    Product(usize, usize),
    /// `x_a x_b²`
    ProductSquared(usize, usize),
    /// `x_a² x_b`
    SquaredProduct(usize, usize),
}

impl BasisTerm {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            BasisTerm::Intercept => 1.0,
            BasisTerm::Cos(j) => x[j].cos(),
            BasisTerm::Product(a, b) => x[a] * x[b],
            BasisTerm::ProductSquared(a, b) => x[a] * x[b] * x[b],
            BasisTerm::SquaredProduct(a, b) => x[a] * x[a] * x[b],
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BasisTerm::Intercept => "1".into(),
            BasisTerm::Cos(j) => format!("cos(x{})", j + 1),
            BasisTerm::Product(a, b) => format!("x{}*x{}", a + 1, b + 1),
            BasisTerm::ProductSquared(a, b) => format!("x{}*x{}^2", a + 1, b + 1),
            BasisTerm::SquaredProduct(a, b) => format!("x{}^2*x{}", a + 1, b + 1),
        }
    }
}

/// Intercept, one cosine per feature, and three cubic monomials per pair.
pub fn basis_terms(n_features: usize, pairs: &[(usize, usize)]) -> Vec<BasisTerm> {
    let mut terms = vec![BasisTerm::Intercept];
    terms.extend((0..n_features).map(BasisTerm::Cos));
    for &(a, b) in pairs {
        terms.push(BasisTerm::Product(a, b));
        terms.push(BasisTerm::ProductSquared(a, b));
        terms.push(BasisTerm::SquaredProduct(a, b));
    }
    terms
}

/// Ridge least squares on the cosine-plus-interaction basis.
#[derive(Clone, Debug)]
pub struct BasisModel {
    n_features: usize,
    terms: Vec<BasisTerm>,
    coefficients: Vec<f64>,
    lambda: f64,
    train_r2: f64,
}

#[derive(Serialize)]
struct BasisModelDocument<'a> {
    kind: &'static str,
    n_features: usize,
    lambda: f64,
    train_r2: f64,
    terms: Vec<String>,
    coefficients: &'a [f64],
}

impl BasisModel {
    pub fn from_coefficients(
        n_features: usize,
        terms: Vec<BasisTerm>,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        if terms.len() != coefficients.len() {
            return Err(Error::shape(
                "basis coefficients",
                terms.len(),
                coefficients.len(),
            ));
        }
        Ok(Self {
            n_features,
            terms,
            coefficients,
            lambda: 0.0,
            train_r2: f64::NAN,
        })
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn train_r2(&self) -> f64 {
        self.train_r2
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = BasisModelDocument {
            kind: "basis",
            n_features: self.n_features,
            lambda: self.lambda,
            train_r2: self.train_r2,
            terms: self.terms.iter().map(BasisTerm::label).collect(),
            coefficients: &self.coefficients,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

impl PredictiveModel for BasisModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(&self.coefficients)
            .map(|(t, c)| c * t.eval(x))
            .sum()
    }
}

/// Minimizes `||y - B c||² + lambda ||c||²` through the normal equations.
pub fn fit_basis_model(
    train: &Dataset,
    pairs: &[(usize, usize)],
    lambda: f64,
) -> Result<BasisModel> {
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Parameter(format!(
            "ridge penalty must be non-negative, got {lambda}"
        )));
    }
    let m = train.n_features();
    for &(a, b) in pairs {
        if a >= m || b >= m {
            return Err(Error::Parameter(format!(
                "interaction pair ({}, {}) out of range",
                a + 1,
                b + 1
            )));
        }
    }
    let terms = basis_terms(m, pairs);
    let p = terms.len();
    let n = train.n_rows();
    let mut design = DMatrix::zeros(n, p);
    let mut row = vec![0.0; m];
    for i in 0..n {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = train.features()[(i, j)];
        }
        for (k, t) in terms.iter().enumerate() {
            design[(i, k)] = t.eval(&row);
        }
    }
    let y = train.response();
    let mut gram = design.transpose() * &design;
    for k in 0..p {
        gram[(k, k)] += lambda;
    }
    let rhs = design.transpose() * y;
    let coef = linalg::solve_spd_or_pivoted(&gram, &rhs)?;

    let fitted = &design * &coef;
    let mean_y = y.mean();
    let ss_res: f64 = (y - &fitted).iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let train_r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };

    Ok(BasisModel {
        n_features: m,
        terms,
        coefficients: coef.iter().copied().collect(),
        lambda,
        train_r2,
    })
}
