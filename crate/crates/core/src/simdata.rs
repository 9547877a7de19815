//! Synthetic experiment data: correlated Gaussian features and a response made
//! of cosine main effects plus cubic interaction terms.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Mean and covariance of a multivariate normal feature distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cholesky: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(Error::shape("covariance dimension", m, covariance.nrows()));
        }
        if !linalg::is_symmetric(&covariance, 1e-12) {
            return Err(Error::NotSpd("covariance is not symmetric".into()));
        }
        let cholesky = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?
            .l();
        Ok(Self {
            mean,
            covariance,
            cholesky,
        })
    }

    /// Skips validation; only for exercising failure paths downstream.
    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        let m = mean.len();
        Self {
            mean,
            covariance,
            cholesky: DMatrix::zeros(m, m),
        }
    }

    /// Zero mean with an AR(1)-style covariance.
    pub fn centered_ar(n_features: usize, rho: f64) -> Result<Self> {
        Self::new(
            DVector::zeros(n_features),
            make_ar_covariance(n_features, rho)?,
        )
    }

    /// Sample mean and covariance (plus `jitter` on the diagonal).
    pub fn estimate(features: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        if features.nrows() < 2 {
            return Err(Error::Data(
                "need at least two rows to estimate a covariance".into(),
            ));
        }
        let mean = linalg::column_means(features);
        let mut cov = linalg::sample_covariance(features);
        for i in 0..cov.nrows() {
            cov[(i, i)] += jitter;
        }
        Self::new(mean, cov)
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.cholesky
    }
}

/// `Σ_jl = rho^|j-l|`.
pub fn make_ar_covariance(n_features: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Parameter(format!(
            "|rho| must be below 1, got {rho}"
        )));
    }
    if n_features == 0 {
        return Err(Error::Parameter(
            "covariance needs at least one feature".into(),
        ));
    }
    Ok(DMatrix::from_fn(n_features, n_features, |j, l| {
        rho.powi(j.abs_diff(l) as i32)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

/// Feature matrix (one row per observation) and response vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    response: DVector<f64>,
    role: Role,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, response: DVector<f64>, role: Role) -> Result<Self> {
        if features.nrows() != response.len() {
            return Err(Error::shape(
                "dataset rows",
                features.nrows(),
                response.len(),
            ));
        }
        Ok(Self {
            features,
            response,
            role,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    /// All feature rows, row-major.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| self.row(i)).collect()
    }

    /// Writes `x1..xM,y` with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.n_features()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut record: Vec<String> =
                self.features.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.response[i].to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, role: Role) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let n_cols = header.len();
        if n_cols < 2 || &header[n_cols - 1] != "y" {
            return Err(Error::Data("CSV header must be x1..xM,y".into()));
        }
        for (j, name) in header.iter().take(n_cols - 1).enumerate() {
            if name != format!("x{}", j + 1) {
                return Err(Error::Data(format!(
                    "unexpected column `{name}` at position {}",
                    j + 1
                )));
            }
        }
        let m = n_cols - 1;
        let mut values = Vec::new();
        let mut response = Vec::new();
        for record in r.records() {
            let record = record?;
            if record.len() != n_cols {
                return Err(Error::shape("CSV record width", n_cols, record.len()));
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("cannot parse `{field}` as a number")))?;
                if j < m {
                    values.push(v);
                } else {
                    response.push(v);
                }
            }
        }
        let n = response.len();
        Self::new(
            DMatrix::from_row_slice(n, m, &values),
            DVector::from_vec(response),
            role,
        )
    }
}

/// Coefficients of `y = β0 + Σ β_j cos(x_j) + Σ_p γ_p g(x_a, x_b) + ε`, with one
/// `γ` per interaction pair. Pairs hold zero-based feature indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseCoefficients {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub noise_sd: f64,
}

pub const DEFAULT_BETA: [f64; 9] = [1.0, 0.2, -0.8, 1.0, 0.5, -0.8, 0.6, -0.7, -0.6];
pub const DEFAULT_GAMMA: [f64; 2] = [0.8, -1.0];
pub const DEFAULT_PAIRS: [(usize, usize); 2] = [(0, 1), (2, 3)];

impl ResponseCoefficients {
    /// The eight-feature experiment: intercept 1.0, cosine weights
    /// `0.2, -0.8, 1.0, 0.5, -0.8, 0.6, -0.7, -0.6`, interactions on
    /// features (1,2) and (3,4) with weights 0.8 and -1.0, unit noise.
    pub fn eight_feature_default() -> Self {
        Self {
            beta: DEFAULT_BETA.to_vec(),
            gamma: DEFAULT_GAMMA.to_vec(),
            pairs: DEFAULT_PAIRS.to_vec(),
            noise_sd: 1.0,
        }
    }

    pub fn n_features(&self) -> usize {
        self.beta.len().saturating_sub(1)
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.beta.len() != n_features + 1 {
            return Err(Error::shape(
                "beta length (M + 1)",
                n_features + 1,
                self.beta.len(),
            ));
        }
        if self.gamma.len() != self.pairs.len() {
            return Err(Error::shape(
                "gamma length (one per pair)",
                self.pairs.len(),
                self.gamma.len(),
            ));
        }
        for &(a, b) in &self.pairs {
            if a >= n_features || b >= n_features || a == b {
                return Err(Error::Parameter(format!(
                    "interaction pair ({}, {}) invalid for {n_features} features",
                    a + 1,
                    b + 1
                )));
            }
        }
        if !(self.noise_sd > 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::Parameter(format!(
                "noise_sd must be positive, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

/// `g(a, b) = a b + a b² + b a²`, evaluated as `a b (1 + (a + b))` so the
/// result is bitwise symmetric.
#[inline]
pub fn interaction_g(xj: f64, xk: f64) -> f64 {
    xj * xk * (1.0 + (xj + xk))
}

#[inline]
pub(crate) fn response_mean_unchecked(x: &[f64], coef: &ResponseCoefficients) -> f64 {
    let main: f64 = coef.beta[1..].iter().zip(x).map(|(b, v)| b * v.cos()).sum();
    let inter: f64 = coef
        .gamma
        .iter()
        .zip(&coef.pairs)
        .map(|(g, &(a, b))| g * interaction_g(x[a], x[b]))
        .sum();
    coef.beta[0] + main + inter
}

/// Noiseless conditional mean of the response.
pub fn response_mean(x: &[f64], coef: &ResponseCoefficients) -> Result<f64> {
    coef.validate(x.len())?;
    Ok(response_mean_unchecked(x, coef))
}

/// Draws `n` rows `x = μ + L z` from one sequential stream; each row's noise
/// draw follows its feature draws.
pub fn sample_dataset(
    params: &GaussianParams,
    coef: &ResponseCoefficients,
    n: usize,
    seed: u64,
    role: Role,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Parameter("dataset size must be at least 1".into()));
    }
    let m = params.n_features();
    coef.validate(m)?;
    let purpose = match role {
        Role::Train => "dataset/train",
        Role::Test => "dataset/test",
    };
    let mut rng = rng::stream(seed, purpose);
    let l = params.cholesky();
    let mut values = Vec::with_capacity(n * m);
    let mut response = Vec::with_capacity(n);
    let mut z = vec![0.0; m];
    let mut x = vec![0.0; m];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for j in 0..m {
            let mut acc = params.mean()[j];
            for k in 0..=j {
                acc += l[(j, k)] * z[k];
            }
            x[j] = acc;
        }
        let eps: f64 = rng.sample(StandardNormal);
        response.push(response_mean_unchecked(&x, coef) + coef.noise_sd * eps);
        values.extend_from_slice(&x);
    }
    Dataset::new(
        DMatrix::from_row_slice(n, m, &values),
        DVector::from_vec(response),
        role,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ar_covariance_examples() {
        let c = make_ar_covariance(2, 0.5).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        assert_eq!(make_ar_covariance(3, 0.0).unwrap(), DMatrix::identity(3, 3));
        assert_eq!(make_ar_covariance(3, 0.5).unwrap()[(0, 2)], 0.25);
        assert!(matches!(
            make_ar_covariance(3, 1.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            make_ar_covariance(3, -1.2),
            Err(Error::Parameter(_))
        ));
        assert!(GaussianParams::centered_ar(8, 0.5).is_ok());
    }

    #[test]
    fn gaussian_params_reject_bad_covariance() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            GaussianParams::new(DVector::zeros(2), asym),
            Err(Error::NotSpd(_))
        ));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianParams::new(DVector::zeros(2), indefinite),
            Err(Error::NotSpd(_))
        ));
    }

    #[test]
    fn interaction_examples() {
        assert_eq!(interaction_g(0.0, 5.0), 0.0);
        assert_eq!(interaction_g(1.0, 1.0), 3.0);
        // independent evaluation of a b + a b^2 + b a^2 at (2, -1)
        let (a, b) = (2.0f64, -1.0f64);
        let oracle = a * b + a * b.powi(2) + b * a.powi(2);
        assert_eq!(oracle, -4.0);
        assert_eq!(interaction_g(2.0, -1.0), oracle);
    }

    #[test]
    fn response_mean_examples() {
        let coef = ResponseCoefficients::eight_feature_default();
        let beta_sum: f64 = DEFAULT_BETA.iter().sum();
        assert!((beta_sum - 0.4).abs() < 1e-12);
        assert!((response_mean(&[0.0; 8], &coef).unwrap() - 0.4).abs() < 1e-12);

        let mut x = [0.0; 8];
        x[0] = 1.0;
        x[1] = 1.0;
        let oracle =
            1.0 + (0.2 - 0.8) * 1f64.cos() + (1.0 + 0.5 - 0.8 + 0.6 - 0.7 - 0.6) + 0.8 * 3.0;
        assert!((response_mean(&x, &coef).unwrap() - oracle).abs() < 1e-12);

        let flat = ResponseCoefficients {
            beta: vec![2.5, 0.0, 0.0],
            gamma: vec![0.0],
            pairs: vec![(0, 1)],
            noise_sd: 1.0,
        };
        assert_eq!(response_mean(&[3.0, -7.0], &flat).unwrap(), 2.5);
        assert!(matches!(
            response_mean(&[0.0; 3], &coef),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = GaussianParams::centered_ar(8, 0.5).unwrap();
        let coef = ResponseCoefficients::eight_feature_default();
        let a = sample_dataset(&p, &coef, 50, 7, Role::Train).unwrap();
        let b = sample_dataset(&p, &coef, 50, 7, Role::Train).unwrap();
        assert_eq!(a, b);
        let c = sample_dataset(&p, &coef, 50, 8, Role::Train).unwrap();
        assert_ne!(a.features(), c.features());
        assert!(sample_dataset(&p, &coef, 0, 7, Role::Train).is_err());
    }

    #[test]
    fn large_sample_moments_match_parameters() {
        let p = GaussianParams::centered_ar(8, 0.5).unwrap();
        let coef = ResponseCoefficients::eight_feature_default();
        let d = sample_dataset(&p, &coef, 100_000, 11, Role::Train).unwrap();
        let mean = linalg::column_means(d.features());
        for j in 0..8 {
            assert!(mean[j].abs() < 0.02, "column {j} mean {}", mean[j]);
        }
        let cov = linalg::sample_covariance(d.features());
        for j in 0..8 {
            for l in 0..8 {
                let target = p.covariance()[(j, l)];
                assert!((cov[(j, l)] - target).abs() < 0.03, "({j},{l})");
            }
        }
        let corr = cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt();
        assert!((corr - 0.5).abs() < 0.02);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let p = GaussianParams::centered_ar(3, 0.2).unwrap();
        let coef = ResponseCoefficients {
            beta: vec![1.0, 0.5, -0.5, 0.25],
            gamma: vec![1.0],
            pairs: vec![(0, 2)],
            noise_sd: 0.5,
        };
        let d = sample_dataset(&p, &coef, 20, 3, Role::Test).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x1,x2,x3,y\n"));
        let back = Dataset::read_csv(buf.as_slice(), Role::Test).unwrap();
        assert_eq!(back, d);
        assert!(Dataset::read_csv("a,b\n1,2\n".as_bytes(), Role::Test).is_err());
    }

    proptest! {
        #[test]
        fn interaction_is_symmetric(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            prop_assert_eq!(interaction_g(a, b), interaction_g(b, a));
        }
    }
}
