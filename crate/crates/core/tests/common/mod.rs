//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// `ρ^|j-l|` built entry by entry.
pub fn ar_covariance(m: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |j, l| rho.powi((j as i32 - l as i32).abs()))
}

fn split(mask: u32, m: usize) -> (Vec<usize>, Vec<usize>) {
    (0..m).partition(|j| mask & (1 << j) != 0)
}

/// Conditional mean and covariance of `x_S̄ | x_S` through the precision
/// matrix `Q = Σ⁻¹`: mean `μ_S̄ - Q_S̄S̄⁻¹ Q_S̄S (x_S - μ_S)`, covariance
/// `Q_S̄S̄⁻¹`.
pub fn precision_conditional(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    mask: u32,
    x: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let m = mean.len();
    let q = cov.clone().try_inverse().expect("invertible covariance");
    let (inside, outside) = split(mask, m);
    let q_oo = DMatrix::from_fn(outside.len(), outside.len(), |a, b| {
        q[(outside[a], outside[b])]
    });
    let q_oi = DMatrix::from_fn(outside.len(), inside.len(), |a, b| {
        q[(outside[a], inside[b])]
    });
    let dev = DVector::from_fn(inside.len(), |a, _| x[inside[a]] - mean[inside[a]]);
    let q_oo_inv = q_oo.try_inverse().expect("invertible precision block");
    let shift = &q_oo_inv * (q_oi * dev);
    let cond_mean = DVector::from_fn(outside.len(), |a, _| mean[outside[a]] - shift[a]);
    (cond_mean, q_oo_inv)
}

/// `v(S)` for `f(x) = intercept + βᵀx` under a Gaussian feature law.
pub fn linear_gaussian_value(
    intercept: f64,
    beta: &[f64],
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    mask: u32,
    x: &[f64],
) -> f64 {
    let m = beta.len();
    let (inside, outside) = split(mask, m);
    let observed: f64 = inside.iter().map(|&j| beta[j] * x[j]).sum();
    if outside.is_empty() {
        return intercept + observed;
    }
    let (cond_mean, _) = precision_conditional(mean, cov, mask, x);
    let hidden: f64 = outside
        .iter()
        .enumerate()
        .map(|(a, &j)| beta[j] * cond_mean[a])
        .sum();
    intercept + observed + hidden
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values from a dense table with factorial weights.
pub fn shapley_from_table(m: usize, values: &[f64]) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let bit = 1u32 << j;
            (0..1u32 << m)
                .filter(|s| s & bit == 0)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    let w = factorial(size) * factorial(m - size - 1) / factorial(m);
                    w * (values[(s | bit) as usize] - values[s as usize])
                })
                .sum()
        })
        .collect()
}

/// Closed-form conditional Shapley values of a linear model.
pub fn linear_gaussian_shapley(
    intercept: f64,
    beta: &[f64],
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    x: &[f64],
) -> (f64, Vec<f64>) {
    let m = beta.len();
    let values: Vec<f64> = (0..1u32 << m)
        .map(|s| linear_gaussian_value(intercept, beta, mean, cov, s, x))
        .collect();
    (values[0], shapley_from_table(m, &values))
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
