//! Monte Carlo estimation of the contribution function: conditional samplers
//! generate completions `x_S̄ ~ p(x_S̄ | x_S = x*_S)` and `v̂(S)` is the mean
//! model output over the completed vectors.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{ContributionEstimator, Estimate};
use crate::coalition::{full_mask, merge_completion, Coalition};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::PredictiveModel;
use crate::rng;
use crate::simdata::{Dataset, GaussianParams};

/// `K` completions, one row per draw, one column per feature outside the
/// coalition (ascending feature index).
#[derive(Clone, Debug, PartialEq)]
pub struct Completions {
    rows: usize,
    width: usize,
    data: Vec<f64>,
}

impl Completions {
    pub fn new(rows: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * width, data.len());
        Self { rows, width, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.width..(k + 1) * self.width]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let width = self.width.max(1);
        let take = if self.width == 0 { 0 } else { self.rows };
        self.data.chunks_exact(width).take(take)
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.width];
        for row in self.iter() {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.rows.max(1) as f64);
        m
    }
}

/// Draws completions of the features outside a coalition.
pub trait ConditionalSampler: Send + Sync {
    fn name(&self) -> &'static str;

    fn n_features(&self) -> usize;

    fn sample(
        &self,
        coalition: Coalition,
        x_star: &[f64],
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Completions>;

    /// Exact `E[f]` under the sampler's unconditional law, when it is a finite
    /// set of atoms. `None` means `v̂(∅)` must be sampled.
    fn unconditional_mean(&self, _f: &dyn PredictiveModel) -> Option<f64> {
        None
    }

    fn diagnostics(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
}

/// Mean and covariance of `x_S̄ | x_S = x*_S`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalGaussian {
    pub cond_mean: DVector<f64>,
    pub cond_cov: DMatrix<f64>,
}

/// Coalition-specific pieces of the conditional law that do not depend on
/// `x*`: `gain = Σ_S̄S Σ_SS⁻¹` and the Cholesky factor of the conditional
/// covariance.
#[derive(Debug)]
struct ConditioningPlan {
    members: Vec<usize>,
    non_members: Vec<usize>,
    gain: DMatrix<f64>,
    cond_cov: DMatrix<f64>,
    cond_chol: DMatrix<f64>,
}

impl ConditioningPlan {
    fn build(params: &GaussianParams, coalition: Coalition) -> Result<Self> {
        let members = coalition.members();
        let non_members = coalition.non_members();
        let cov = params.covariance();
        let s_bar_s = linalg::submatrix(cov, &non_members, &members);
        let s_bar_s_bar = linalg::submatrix(cov, &non_members, &non_members);
        let (gain, cond_cov) = if members.is_empty() {
            (DMatrix::zeros(non_members.len(), 0), s_bar_s_bar)
        } else {
            let s_s = linalg::submatrix(cov, &members, &members);
            let chol = s_s.cholesky().ok_or(Error::Conditioning {
                mask: coalition.mask(),
            })?;
            // gain^T = Σ_SS⁻¹ Σ_SS̄
            let gain = chol.solve(&s_bar_s.transpose()).transpose();
            let cond_cov = &s_bar_s_bar - &gain * s_bar_s.transpose();
            let cond_cov = (&cond_cov + cond_cov.transpose()) * 0.5;
            (gain, cond_cov)
        };
        let cond_chol = linalg::cholesky_lower(&cond_cov).ok_or_else(|| {
            Error::NotSpd(format!("conditional covariance for coalition {coalition}"))
        })?;
        Ok(Self {
            members,
            non_members,
            gain,
            cond_cov,
            cond_chol,
        })
    }

    fn cond_mean(&self, params: &GaussianParams, x_star: &[f64]) -> DVector<f64> {
        let mu = params.mean();
        let mu_bar = linalg::subvector(mu, &self.non_members);
        if self.members.is_empty() {
            return mu_bar;
        }
        let dev = DVector::from_iterator(
            self.members.len(),
            self.members.iter().map(|&j| x_star[j] - mu[j]),
        );
        mu_bar + &self.gain * dev
    }
}

/// Exact Gaussian conditioning:
/// `μ̄ = μ_S̄ + Σ_S̄S Σ_SS⁻¹ (x*_S - μ_S)`, `Σ̄ = Σ_S̄S̄ - Σ_S̄S Σ_SS⁻¹ Σ_SS̄`.
pub fn gaussian_condition(
    params: &GaussianParams,
    coalition: Coalition,
    x_star: &[f64],
) -> Result<ConditionalGaussian> {
    check_dims(params.n_features(), coalition, x_star)?;
    if coalition.is_grand() {
        return Err(Error::Domain(
            "cannot condition on the grand coalition: nothing left to sample".into(),
        ));
    }
    let plan = ConditioningPlan::build(params, coalition)?;
    Ok(ConditionalGaussian {
        cond_mean: plan.cond_mean(params, x_star),
        cond_cov: plan.cond_cov,
    })
}

fn check_dims(n_features: usize, coalition: Coalition, x_star: &[f64]) -> Result<()> {
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

/// Parametric sampler: completions from the conditional multivariate normal.
pub struct GaussianSampler {
    params: GaussianParams,
    plans: Vec<OnceLock<Arc<ConditioningPlan>>>,
}

impl GaussianSampler {
    pub fn new(params: GaussianParams) -> Result<Self> {
        let m = params.n_features();
        crate::coalition::enumerate_coalitions(m)?; // capacity check
        let plans = (0..=full_mask(m)).map(|_| OnceLock::new()).collect();
        Ok(Self { params, plans })
    }

    /// Mean and covariance estimated from training features, with `jitter`
    /// added to the covariance diagonal.
    pub fn from_training(train: &Dataset, jitter: f64) -> Result<Self> {
        Self::new(GaussianParams::estimate(train.features(), jitter)?)
    }

    pub fn params(&self) -> &GaussianParams {
        &self.params
    }

    fn plan(&self, coalition: Coalition) -> Result<Arc<ConditioningPlan>> {
        let slot = &self.plans[coalition.mask() as usize];
        if let Some(p) = slot.get() {
            return Ok(p.clone());
        }
        let plan = Arc::new(ConditioningPlan::build(&self.params, coalition)?);
        Ok(slot.get_or_init(|| plan).clone())
    }

    /// Conditional mean and the Cholesky factor of the conditional covariance.
    pub(crate) fn conditional_factors(
        &self,
        coalition: Coalition,
        x_star: &[f64],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        check_dims(self.params.n_features(), coalition, x_star)?;
        let plan = self.plan(coalition)?;
        Ok((plan.cond_mean(&self.params, x_star), plan.cond_chol.clone()))
    }
}

impl ConditionalSampler for GaussianSampler {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn n_features(&self) -> usize {
        self.params.n_features()
    }

    fn sample(
        &self,
        coalition: Coalition,
        x_star: &[f64],
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Completions> {
        let (mean, chol) = self.conditional_factors(coalition, x_star)?;
        let width = mean.len();
        let mut data = Vec::with_capacity(k * width);
        let mut z = vec![0.0; width];
        for _ in 0..k {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            for r in 0..width {
                let mut acc = mean[r];
                for c in 0..=r {
                    acc += chol[(r, c)] * z[c];
                }
                data.push(acc);
            }
        }
        Ok(Completions::new(k, width, data))
    }
}

/// Training rows stored row-major for fast atom draws.
struct TrainingAtoms {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl TrainingAtoms {
    fn new(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let (n, m) = (train.n_rows(), train.n_features());
        let mut values = Vec::with_capacity(n * m);
        for i in 0..n {
            values.extend(train.features().row(i).iter());
        }
        Ok(Self { n, m, values })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    fn push_completion(&self, i: usize, coalition: Coalition, out: &mut Vec<f64>) {
        let row = self.row(i);
        out.extend(
            (0..self.m)
                .filter(|&j| !coalition.contains(j))
                .map(|j| row[j]),
        );
    }

    fn mean_of(&self, f: &dyn PredictiveModel) -> f64 {
        (0..self.n).map(|i| f.evaluate(self.row(i))).sum::<f64>() / self.n as f64
    }

    /// Uniform draws with replacement.
    fn draw_uniform(&self, coalition: Coalition, k: usize, rng: &mut dyn RngCore) -> Completions {
        let width = coalition.n_features() - coalition.size();
        let mut data = Vec::with_capacity(k * width);
        for _ in 0..k {
            let i = rng.random_range(0..self.n);
            self.push_completion(i, coalition, &mut data);
        }
        Completions::new(k, width, data)
    }
}

/// Completions copied from uniformly drawn training rows, ignoring `x*`.
pub struct IndependenceSampler {
    atoms: TrainingAtoms,
}

impl IndependenceSampler {
    pub fn new(train: &Dataset) -> Result<Self> {
        Ok(Self {
            atoms: TrainingAtoms::new(train)?,
        })
    }
}

impl ConditionalSampler for IndependenceSampler {
    fn name(&self) -> &'static str {
        "independence"
    }

    fn n_features(&self) -> usize {
        self.atoms.m
    }

    fn sample(
        &self,
        coalition: Coalition,
        x_star: &[f64],
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Completions> {
        check_dims(self.atoms.m, coalition, x_star)?;
        Ok(self.atoms.draw_uniform(coalition, k, rng))
    }

    fn unconditional_mean(&self, f: &dyn PredictiveModel) -> Option<f64> {
        Some(self.atoms.mean_of(f))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// The same kernel width for every coalition.
    Fixed(f64),
    /// `scale * sqrt(|S|)`.
    ScaledBySize(f64),
}

impl Bandwidth {
    fn for_size(&self, size: usize) -> f64 {
        match *self {
            Bandwidth::Fixed(h) => h,
            Bandwidth::ScaledBySize(scale) => scale * (size as f64).sqrt(),
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Bandwidth::Fixed(h) | Bandwidth::ScaledBySize(h) => h,
        }
    }
}

/// Training rows whitened on the coalition's coordinates
/// (`L_SS⁻¹ x_S` with `L_SS` the Cholesky factor of the training covariance
/// block), so Euclidean distance on them is Mahalanobis distance on `x_S`.
struct WhitenedCoalition {
    chol: DMatrix<f64>,
    width: usize,
    values: Vec<f64>,
}

/// Kernel-weighted training rows: row `i` is drawn with probability
/// proportional to `exp(-d_i² / (2 h²))`, `d_i` the Mahalanobis distance
/// between its coalition coordinates and `x*_S`.
pub struct EmpiricalSampler {
    atoms: TrainingAtoms,
    covariance: DMatrix<f64>,
    bandwidth: Bandwidth,
    whitened: Vec<OnceLock<Arc<WhitenedCoalition>>>,
    fallbacks: AtomicUsize,
}

impl EmpiricalSampler {
    pub fn new(train: &Dataset, bandwidth: Bandwidth) -> Result<Self> {
        if !(bandwidth.value() > 0.0) || !bandwidth.value().is_finite() {
            return Err(Error::Parameter(format!(
                "bandwidth must be positive, got {}",
                bandwidth.value()
            )));
        }
        let atoms = TrainingAtoms::new(train)?;
        let covariance = linalg::sample_covariance(train.features());
        let whitened = (0..=full_mask(atoms.m)).map(|_| OnceLock::new()).collect();
        Ok(Self {
            atoms,
            covariance,
            bandwidth,
            whitened,
            fallbacks: AtomicUsize::new(0),
        })
    }

    /// Number of evaluations where every kernel weight underflowed and the
    /// nearest training row was used instead.
    pub fn fallback_count(&self) -> usize {
        self.fallbacks.load(Ordering::Relaxed)
    }

    fn whitened(&self, coalition: Coalition) -> Result<Arc<WhitenedCoalition>> {
        let slot = &self.whitened[coalition.mask() as usize];
        if let Some(w) = slot.get() {
            return Ok(w.clone());
        }
        let members = coalition.members();
        let block = linalg::submatrix(&self.covariance, &members, &members);
        let chol = linalg::cholesky_lower(&block).ok_or(Error::Conditioning {
            mask: coalition.mask(),
        })?;
        let width = members.len();
        let mut values = Vec::with_capacity(self.atoms.n * width);
        let mut buf = vec![0.0; width];
        for i in 0..self.atoms.n {
            let row = self.atoms.row(i);
            for (b, &j) in buf.iter_mut().zip(&members) {
                *b = row[j];
            }
            forward_substitute(&chol, &mut buf);
            values.extend_from_slice(&buf);
        }
        let w = Arc::new(WhitenedCoalition {
            chol,
            width,
            values,
        });
        Ok(slot.get_or_init(|| w).clone())
    }
}

/// Solves `L y = b` in place for lower-triangular `L`.
fn forward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    for r in 0..b.len() {
        let mut acc = b[r];
        for c in 0..r {
            acc -= l[(r, c)] * b[c];
        }
        b[r] = acc / l[(r, r)];
    }
}

impl ConditionalSampler for EmpiricalSampler {
    fn name(&self) -> &'static str {
        "empirical"
    }

    fn n_features(&self) -> usize {
        self.atoms.m
    }

    fn sample(
        &self,
        coalition: Coalition,
        x_star: &[f64],
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Completions> {
        check_dims(self.atoms.m, coalition, x_star)?;
        if coalition.is_empty() {
            return Ok(self.atoms.draw_uniform(coalition, k, rng));
        }
        let w = self.whitened(coalition)?;
        let mut target: Vec<f64> = coalition.members().iter().map(|&j| x_star[j]).collect();
        forward_substitute(&w.chol, &mut target);

        let h = self.bandwidth.for_size(coalition.size());
        let inv_two_h2 = 1.0 / (2.0 * h * h);
        let mut cumulative = Vec::with_capacity(self.atoms.n);
        let mut total = 0.0;
        let mut nearest = (f64::INFINITY, 0usize);
        for (i, row) in w.values.chunks_exact(w.width).enumerate() {
            let d2: f64 = row
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 < nearest.0 {
                nearest = (d2, i);
            }
            total += (-d2 * inv_two_h2).exp();
            cumulative.push(total);
        }

        let width = coalition.n_features() - coalition.size();
        let mut data = Vec::with_capacity(k * width);
        if !(total > 0.0) || !total.is_finite() {
            self.fallbacks.fetch_add(1, Ordering::Relaxed);
            for _ in 0..k {
                self.atoms.push_completion(nearest.1, coalition, &mut data);
            }
            return Ok(Completions::new(k, width, data));
        }
        for _ in 0..k {
            let u = rng.random::<f64>() * total;
            let i = cumulative
                .partition_point(|&c| c <= u)
                .min(self.atoms.n - 1);
            self.atoms.push_completion(i, coalition, &mut data);
        }
        Ok(Completions::new(k, width, data))
    }

    fn unconditional_mean(&self, f: &dyn PredictiveModel) -> Option<f64> {
        Some(self.atoms.mean_of(f))
    }

    fn diagnostics(&self) -> Vec<(String, f64)> {
        vec![("nearest_row_fallbacks".into(), self.fallback_count() as f64)]
    }
}

/// `v̂(S)` with its Monte Carlo variance (`s² / K`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub variance: f64,
}

/// `v̂(S) = (1/K) Σ_k f(x_S̄^(k), x*_S)`. The grand coalition returns `f(x*)`
/// with no sampling.
pub fn estimate_v_mc(
    f: &dyn PredictiveModel,
    sampler: &dyn ConditionalSampler,
    coalition: Coalition,
    x_star: &[f64],
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<McEstimate> {
    if k == 0 {
        return Err(Error::Parameter(
            "Monte Carlo sample count must be at least 1".into(),
        ));
    }
    if coalition.is_grand() {
        return Ok(McEstimate {
            value: f.predict(x_star)?,
            variance: 0.0,
        });
    }
    let completions = sampler.sample(coalition, x_star, k, rng)?;
    let mut x = x_star.to_vec();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    // shift by f at the first draw to keep the variance sum well conditioned
    let mut shift = None;
    for completion in completions.iter() {
        merge_completion(&mut x, x_star, completion, coalition);
        let y = f.evaluate(&x);
        let s = *shift.get_or_insert(y);
        sum += y - s;
        sum_sq += (y - s) * (y - s);
    }
    let kf = k as f64;
    let shift = shift.unwrap_or(0.0);
    let mean = shift + sum / kf;
    let var = if k > 1 {
        ((sum_sq - sum * sum / kf) / (kf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        value: mean,
        variance: var / kf,
    })
}

/// Contribution estimator for the Monte Carlo paradigm. Every
/// (observation, coalition) pair draws from its own seeded substream.
pub struct MonteCarloEstimator {
    label: String,
    sampler: Box<dyn ConditionalSampler>,
    model: Arc<dyn PredictiveModel>,
    k: usize,
    seed: u64,
    purpose: String,
    empty: Estimate,
}

impl MonteCarloEstimator {
    pub fn new(
        label: impl Into<String>,
        sampler: Box<dyn ConditionalSampler>,
        model: Arc<dyn PredictiveModel>,
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        let label = label.into();
        if sampler.n_features() != model.n_features() {
            return Err(Error::shape(
                "sampler feature count",
                model.n_features(),
                sampler.n_features(),
            ));
        }
        let purpose = format!("estimator/{label}");
        let empty = match sampler.unconditional_mean(model.as_ref()) {
            Some(value) => Estimate {
                value,
                variance: None,
            },
            None => {
                let m = model.n_features();
                let mut rng = rng::substream(seed, &purpose, u64::MAX);
                let est = estimate_v_mc(
                    model.as_ref(),
                    sampler.as_ref(),
                    Coalition::empty(m)?,
                    &vec![0.0; m],
                    k,
                    &mut rng,
                )?;
                Estimate {
                    value: est.value,
                    variance: Some(est.variance),
                }
            }
        };
        Ok(Self {
            label,
            sampler,
            model,
            k,
            seed,
            purpose,
            empty,
        })
    }

    pub fn sampler(&self) -> &dyn ConditionalSampler {
        self.sampler.as_ref()
    }
}

impl ContributionEstimator for MonteCarloEstimator {
    fn name(&self) -> &str {
        &self.label
    }

    fn method(&self) -> &str {
        self.sampler.name()
    }

    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn model(&self) -> &dyn PredictiveModel {
        self.model.as_ref()
    }

    fn empty_value(&self) -> Estimate {
        self.empty
    }

    fn estimate(
        &self,
        coalition: Coalition,
        x_star: &[f64],
        observation: usize,
    ) -> Result<Estimate> {
        if coalition.is_empty() {
            return Ok(self.empty);
        }
        let mut rng =
            rng::evaluation_stream(self.seed, &self.purpose, observation, coalition.mask());
        let est = estimate_v_mc(
            self.model.as_ref(),
            self.sampler.as_ref(),
            coalition,
            x_star,
            self.k,
            &mut rng,
        )?;
        Ok(Estimate {
            value: est.value,
            variance: Some(est.variance),
        })
    }

    fn diagnostics(&self) -> Vec<(String, f64)> {
        self.sampler.diagnostics()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;
    use crate::simdata::{make_ar_covariance, Role};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn bivariate(rho: f64) -> GaussianParams {
        GaussianParams::new(DVector::zeros(2), make_ar_covariance(2, rho).unwrap()).unwrap()
    }

    fn small_train(rows: &[[f64; 3]]) -> Dataset {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Dataset::new(
            DMatrix::from_row_slice(rows.len(), 3, &flat),
            DVector::zeros(rows.len()),
            Role::Train,
        )
        .unwrap()
    }

    #[test]
    fn bivariate_conditioning_identity() {
        let rho = 0.6;
        let p = bivariate(rho);
        let s = Coalition::from_indices(&[0], 2).unwrap();
        let c = gaussian_condition(&p, s, &[1.5, 0.0]).unwrap();
        assert!((c.cond_mean[0] - rho * 1.5).abs() < 1e-14);
        assert!((c.cond_cov[(0, 0)] - (1.0 - rho * rho)).abs() < 1e-14);
    }

    #[test]
    fn empty_coalition_returns_unconditional() {
        let p = GaussianParams::new(
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            make_ar_covariance(3, 0.4).unwrap(),
        )
        .unwrap();
        let c = gaussian_condition(&p, Coalition::empty(3).unwrap(), &[9.0, 9.0, 9.0]).unwrap();
        assert_eq!(&c.cond_mean, p.mean());
        assert_eq!(&c.cond_cov, p.covariance());
        assert!(gaussian_condition(&p, Coalition::grand(3).unwrap(), &[0.0; 3]).is_err());
    }

    #[test]
    fn singular_block_names_the_coalition() {
        // features 1 and 2 perfectly correlated: Σ_SS singular for S = {1,2}
        let mut cov = DMatrix::identity(3, 3);
        cov[(0, 1)] = 1.0;
        cov[(1, 0)] = 1.0;
        let p = GaussianParams::from_parts_unchecked(DVector::zeros(3), cov);
        let s = Coalition::from_indices(&[0, 1], 3).unwrap();
        match gaussian_condition(&p, s, &[0.0; 3]) {
            Err(Error::Conditioning { mask }) => assert_eq!(mask, 0b011),
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn independence_with_single_row() {
        let train = small_train(&[[1.0, 2.0, 3.0]]);
        let sampler = IndependenceSampler::new(&train).unwrap();
        let s = Coalition::from_indices(&[1], 3).unwrap();
        let c = sampler.sample(s, &[0.0, 5.0, 0.0], 3, &mut rng(1)).unwrap();
        assert_eq!(c.rows(), 3);
        assert_eq!(c.width(), 2);
        for r in c.iter() {
            assert_eq!(r, &[1.0, 3.0]);
        }
    }

    #[test]
    fn independence_ignores_x_star() {
        let train = small_train(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]);
        let sampler = IndependenceSampler::new(&train).unwrap();
        let s = Coalition::from_indices(&[0], 3).unwrap();
        let a = sampler
            .sample(s, &[0.0, 0.0, 0.0], 20, &mut rng(4))
            .unwrap();
        let b = sampler
            .sample(s, &[5.0, -1.0, 2.0], 20, &mut rng(4))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let empty = Dataset::new(DMatrix::zeros(0, 2), DVector::zeros(0), Role::Train).unwrap();
        assert!(matches!(
            IndependenceSampler::new(&empty),
            Err(Error::Data(_))
        ));
        assert!(EmpiricalSampler::new(&empty, Bandwidth::Fixed(0.1)).is_err());
    }

    #[test]
    fn empirical_empty_coalition_matches_independence() {
        let p = GaussianParams::centered_ar(3, 0.5).unwrap();
        let coef = crate::simdata::ResponseCoefficients {
            beta: vec![0.0; 4],
            gamma: vec![],
            pairs: vec![],
            noise_sd: 1.0,
        };
        let train = crate::simdata::sample_dataset(&p, &coef, 50, 3, Role::Train).unwrap();
        let ind = IndependenceSampler::new(&train).unwrap();
        let emp = EmpiricalSampler::new(&train, Bandwidth::ScaledBySize(0.1)).unwrap();
        let s = Coalition::empty(3).unwrap();
        let a = ind.sample(s, &[0.0; 3], 30, &mut rng(9)).unwrap();
        let b = emp.sample(s, &[1.0; 3], 30, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_concentrates_on_matching_row() {
        let train = small_train(&[
            [0.0, 1.0, 2.0],
            [3.0, 4.0, 5.0],
            [-1.0, 7.0, 0.5],
            [2.0, -2.0, 1.0],
        ]);
        let sampler = EmpiricalSampler::new(&train, Bandwidth::Fixed(1e-6)).unwrap();
        let s = Coalition::from_indices(&[0, 2], 3).unwrap();
        let c = sampler
            .sample(s, &[3.0, 0.0, 5.0], 25, &mut rng(2))
            .unwrap();
        for r in c.iter() {
            assert_eq!(r, &[4.0]);
        }
        assert_eq!(sampler.fallback_count(), 0);
    }

    #[test]
    fn empirical_underflow_falls_back_to_nearest_row() {
        let train = small_train(&[
            [0.0, 1.0, 2.0],
            [3.0, 4.0, 5.0],
            [-1.0, 7.0, 0.5],
            [2.0, -2.0, 1.0],
        ]);
        let sampler = EmpiricalSampler::new(&train, Bandwidth::Fixed(1e-6)).unwrap();
        let s = Coalition::from_indices(&[0], 3).unwrap();
        let c = sampler.sample(s, &[2.9, 0.0, 0.0], 5, &mut rng(2)).unwrap();
        for r in c.iter() {
            assert_eq!(r, &[4.0, 5.0]);
        }
        assert_eq!(sampler.fallback_count(), 1);
        assert!(EmpiricalSampler::new(&train, Bandwidth::Fixed(0.0)).is_err());
    }

    #[test]
    fn constant_model_gives_constant_value() {
        let p = GaussianParams::centered_ar(3, 0.5).unwrap();
        let sampler = GaussianSampler::new(p).unwrap();
        let f = LinearModel::constant(2.5, 3);
        for mask in 0..8u32 {
            let s = Coalition::new(mask, 3).unwrap();
            let v = estimate_v_mc(
                &f,
                &sampler,
                s,
                &[0.3, -0.2, 1.0],
                17,
                &mut rng(mask as u64),
            )
            .unwrap();
            assert!((v.value - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn grand_coalition_is_exact() {
        let p = GaussianParams::centered_ar(3, 0.5).unwrap();
        let sampler = GaussianSampler::new(p).unwrap();
        let f = LinearModel::new(1.0, vec![1.0, 2.0, 3.0]);
        let x = [0.5, 0.25, -1.0];
        let v = estimate_v_mc(
            &f,
            &sampler,
            Coalition::grand(3).unwrap(),
            &x,
            3,
            &mut rng(0),
        )
        .unwrap();
        assert_eq!(v.value, f.evaluate(&x));
        assert_eq!(v.variance, 0.0);
        assert!(estimate_v_mc(
            &f,
            &sampler,
            Coalition::grand(3).unwrap(),
            &x,
            0,
            &mut rng(0)
        )
        .is_err());
    }
}
