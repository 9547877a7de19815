//! End-to-end benchmark: data, model, truth, estimators, report, artifacts.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::config::{ExperimentConfig, ModelKind};
use crate::engine::{explain_batch, explain_observation, Explanation, TruthOracle};
use crate::error::Error;
use crate::estimators::{BuildContext, EstimatorRegistry, EstimatorSpec};
use crate::evaluation::{build_report, EvaluationReport, ReportSettings};
use crate::model::{analytic_model, fit_basis_model, PredictiveModel};
use crate::plots::emit_plots;
use crate::simdata::{make_ar_covariance, sample_dataset, Dataset, GaussianParams, Role};

/// Version tag written into every tabular artifact.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Setup,
    Data,
    Model,
    Truth,
    Estimator(String),
    Report,
    Output,
    Plots,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Setup => f.write_str("setup"),
            Stage::Data => f.write_str("data"),
            Stage::Model => f.write_str("model"),
            Stage::Truth => f.write_str("truth"),
            Stage::Estimator(label) => write!(f, "estimator `{label}`"),
            Stage::Report => f.write_str("report"),
            Stage::Output => f.write_str("output"),
            Stage::Plots => f.write_str("plots"),
        }
    }
}

/// A pipeline failure tagged with the stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<Error>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

/// Data, model and ground-truth distribution for one configuration.
pub struct Setup {
    pub dgp: GaussianParams,
    pub train: Dataset,
    pub test: Dataset,
    pub model: Arc<dyn PredictiveModel>,
    pub model_json: String,
    pub train_r2: Option<f64>,
}

impl Setup {
    pub fn test_rows(&self) -> Vec<Vec<f64>> {
        self.test.rows()
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Setup, PipelineError> {
    config.validate().at(Stage::Setup)?;
    let d = &config.data;
    let coef = config.coefficients.to_coefficients().at(Stage::Setup)?;
    let dgp = make_ar_covariance(d.n_features, d.rho)
        .and_then(|cov| GaussianParams::new(DVector::zeros(d.n_features), cov))
        .at(Stage::Data)?;
    let train = sample_dataset(&dgp, &coef, d.n_train, config.seed, Role::Train).at(Stage::Data)?;
    let test = sample_dataset(&dgp, &coef, d.n_test, config.seed, Role::Test).at(Stage::Data)?;
    let (model, model_json, train_r2): (Arc<dyn PredictiveModel>, String, Option<f64>) =
        match config.model.kind {
            ModelKind::FittedBasis => {
                let fitted =
                    fit_basis_model(&train, &coef.pairs, config.model.lambda).at(Stage::Model)?;
                let json = fitted.to_json().at(Stage::Model)?;
                let r2 = fitted.train_r2();
                (Arc::new(fitted), json, Some(r2))
            }
            ModelKind::Analytic => {
                let json = serde_json::to_string_pretty(&serde_json::json!({
                    "kind": "analytic",
                    "n_features": d.n_features,
                    "beta": coef.beta,
                    "gamma": coef.gamma,
                    "pairs": config.coefficients.pairs,
                }))
                .at(Stage::Model)?;
                (Arc::new(analytic_model(coef).at(Stage::Model)?), json, None)
            }
        };
    Ok(Setup {
        dgp,
        train,
        test,
        model,
        model_json,
        train_r2,
    })
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, PipelineError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
        .at(Stage::Setup)
}

/// Everything a run produced.
pub struct RunOutcome {
    pub report: EvaluationReport,
    pub truth: Vec<Explanation>,
    pub estimates: Vec<(String, Vec<Explanation>)>,
    pub files: Vec<PathBuf>,
}

/// Runs the whole benchmark and writes its artifacts to `config.output_dir`.
/// Progress goes to stderr; outputs never depend on timing or thread count.
pub fn run_experiment(
    config: &ExperimentConfig,
    registry: &EstimatorRegistry,
) -> Result<RunOutcome, PipelineError> {
    let pool = thread_pool(config.threads)?;
    pool.install(|| run_in_pool(config, registry))
}

fn run_in_pool(
    config: &ExperimentConfig,
    registry: &EstimatorRegistry,
) -> Result<RunOutcome, PipelineError> {
    let clock = Instant::now();
    let setup = prepare(config)?;
    let rows = setup.test_rows();
    eprintln!(
        "[{:>7.1}s] data and model ready ({} train, {} test)",
        clock.elapsed().as_secs_f64(),
        config.data.n_train,
        config.data.n_test
    );

    let oracle = TruthOracle::new(
        &setup.dgp,
        setup.model.as_ref(),
        config.truth.k_truth,
        config.seed,
    )
    .at(Stage::Truth)?;
    let truth = oracle.explain_batch(&rows).at(Stage::Truth)?;
    eprintln!("[{:>7.1}s] truth done", clock.elapsed().as_secs_f64());

    let ctx = BuildContext {
        train: &setup.train,
        model: setup.model.clone(),
        dgp: Some(&setup.dgp),
        seed: config.seed,
    };
    let mut estimates = Vec::with_capacity(config.estimators.len());
    let mut diagnostics = Vec::new();
    for spec in &config.estimators {
        let stage = || Stage::Estimator(spec.label.clone());
        let estimator = registry.build(spec, &ctx).at(stage())?;
        let explanations = explain_batch(estimator.as_ref(), &rows).at(stage())?;
        diagnostics.push((spec.label.clone(), estimator.diagnostics()));
        estimates.push((spec.label.clone(), explanations));
        eprintln!(
            "[{:>7.1}s] {} done",
            clock.elapsed().as_secs_f64(),
            spec.label
        );
    }

    let settings = ReportSettings {
        top_k: config.evaluation.top_k,
        permutation_shuffles: config.evaluation.permutation_shuffles,
        scaled_mae_floor: config.evaluation.scaled_mae_floor,
        seed: config.seed,
    };
    let report = build_report(
        &truth,
        &estimates,
        &setup.train,
        setup.test.features(),
        &settings,
    )
    .at(Stage::Report)?;

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).at(Stage::Output)?;
    let mut files = Vec::new();
    let path = dir.join("per_instance.csv");
    write_per_instance(&path, &report).at(Stage::Output)?;
    files.push(path);
    let path = dir.join("summary.json");
    write_summary(&path, config, &setup, &report, &diagnostics).at(Stage::Output)?;
    files.push(path);
    let path = dir.join("explanations.csv");
    write_explanations_csv(&path, &truth, &estimates).at(Stage::Output)?;
    files.push(path);
    let path = dir.join("explanations.json");
    write_explanations_json(&path, &truth, &estimates).at(Stage::Output)?;
    files.push(path);
    let path = dir.join("model.json");
    std::fs::write(&path, &setup.model_json).at(Stage::Output)?;
    files.push(path);

    files.extend(emit_plots(&report, &truth, &estimates, dir).at(Stage::Plots)?);
    eprintln!(
        "[{:>7.1}s] wrote {} files to {}",
        clock.elapsed().as_secs_f64(),
        files.len(),
        dir.display()
    );
    Ok(RunOutcome {
        report,
        truth,
        estimates,
        files,
    })
}

/// Explains one test observation with one configured estimator (matched by
/// label, then by method name).
pub fn explain_one(
    config: &ExperimentConfig,
    registry: &EstimatorRegistry,
    observation: usize,
    method: &str,
) -> Result<Explanation, PipelineError> {
    let pool = thread_pool(config.threads)?;
    pool.install(|| {
        let setup = prepare(config)?;
        let fallback;
        let spec = match config
            .estimators
            .iter()
            .find(|s| s.label == method)
            .or_else(|| config.estimators.iter().find(|s| s.method == method))
        {
            Some(spec) => spec,
            None => {
                fallback = EstimatorSpec::new(method);
                &fallback
            }
        };
        let stage = || Stage::Estimator(spec.label.clone());
        let rows = setup.test_rows();
        let x = rows.get(observation).ok_or_else(|| {
            Error::Parameter(format!(
                "observation {observation} out of range (test set has {} rows)",
                rows.len()
            ))
        });
        let x = x.at(Stage::Setup)?;
        let ctx = BuildContext {
            train: &setup.train,
            model: setup.model.clone(),
            dgp: Some(&setup.dgp),
            seed: config.seed,
        };
        let estimator = registry.build(spec, &ctx).at(stage())?;
        explain_observation(estimator.as_ref(), x, observation).at(stage())
    })
}

fn format_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn per_instance_columns(report: &EvaluationReport) -> Vec<String> {
    let mut cols: Vec<String> = [
        "observation",
        "distance",
        "mahalanobis",
        "prediction",
        "prediction_gap",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["mae", "outlier", "rank_agreement", "scaled_mae"] {
        cols.extend(
            report
                .methods
                .iter()
                .map(|m| format!("{prefix}_{}", m.method)),
        );
    }
    cols
}

/// One row per test observation. The first line is a `#` comment naming the
/// schema version and column order.
pub fn write_per_instance(path: &Path, report: &EvaluationReport) -> crate::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let columns = per_instance_columns(report);
    writeln!(
        out,
        "# condshap per_instance schema v{SCHEMA_VERSION}; scaled_mae_* is diagnostic only"
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&columns)?;
    for (i, obs) in report.observations.iter().enumerate() {
        let mut rec = vec![
            obs.to_string(),
            report.distance[i].to_string(),
            report.mahalanobis[i].to_string(),
            report.prediction[i].to_string(),
            report.prediction_gap[i].to_string(),
        ];
        rec.extend(
            report
                .methods
                .iter()
                .map(|m| m.per_instance_mae[i].to_string()),
        );
        rec.extend(
            report
                .methods
                .iter()
                .map(|m| u8::from(m.outliers.binary_search(&i).is_ok()).to_string()),
        );
        rec.extend(
            report
                .methods
                .iter()
                .map(|m| m.rank_agreement[i].to_string()),
        );
        rec.extend(report.methods.iter().map(|m| m.scaled_mae[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MethodSummary<'a> {
    method: &'a str,
    overall_mae: f64,
    spearman_mae_distance: Option<f64>,
    permutation_p_value_mae_distance: Option<f64>,
    spearman_mae_prediction_gap: Option<f64>,
    mean_rank_agreement: f64,
    outliers: &'a [usize],
    diagnostics: std::collections::BTreeMap<&'a str, f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    seed: u64,
    n_features: usize,
    n_train: usize,
    n_test: usize,
    k_truth: usize,
    model: &'static str,
    model_train_r2: Option<f64>,
    truth_mean_std_error: Option<f64>,
    top_k: usize,
    methods: Vec<MethodSummary<'a>>,
    method_correlations: &'a [crate::evaluation::PairCorrelation],
    estimators: &'a [EstimatorSpec],
}

fn write_summary(
    path: &Path,
    config: &ExperimentConfig,
    setup: &Setup,
    report: &EvaluationReport,
    diagnostics: &[(String, Vec<(String, f64)>)],
) -> crate::Result<()> {
    let methods = report
        .methods
        .iter()
        .zip(diagnostics)
        .map(|(m, (_, diag))| MethodSummary {
            method: &m.method,
            overall_mae: m.overall_mae,
            spearman_mae_distance: m.mae_vs_distance.spearman,
            permutation_p_value_mae_distance: m.mae_vs_distance.p_value,
            spearman_mae_prediction_gap: m.mae_vs_prediction_gap,
            mean_rank_agreement: m.mean_rank_agreement,
            outliers: &m.outliers,
            diagnostics: diag.iter().map(|(k, v)| (k.as_str(), *v)).collect(),
        })
        .collect();
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        n_features: config.data.n_features,
        n_train: config.data.n_train,
        n_test: config.data.n_test,
        k_truth: config.truth.k_truth,
        model: match config.model.kind {
            ModelKind::FittedBasis => "fitted_basis",
            ModelKind::Analytic => "analytic",
        },
        model_train_r2: setup.train_r2,
        truth_mean_std_error: report.truth_mean_std_error,
        top_k: report.top_k,
        methods,
        method_correlations: &report.method_correlations,
        estimators: &config.estimators,
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn all_explanations<'a>(
    truth: &'a [Explanation],
    estimates: &'a [(String, Vec<Explanation>)],
) -> impl Iterator<Item = (&'a str, &'a Explanation)> {
    truth.iter().map(|e| ("truth", e)).chain(
        estimates
            .iter()
            .flat_map(|(name, es)| es.iter().map(move |e| (name.as_str(), e))),
    )
}

/// `observation, estimator, prediction, phi0, phi1..phiM`, truth rows first.
pub fn write_explanations_csv(
    path: &Path,
    truth: &[Explanation],
    estimates: &[(String, Vec<Explanation>)],
) -> crate::Result<()> {
    let m = truth.first().map_or(0, |e| e.phi.len());
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# condshap explanations schema v{SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["observation", "estimator", "prediction", "phi0"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=m).map(|j| format!("phi{j}")));
    header.extend((1..=m).map(|j| format!("se{j}")));
    w.write_record(&header)?;
    for (name, e) in all_explanations(truth, estimates) {
        let mut rec = vec![
            e.observation.to_string(),
            name.to_string(),
            e.prediction.to_string(),
            e.phi0.to_string(),
        ];
        rec.extend(e.phi.iter().map(|v| v.to_string()));
        match &e.std_errors {
            Some(se) => rec.extend(se.iter().map(|v| format_opt(Some(*v)))),
            None => rec.extend(std::iter::repeat_n(String::new(), m)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_explanations_json(
    path: &Path,
    truth: &[Explanation],
    estimates: &[(String, Vec<Explanation>)],
) -> crate::Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        schema_version: u32,
        truth: &'a [Explanation],
        estimates: std::collections::BTreeMap<&'a str, &'a [Explanation]>,
    }
    let doc = Doc {
        schema_version: SCHEMA_VERSION,
        truth,
        estimates: estimates
            .iter()
            .map(|(n, e)| (n.as_str(), e.as_slice()))
            .collect(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &doc)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}
