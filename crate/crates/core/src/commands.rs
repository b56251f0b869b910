//! The toolkit's entry points, one per CLI subcommand. Each takes file paths
//! plus options and leaves the argument parsing to the binary.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::CompareReport;
use crate::features::{extract_features, DEFAULT_STD_WINDOW};
use crate::geom::Point2;
use crate::io::config::{stage_tag, PipelineConfig, ScenarioConfig};
use crate::io::files;
use crate::nn::{self, ClassifierMetrics, InputSet};
use crate::pipeline::{
    classify_rows, group_problems, labelled_rows, run_pipeline, seeded_split, PipelineOutcome,
};
use crate::rng::derive_seed;
use crate::sim::simulate_campaign;
use crate::solver::solve_trajectory;

/// Simulates the scenario and writes the dataset and ground-truth files.
/// Returns the number of samples written.
pub fn cmd_simulate(
    config_path: &Path,
    out_dataset: &Path,
    out_truth: &Path,
    seed_override: Option<u64>,
) -> Result<usize> {
    let mut config = ScenarioConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config = config.with_seed(seed);
    }
    let scenario = config.build()?;
    let samples = simulate_campaign(&scenario.environment, &scenario.trajectory, &scenario.noise)?;
    files::write_dataset(out_dataset, &samples)?;
    files::write_truth(out_truth, &scenario.trajectory)?;
    Ok(samples.len())
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub input_set: InputSet,
    pub metrics: ClassifierMetrics,
    pub train_samples: usize,
    pub held_out_samples: usize,
    pub loss_history: Vec<f64>,
}

/// Trains one model on a labelled dataset with a seeded 80/20 split and
/// writes the model file. Held-out metrics are returned for printing.
pub fn cmd_train(
    config_path: &Path,
    dataset_path: &Path,
    model_out: &Path,
    input_set: InputSet,
    seed_override: Option<u64>,
) -> Result<TrainOutcome> {
    let mut config = ScenarioConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config = config.with_seed(seed);
    }
    config.nn.validate()?;

    let samples = files::read_dataset(dataset_path)?;
    let rows = extract_features(&samples, DEFAULT_STD_WINDOW)?;
    let labelled = labelled_rows(&rows)?;
    let (train_split, held_out) = seeded_split(
        &labelled,
        0.8,
        derive_seed(config.seed, &[stage_tag::SPLIT]),
    );

    let mut model = nn::init_model(&config.nn, &input_set.features())?;
    let loss_history = nn::train(&mut model, &train_split, &config.nn)?;
    let metrics = nn::evaluate(&model, &held_out, 0.5)?;
    nn::save_model(&model, model_out)?;
    Ok(TrainOutcome {
        input_set,
        metrics,
        train_samples: train_split.len(),
        held_out_samples: held_out.len(),
        loss_history,
    })
}

/// Writes per-measurement LOS probabilities for a dataset under a trained
/// model. Returns the number of rows written.
pub fn cmd_classify(model_path: &Path, dataset_path: &Path, out_path: &Path) -> Result<usize> {
    let model = nn::load_model(model_path)?;
    let samples = files::read_dataset(dataset_path)?;
    let rows = extract_features(&samples, DEFAULT_STD_WINDOW)?;
    let probs = classify_rows(&model, &rows)?;
    let out: Vec<(f64, u32, f64)> = rows
        .iter()
        .zip(&probs)
        .map(|(r, p)| (r.t, r.anchor_id, *p))
        .collect();
    files::write_probabilities(out_path, &out)?;
    Ok(out.len())
}

#[derive(Debug, Default)]
pub struct LocalizeOptions {
    /// Model file for WLS weighting; `None` runs the unweighted baseline.
    pub model_path: Option<PathBuf>,
    /// Start position override; defaults to the scenario's start.
    pub start: Option<Point2>,
}

/// Localizes every timestamp of a dataset and writes the estimates CSV.
/// Returns the number of fixes written.
pub fn cmd_localize(
    config_path: &Path,
    dataset_path: &Path,
    opts: &LocalizeOptions,
    out_path: &Path,
) -> Result<usize> {
    let config = ScenarioConfig::load(config_path)?;
    let scenario = config.build()?;
    let samples = files::read_dataset(dataset_path)?;
    let rows = extract_features(&samples, DEFAULT_STD_WINDOW)?;

    let probabilities = match &opts.model_path {
        Some(path) => Some(classify_rows(&nn::load_model(path)?, &rows)?),
        None => None,
    };
    let problems = group_problems(
        &rows,
        probabilities.as_deref(),
        &scenario.environment,
        scenario.solver.weight_floor,
    )?;
    let start = opts.start.unwrap_or(scenario.start);
    let estimates = solve_trajectory(
        &problems,
        start,
        Some(scenario.environment.bounds()),
        &scenario.solver,
    )?;
    files::write_estimates(out_path, &estimates)?;
    Ok(estimates.len())
}

/// Compares estimate files against ground truth and writes the report table
/// (text and CSV) plus one CDF file per approach under `out_dir`.
pub fn cmd_evaluate(
    truth_path: &Path,
    baseline: (&str, &Path),
    candidates: &[(String, PathBuf)],
    out_dir: &Path,
) -> Result<CompareReport> {
    let truth = files::read_truth(truth_path)?;
    let read_positions = |path: &Path| -> Result<Vec<(f64, Point2)>> {
        Ok(files::read_estimates(path)?
            .into_iter()
            .map(|(t, e)| (t, e.position))
            .collect())
    };
    let baseline_estimates = read_positions(baseline.1)?;
    let mut candidate_estimates = Vec::new();
    for (name, path) in candidates {
        candidate_estimates.push((name.clone(), read_positions(path)?));
    }
    let report = crate::eval::compare_report(
        baseline.0,
        &baseline_estimates,
        &candidate_estimates,
        &truth,
    )?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("report.txt"), report.to_string())?;
    files::write_report_csv(&out_dir.join("report.csv"), &report)?;
    for row in &report.rows {
        let safe: String = row
            .name
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        files::write_cdf_csv(&out_dir.join(format!("cdf_{safe}.csv")), &row.cdf)?;
    }
    Ok(report)
}

/// Runs the full train-then-test experiment described by a pipeline config.
pub fn cmd_pipeline(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<PipelineOutcome> {
    let mut config = PipelineConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config = config.with_seed(seed);
    }
    run_pipeline(&config, out_dir)
}

/// Maps command errors involving unknown anchors to a friendlier message.
pub fn describe_error(e: &Error) -> String {
    match e {
        Error::UnknownAnchors { ids } => format!(
            "dataset references anchors not present in the config: {ids:?}; \
             check the [[environment.anchors]] list"
        ),
        other => other.to_string(),
    }
}
