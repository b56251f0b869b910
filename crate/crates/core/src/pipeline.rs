//! End-to-end experiment: simulate training passes, train the classifier
//! family, simulate a test campaign, localize with and without weighting,
//! and tabulate the comparison. Every artifact lands under one output
//! directory, summarized by a hash manifest, and the whole run is a pure
//! function of (config, seed).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{compare_report, CompareReport};
use crate::features::{
    correlation_report, extract_features, CorrelationReport, FeatureRow, LabelledSample,
    DEFAULT_STD_WINDOW,
};
use crate::geom::Point2;
use crate::io::config::{stage_tag, PipelineConfig};
use crate::io::files;
use crate::nn::{self, ClassifierMetrics, InputSet, MlpModel, TrainConfig};
use crate::rng::{derive_seed, Rng};
use crate::sim::{simulate_campaign, Environment, Pose, RangingSample};
use crate::solver::{solve_trajectory, weights_from_probabilities, PositionEstimate, TimedProblem};

#[derive(Debug)]
pub struct PipelineOutcome {
    pub correlations: CorrelationReport,
    pub train_metrics: Vec<(InputSet, ClassifierMetrics)>,
    /// One report per anchor subset, labelled `set<i>_<n>anchors`.
    pub reports: Vec<(String, CompareReport)>,
    pub manifest_path: PathBuf,
    pub files: Vec<PathBuf>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Pipeline {
        stage: name,
        source: Box::new(e),
    })
}

/// Splits labelled rows into train/held-out parts with a seeded shuffle.
pub fn seeded_split(
    rows: &[LabelledSample],
    train_fraction: f64,
    seed: u64,
) -> (Vec<LabelledSample>, Vec<LabelledSample>) {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let cut = ((rows.len() as f64) * train_fraction).round() as usize;
    let cut = cut.clamp(1, rows.len().saturating_sub(1).max(1));
    let train = order[..cut].iter().map(|&i| rows[i]).collect();
    let held = order[cut..].iter().map(|&i| rows[i]).collect();
    (train, held)
}

/// Labelled (features, label) pairs from extracted rows; unlabelled rows are
/// rejected because training requires supervision.
pub fn labelled_rows(rows: &[FeatureRow]) -> Result<Vec<LabelledSample>> {
    let out: Vec<_> = rows
        .iter()
        .filter_map(|r| r.label.map(|l| (r.features, l)))
        .collect();
    if out.is_empty() {
        return Err(Error::UnlabeledDataset);
    }
    Ok(out)
}

/// True tag-anchor distance for every sample of a campaign, aligned with the
/// sample order produced by [`simulate_campaign`].
pub fn true_ranges(env: &Environment, trajectory: &[Pose], samples: &[RangingSample]) -> Vec<f64> {
    let per_pose = env.anchors().len();
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pose = &trajectory[i / per_pose];
            let anchor = env.anchor_by_id(s.anchor_id).expect("anchor exists");
            pose.position.dist(anchor.position)
        })
        .collect()
}

/// Groups feature rows by timestamp into per-fix problems. `probabilities`
/// aligns with `rows`; `None` is the unweighted baseline (every weight 1).
pub fn group_problems(
    rows: &[FeatureRow],
    probabilities: Option<&[f64]>,
    env: &Environment,
    weight_floor: f64,
) -> Result<Vec<TimedProblem>> {
    if let Some(p) = probabilities {
        if p.len() != rows.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: p.len(),
            });
        }
    }
    let mut unknown: Vec<u32> = rows
        .iter()
        .filter(|r| env.anchor_by_id(r.anchor_id).is_none())
        .map(|r| r.anchor_id)
        .collect();
    unknown.sort_unstable();
    unknown.dedup();
    if !unknown.is_empty() {
        return Err(Error::UnknownAnchors { ids: unknown });
    }

    let mut problems: Vec<TimedProblem> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let weight = match probabilities {
            Some(p) => weights_from_probabilities(&p[i..=i], weight_floor)[0],
            None => 1.0,
        };
        let anchor = env.anchor_by_id(row.anchor_id).expect("checked above");
        match problems.last_mut() {
            Some(last) if last.t == row.t => {
                last.anchors.push((anchor.id, anchor.position));
                last.ranges.push(row.features.range);
                last.weights.push(weight);
            }
            Some(last) if row.t < last.t => {
                return Err(Error::UnsortedSamples { index: i });
            }
            _ => problems.push(TimedProblem {
                t: row.t,
                anchors: vec![(anchor.id, anchor.position)],
                ranges: vec![row.features.range],
                weights: vec![weight],
            }),
        }
    }
    Ok(problems)
}

/// LOS probability per feature row under `model`.
pub fn classify_rows(model: &MlpModel, rows: &[FeatureRow]) -> Result<Vec<f64>> {
    rows.iter().map(|r| model.forward(&r.features)).collect()
}

struct Artifacts {
    out_dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.out_dir.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.files.push(p.clone());
        Ok(p)
    }
}

pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    stage("config", config.validate())?;
    std::fs::create_dir_all(out_dir)?;
    let mut artifacts = Artifacts {
        out_dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };

    // -- training campaigns: one unobstructed pass, one obstructed pass ----
    let train_env = config.train.environment.build("train.environment")?;
    let los_traj = config
        .train
        .los_trajectory
        .build(train_env.bounds(), "train.los_trajectory")?;
    let nlos_traj = config
        .train
        .nlos_trajectory
        .build(train_env.bounds(), "train.nlos_trajectory")?;
    let los_samples = stage(
        "simulate-train",
        simulate_campaign(
            &train_env,
            &los_traj,
            &config.noise_for(stage_tag::TRAIN_LOS),
        ),
    )?;
    let nlos_samples = stage(
        "simulate-train",
        simulate_campaign(
            &train_env,
            &nlos_traj,
            &config.noise_for(stage_tag::TRAIN_NLOS),
        ),
    )?;
    files::write_dataset(&artifacts.path("train_los_dataset.csv")?, &los_samples)?;
    files::write_truth(&artifacts.path("train_los_truth.csv")?, &los_traj)?;
    files::write_dataset(&artifacts.path("train_nlos_dataset.csv")?, &nlos_samples)?;
    files::write_truth(&artifacts.path("train_nlos_truth.csv")?, &nlos_traj)?;

    // -- feature extraction (per pass, then pooled) -------------------------
    let los_rows = stage(
        "features",
        extract_features(&los_samples, DEFAULT_STD_WINDOW),
    )?;
    let nlos_rows = stage(
        "features",
        extract_features(&nlos_samples, DEFAULT_STD_WINDOW),
    )?;
    let mut train_rows = los_rows.clone();
    train_rows.extend(nlos_rows.iter().cloned());
    files::write_features(&artifacts.path("train_features.csv")?, &train_rows)?;

    let mut truths = true_ranges(&train_env, &los_traj, &los_samples);
    truths.extend(true_ranges(&train_env, &nlos_traj, &nlos_samples));
    let correlations = stage("features", correlation_report(&train_rows, &truths))?;
    files::write_correlations_csv(&artifacts.path("correlations.csv")?, &correlations)?;

    // -- classifier family ---------------------------------------------------
    let labelled = stage("train", labelled_rows(&train_rows))?;
    let train_cfg: TrainConfig = config.train_config();
    let (train_split, held_out) = seeded_split(
        &labelled,
        0.8,
        derive_seed(config.seed, &[stage_tag::SPLIT]),
    );
    let models = stage("train", nn::ablate_inputs(&train_split, &train_cfg))?;
    let mut train_metrics = Vec::new();
    {
        let mut metrics_csv = String::from("input_set,accuracy,precision\n");
        for (set, model) in &models {
            let metrics = stage("train", nn::evaluate(model, &held_out, 0.5))?;
            metrics_csv.push_str(&format!(
                "{},{},{}\n",
                set.name(),
                metrics.accuracy,
                metrics.precision
            ));
            nn::save_model(
                model,
                &artifacts.path(&format!("model_{}.txt", set.name()))?,
            )?;
            train_metrics.push((*set, metrics));
        }
        std::fs::write(&artifacts.path("train_metrics.csv")?, metrics_csv)?;
    }

    // -- test campaign -------------------------------------------------------
    let test_env = config.test.environment.build("test.environment")?;
    let test_traj = config
        .test
        .trajectory
        .build(test_env.bounds(), "test.trajectory")?;
    let test_samples = stage(
        "simulate-test",
        simulate_campaign(&test_env, &test_traj, &config.noise_for(stage_tag::TEST)),
    )?;
    files::write_dataset(&artifacts.path("test_dataset.csv")?, &test_samples)?;
    files::write_truth(&artifacts.path("test_truth.csv")?, &test_traj)?;
    let test_rows = stage(
        "features",
        extract_features(&test_samples, DEFAULT_STD_WINDOW),
    )?;
    let start = config.test.start_position.unwrap_or(test_traj[0].position);

    // probabilities per model over the full test set; subsets filter rows
    let mut probs_by_model: Vec<(InputSet, Vec<f64>)> = Vec::new();
    for (set, model) in &models {
        probs_by_model.push((*set, stage("localize", classify_rows(model, &test_rows))?));
    }

    // -- localization and evaluation per anchor subset -----------------------
    let mut reports = Vec::new();
    for (idx, subset) in config.subsets().iter().enumerate() {
        let label = format!("set{idx}_{}anchors", subset.len());
        let env_subset = stage("localize", test_env.with_anchor_subset(subset))?;
        let keep: Vec<usize> = test_rows
            .iter()
            .enumerate()
            .filter(|(_, r)| subset.contains(&r.anchor_id))
            .map(|(i, _)| i)
            .collect();
        let rows_subset: Vec<FeatureRow> = keep.iter().map(|&i| test_rows[i].clone()).collect();

        let solve_with = |probs: Option<Vec<f64>>| -> Result<Vec<(f64, PositionEstimate)>> {
            let problems = group_problems(
                &rows_subset,
                probs.as_deref(),
                &env_subset,
                config.solver.weight_floor,
            )?;
            solve_trajectory(&problems, start, Some(env_subset.bounds()), &config.solver)
        };

        let nwls = stage("localize", solve_with(None))?;
        files::write_estimates(
            &artifacts.path(&format!("{label}/estimates_nwls.csv"))?,
            &nwls,
        )?;
        let mut candidates = Vec::new();
        for (set, probs) in &probs_by_model {
            let subset_probs: Vec<f64> = keep.iter().map(|&i| probs[i]).collect();
            let estimates = stage("localize", solve_with(Some(subset_probs)))?;
            files::write_estimates(
                &artifacts.path(&format!("{label}/estimates_wls_{}.csv", set.name()))?,
                &estimates,
            )?;
            candidates.push((
                format!("wls_{}", set.name()),
                estimates
                    .iter()
                    .map(|(t, e)| (*t, e.position))
                    .collect::<Vec<(f64, Point2)>>(),
            ));
        }

        let nwls_positions: Vec<(f64, Point2)> =
            nwls.iter().map(|(t, e)| (*t, e.position)).collect();
        let report = stage(
            "evaluate",
            compare_report("nwls", &nwls_positions, &candidates, &test_traj),
        )?;
        std::fs::write(
            &artifacts.path(&format!("{label}/report.txt"))?,
            report.to_string(),
        )?;
        files::write_report_csv(&artifacts.path(&format!("{label}/report.csv"))?, &report)?;
        for row in &report.rows {
            files::write_cdf_csv(
                &artifacts.path(&format!("{label}/cdf_{}.csv", row.name))?,
                &row.cdf,
            )?;
        }
        reports.push((label, report));
    }

    let manifest_path = stage(
        "manifest",
        files::write_manifest(out_dir, "manifest.txt", &artifacts.files),
    )?;
    Ok(PipelineOutcome {
        correlations,
        train_metrics,
        reports,
        manifest_path,
        files: artifacts.files,
    })
}
