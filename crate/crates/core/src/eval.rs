//! Position-error metrics: per-timestamp errors against ground truth,
//! mean/median/SD summaries, improvement percentages and empirical CDFs,
//! assembled into the NWLS-vs-WLS comparison table.

use std::fmt;

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::sim::Pose;

/// Mean/median/population-SD of a set of position errors, in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub n: usize,
}

/// Empirical CDF: sorted error values with cumulative probabilities k/n.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl CdfCurve {
    /// Fraction of errors <= x.
    pub fn at(&self, x: f64) -> f64 {
        let k = self.values.partition_point(|v| *v <= x);
        if k == 0 {
            0.0
        } else {
            self.probabilities[k - 1]
        }
    }
}

/// Euclidean error of each estimate against the ground-truth pose nearest in
/// time. Pairs further apart than half the truth's median sample period are
/// dropped; if nothing aligns, that is an error.
pub fn position_errors(estimates: &[(f64, Point2)], truth: &[Pose]) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    if truth.is_empty() {
        return Err(Error::Empty("ground truth"));
    }
    let tolerance = if truth.len() < 2 {
        f64::INFINITY
    } else {
        let mut dts: Vec<f64> = truth.windows(2).map(|w| w[1].t - w[0].t).collect();
        dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dts[dts.len() / 2] / 2.0
    };

    let mut errors = Vec::with_capacity(estimates.len());
    for (t, p) in estimates {
        // nearest pose by timestamp; truth is time sorted
        let idx = truth.partition_point(|pose| pose.t < *t);
        let mut best: Option<&Pose> = None;
        for cand in [idx.checked_sub(1), Some(idx)].into_iter().flatten() {
            if let Some(pose) = truth.get(cand) {
                if best.is_none_or(|b| (pose.t - t).abs() < (b.t - t).abs()) {
                    best = Some(pose);
                }
            }
        }
        let pose = best.expect("truth non-empty");
        if (pose.t - t).abs() <= tolerance {
            errors.push(p.dist(pose.position));
        }
    }
    if errors.is_empty() {
        return Err(Error::NoAlignablePairs { tolerance });
    }
    Ok(errors)
}

/// Mean, even-count-midpoint median, and population standard deviation.
pub fn summarize(errors: &[f64]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(Error::Empty("errors"));
    }
    let n = errors.len();
    let mean = errors.iter().sum::<f64>() / n as f64;
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n as f64;
    Ok(ErrorSummary {
        mean,
        median,
        sd: var.sqrt(),
        n,
    })
}

/// Relative mean-error reduction, in percent.
pub fn improvement(baseline_mean: f64, candidate_mean: f64) -> Result<f64> {
    if !baseline_mean.is_finite() || baseline_mean <= 0.0 {
        return Err(Error::NonPositiveBaseline(baseline_mean));
    }
    Ok(100.0 * (baseline_mean - candidate_mean) / baseline_mean)
}

/// Empirical CDF with probabilities k/n at the k-th smallest value.
pub fn cdf(errors: &[f64]) -> Result<CdfCurve> {
    if errors.is_empty() {
        return Err(Error::Empty("errors"));
    }
    let mut values = errors.to_vec();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    let probabilities = (1..=values.len()).map(|k| k as f64 / n).collect();
    Ok(CdfCurve {
        values,
        probabilities,
    })
}

/// One table row: an approach with its summary, improvement over the
/// baseline (None for the baseline itself) and CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachResult {
    pub name: String,
    pub summary: ErrorSummary,
    pub improvement_pct: Option<f64>,
    pub cdf: CdfCurve,
}

/// The full comparison: the unweighted baseline plus one row per candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<ApproachResult>,
}

impl CompareReport {
    pub fn baseline(&self) -> &ApproachResult {
        &self.rows[0]
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(8)
            .max("approach".len());
        writeln!(
            f,
            "{:<name_width$}  {:>7}  {:>7}  {:>7}  {:>11}",
            "approach", "mean", "median", "sd", "improvement"
        )?;
        for row in &self.rows {
            let improvement = match row.improvement_pct {
                None => "Nil".to_string(),
                Some(pct) => format!("{pct:.2}%"),
            };
            writeln!(
                f,
                "{:<name_width$}  {:>7.3}  {:>7.3}  {:>7.3}  {:>11}",
                row.name, row.summary.mean, row.summary.median, row.summary.sd, improvement
            )?;
        }
        Ok(())
    }
}

/// Builds the comparison table: baseline first with improvement `Nil`, then
/// one row per candidate in the given order.
pub fn compare_report(
    baseline_name: &str,
    baseline_estimates: &[(f64, Point2)],
    candidates: &[(String, Vec<(f64, Point2)>)],
    truth: &[Pose],
) -> Result<CompareReport> {
    let base_errors = position_errors(baseline_estimates, truth)?;
    let base_summary = summarize(&base_errors)?;
    let mut rows = vec![ApproachResult {
        name: baseline_name.to_string(),
        summary: base_summary,
        improvement_pct: None,
        cdf: cdf(&base_errors)?,
    }];
    for (name, estimates) in candidates {
        let errors = position_errors(estimates, truth)?;
        let summary = summarize(&errors)?;
        rows.push(ApproachResult {
            name: name.clone(),
            summary,
            improvement_pct: Some(improvement(base_summary.mean, summary.mean)?),
            cdf: cdf(&errors)?,
        });
    }
    Ok(CompareReport { rows })
}
