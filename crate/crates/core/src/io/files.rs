//! CSV file formats and the output manifest.
//!
//! All data files are newline-terminated UTF-8 CSV with an exact header and
//! decimal-point floats printed in shortest round-trip form, so a file read
//! back parses to the identical f64 bits. Schemas:
//!
//! * dataset: `t,anchor_id,range,rx_rssi,fp_rssi,label` (label optional;
//!   empty cells mean unlabelled)
//! * ground truth: `t,x,y`
//! * features: `t,anchor_id,range,rx_rssi,fp_rssi,rssd,range_std,label`
//! * probabilities: `t,anchor_id,p_los`
//! * estimates: `t,x,y,cost,iterations,converged`
//! * report: `approach,mean,median,sd,improvement_pct`
//! * CDF: `error,probability`
//!
//! The manifest lists every artifact of a pipeline run with its SHA-256
//! digest and byte size, sorted by path.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::CompareReport;
use crate::features::FeatureRow;
use crate::features::FeatureVector;
use crate::geom::Point2;
use crate::sim::{Pose, RangingSample};
use crate::solver::PositionEstimate;

pub const DATASET_HEADER: &str = "t,anchor_id,range,rx_rssi,fp_rssi,label";
pub const DATASET_HEADER_UNLABELLED: &str = "t,anchor_id,range,rx_rssi,fp_rssi";
pub const TRUTH_HEADER: &str = "t,x,y";
pub const FEATURES_HEADER: &str = "t,anchor_id,range,rx_rssi,fp_rssi,rssd,range_std,label";
pub const PROBABILITIES_HEADER: &str = "t,anchor_id,p_los";
pub const ESTIMATES_HEADER: &str = "t,x,y,cost,iterations,converged";
pub const REPORT_HEADER: &str = "approach,mean,median,sd,improvement_pct";
pub const CDF_HEADER: &str = "error,probability";

fn csv_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| csv_err(path, line, format!("bad {field} value {tok:?}")))
}

fn parse_u32(path: &Path, line: usize, field: &str, tok: &str) -> Result<u32> {
    tok.parse::<u32>()
        .map_err(|_| csv_err(path, line, format!("bad {field} value {tok:?}")))
}

fn split_line(line: &str) -> Vec<&str> {
    line.trim_end_matches('\r').split(',').collect()
}

pub fn write_dataset(path: &Path, samples: &[RangingSample]) -> Result<()> {
    let labelled = samples.iter().any(|s| s.los_label.is_some());
    let mut out = String::new();
    out.push_str(if labelled {
        DATASET_HEADER
    } else {
        DATASET_HEADER_UNLABELLED
    });
    out.push('\n');
    for s in samples {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            s.t, s.anchor_id, s.range, s.rx_rssi, s.fp_rssi
        );
        if labelled {
            match s.los_label {
                Some(l) => {
                    let _ = write!(out, ",{l}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    Ok(std::fs::write(path, out)?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<RangingSample>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| csv_err(path, 1, "empty file"))?;
    let labelled = match header.trim_end_matches('\r') {
        DATASET_HEADER => true,
        DATASET_HEADER_UNLABELLED => false,
        other => {
            return Err(csv_err(
                path,
                1,
                format!("unexpected header {other:?}, expected {DATASET_HEADER:?}"),
            ))
        }
    };
    let mut samples = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim_end_matches('\r').is_empty() {
            continue;
        }
        let fields = split_line(line);
        let expected = if labelled { 6 } else { 5 };
        if fields.len() != expected {
            return Err(csv_err(
                path,
                lineno,
                format!("expected {expected} fields, got {}", fields.len()),
            ));
        }
        let range = parse_f64(path, lineno, "range", fields[2])?;
        if !range.is_finite() || range < 0.0 {
            return Err(csv_err(
                path,
                lineno,
                format!("range must be finite and >= 0, got {range}"),
            ));
        }
        let los_label = if labelled && !fields[5].is_empty() {
            match fields[5] {
                "0" => Some(0),
                "1" => Some(1),
                other => {
                    return Err(csv_err(
                        path,
                        lineno,
                        format!("label must be 0 or 1, got {other:?}"),
                    ))
                }
            }
        } else {
            None
        };
        samples.push(RangingSample {
            t: parse_f64(path, lineno, "t", fields[0])?,
            anchor_id: parse_u32(path, lineno, "anchor_id", fields[1])?,
            range,
            rx_rssi: parse_f64(path, lineno, "rx_rssi", fields[3])?,
            fp_rssi: parse_f64(path, lineno, "fp_rssi", fields[4])?,
            los_label,
        });
    }
    Ok(samples)
}

pub fn write_truth(path: &Path, poses: &[Pose]) -> Result<()> {
    let mut out = String::from(TRUTH_HEADER);
    out.push('\n');
    for p in poses {
        let _ = writeln!(out, "{},{},{}", p.t, p.position.x, p.position.y);
    }
    Ok(std::fs::write(path, out)?)
}

pub fn read_truth(path: &Path) -> Result<Vec<Pose>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| csv_err(path, 1, "empty file"))?;
    if header.trim_end_matches('\r') != TRUTH_HEADER {
        return Err(csv_err(
            path,
            1,
            format!("unexpected header, expected {TRUTH_HEADER:?}"),
        ));
    }
    let mut poses: Vec<Pose> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim_end_matches('\r').is_empty() {
            continue;
        }
        let fields = split_line(line);
        if fields.len() != 3 {
            return Err(csv_err(path, lineno, "expected 3 fields"));
        }
        let t = parse_f64(path, lineno, "t", fields[0])?;
        if let Some(prev) = poses.last() {
            if t <= prev.t {
                return Err(csv_err(path, lineno, "timestamps must strictly increase"));
            }
        }
        poses.push(Pose {
            t,
            position: Point2::new(
                parse_f64(path, lineno, "x", fields[1])?,
                parse_f64(path, lineno, "y", fields[2])?,
            ),
        });
    }
    Ok(poses)
}

pub fn write_features(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let mut out = String::from(FEATURES_HEADER);
    out.push('\n');
    for r in rows {
        let f = &r.features;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},",
            r.t, r.anchor_id, f.range, f.rx_rssi, f.fp_rssi, f.rssd, f.range_std
        );
        if let Some(l) = r.label {
            let _ = write!(out, "{l}");
        }
        out.push('\n');
    }
    Ok(std::fs::write(path, out)?)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| csv_err(path, 1, "empty file"))?;
    if header.trim_end_matches('\r') != FEATURES_HEADER {
        return Err(csv_err(
            path,
            1,
            format!("unexpected header, expected {FEATURES_HEADER:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim_end_matches('\r').is_empty() {
            continue;
        }
        let fields = split_line(line);
        if fields.len() != 8 {
            return Err(csv_err(path, lineno, "expected 8 fields"));
        }
        let label = match fields[7] {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => {
                return Err(csv_err(
                    path,
                    lineno,
                    format!("label must be 0 or 1, got {other:?}"),
                ))
            }
        };
        rows.push(FeatureRow {
            t: parse_f64(path, lineno, "t", fields[0])?,
            anchor_id: parse_u32(path, lineno, "anchor_id", fields[1])?,
            features: FeatureVector {
                range: parse_f64(path, lineno, "range", fields[2])?,
                rx_rssi: parse_f64(path, lineno, "rx_rssi", fields[3])?,
                fp_rssi: parse_f64(path, lineno, "fp_rssi", fields[4])?,
                rssd: parse_f64(path, lineno, "rssd", fields[5])?,
                range_std: parse_f64(path, lineno, "range_std", fields[6])?,
            },
            label,
        });
    }
    Ok(rows)
}

pub fn write_probabilities(path: &Path, rows: &[(f64, u32, f64)]) -> Result<()> {
    let mut out = String::from(PROBABILITIES_HEADER);
    out.push('\n');
    for (t, id, p) in rows {
        let _ = writeln!(out, "{t},{id},{p}");
    }
    Ok(std::fs::write(path, out)?)
}

pub fn read_probabilities(path: &Path) -> Result<Vec<(f64, u32, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| csv_err(path, 1, "empty file"))?;
    if header.trim_end_matches('\r') != PROBABILITIES_HEADER {
        return Err(csv_err(
            path,
            1,
            format!("unexpected header, expected {PROBABILITIES_HEADER:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim_end_matches('\r').is_empty() {
            continue;
        }
        let fields = split_line(line);
        if fields.len() != 3 {
            return Err(csv_err(path, lineno, "expected 3 fields"));
        }
        let p = parse_f64(path, lineno, "p_los", fields[2])?;
        if !(0.0..=1.0).contains(&p) {
            return Err(csv_err(path, lineno, format!("p_los out of [0, 1]: {p}")));
        }
        rows.push((
            parse_f64(path, lineno, "t", fields[0])?,
            parse_u32(path, lineno, "anchor_id", fields[1])?,
            p,
        ));
    }
    Ok(rows)
}

pub fn write_estimates(path: &Path, estimates: &[(f64, PositionEstimate)]) -> Result<()> {
    let mut out = String::from(ESTIMATES_HEADER);
    out.push('\n');
    for (t, e) in estimates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t, e.position.x, e.position.y, e.cost, e.iterations, e.converged
        );
    }
    Ok(std::fs::write(path, out)?)
}

pub fn read_estimates(path: &Path) -> Result<Vec<(f64, PositionEstimate)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| csv_err(path, 1, "empty file"))?;
    if header.trim_end_matches('\r') != ESTIMATES_HEADER {
        return Err(csv_err(
            path,
            1,
            format!("unexpected header, expected {ESTIMATES_HEADER:?}"),
        ));
    }
    let mut estimates = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim_end_matches('\r').is_empty() {
            continue;
        }
        let fields = split_line(line);
        if fields.len() != 6 {
            return Err(csv_err(path, lineno, "expected 6 fields"));
        }
        let converged = match fields[5] {
            "true" => true,
            "false" => false,
            other => {
                return Err(csv_err(
                    path,
                    lineno,
                    format!("bad converged value {other:?}"),
                ))
            }
        };
        estimates.push((
            parse_f64(path, lineno, "t", fields[0])?,
            PositionEstimate {
                position: Point2::new(
                    parse_f64(path, lineno, "x", fields[1])?,
                    parse_f64(path, lineno, "y", fields[2])?,
                ),
                cost: parse_f64(path, lineno, "cost", fields[3])?,
                iterations: fields[4]
                    .parse()
                    .map_err(|_| csv_err(path, lineno, "bad iterations value"))?,
                converged,
            },
        ));
    }
    Ok(estimates)
}

pub fn write_report_csv(path: &Path, report: &CompareReport) -> Result<()> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for row in &report.rows {
        let improvement = row
            .improvement_pct
            .map(|p| p.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.name, row.summary.mean, row.summary.median, row.summary.sd, improvement
        );
    }
    Ok(std::fs::write(path, out)?)
}

pub fn write_cdf_csv(path: &Path, curve: &crate::eval::CdfCurve) -> Result<()> {
    let mut out = String::from(CDF_HEADER);
    out.push('\n');
    for (v, p) in curve.values.iter().zip(&curve.probabilities) {
        let _ = writeln!(out, "{v},{p}");
    }
    Ok(std::fs::write(path, out)?)
}

pub fn read_cdf_csv(path: &Path) -> Result<crate::eval::CdfCurve> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| csv_err(path, 1, "empty file"))?;
    if header.trim_end_matches('\r') != CDF_HEADER {
        return Err(csv_err(
            path,
            1,
            format!("unexpected header, expected {CDF_HEADER:?}"),
        ));
    }
    let mut values = Vec::new();
    let mut probabilities = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim_end_matches('\r').is_empty() {
            continue;
        }
        let fields = split_line(line);
        if fields.len() != 2 {
            return Err(csv_err(path, lineno, "expected 2 fields"));
        }
        values.push(parse_f64(path, lineno, "error", fields[0])?);
        probabilities.push(parse_f64(path, lineno, "probability", fields[1])?);
    }
    Ok(crate::eval::CdfCurve {
        values,
        probabilities,
    })
}

/// A parsed `report.csv` row; the baseline has no improvement figure.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub approach: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub improvement_pct: Option<f64>,
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| csv_err(path, 1, "empty file"))?;
    if header.trim_end_matches('\r') != REPORT_HEADER {
        return Err(csv_err(
            path,
            1,
            format!("unexpected header, expected {REPORT_HEADER:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim_end_matches('\r').is_empty() {
            continue;
        }
        let fields = split_line(line);
        if fields.len() != 5 {
            return Err(csv_err(path, lineno, "expected 5 fields"));
        }
        let improvement_pct = if fields[4].is_empty() {
            None
        } else {
            Some(parse_f64(path, lineno, "improvement_pct", fields[4])?)
        };
        rows.push(ReportRow {
            approach: fields[0].to_string(),
            mean: parse_f64(path, lineno, "mean", fields[1])?,
            median: parse_f64(path, lineno, "median", fields[2])?,
            sd: parse_f64(path, lineno, "sd", fields[3])?,
            improvement_pct,
        });
    }
    Ok(rows)
}

pub fn write_correlations_csv(
    path: &Path,
    report: &crate::features::CorrelationReport,
) -> Result<()> {
    let mut out = String::from("feature,spearman_vs_range_error\n");
    let _ = writeln!(out, "fp_rssi,{}", report.fp_rssi);
    let _ = writeln!(out, "rx_rssi,{}", report.rx_rssi);
    let _ = writeln!(out, "rssd,{}", report.rssd);
    let _ = writeln!(out, "range_std,{}", report.range_std);
    Ok(std::fs::write(path, out)?)
}

/// Pipeline manifest: `sha256  bytes  path` per artifact, path-sorted.
pub fn write_manifest(out_dir: &Path, manifest_name: &str, files: &[PathBuf]) -> Result<PathBuf> {
    let mut entries = Vec::new();
    for f in files {
        let bytes = std::fs::read(f)?;
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        let rel = f.strip_prefix(out_dir).unwrap_or(f);
        entries.push((rel.to_string_lossy().replace('\\', "/"), bytes.len(), hex));
    }
    entries.sort();
    let mut out = String::from("nlosloc manifest v1\n");
    for (path, size, hex) in entries {
        let _ = writeln!(out, "{hex}  {size}  {path}");
    }
    let manifest_path = out_dir.join(manifest_name);
    std::fs::write(&manifest_path, out)?;
    Ok(manifest_path)
}

/// One manifest entry: hex digest, byte size, path relative to the run dir.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub sha256: String,
    pub bytes: usize,
    pub path: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| csv_err(path, 1, "empty file"))?;
    if header.trim_end_matches('\r') != "nlosloc manifest v1" {
        return Err(csv_err(path, 1, "unexpected manifest header"));
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, "  ");
        let (sha256, bytes, rel) = match (parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(b), Some(p)) => (h, b, p),
            _ => return Err(csv_err(path, lineno, "expected `sha256  bytes  path`")),
        };
        if sha256.len() != 64 || !sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(csv_err(path, lineno, "bad sha256 digest"));
        }
        entries.push(ManifestEntry {
            sha256: sha256.to_string(),
            bytes: bytes
                .parse()
                .map_err(|_| csv_err(path, lineno, "bad byte count"))?,
            path: rel.to_string(),
        });
    }
    Ok(entries)
}
