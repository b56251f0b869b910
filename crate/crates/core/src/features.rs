//! Classifier inputs derived from raw ranging samples.
//!
//! Each sample turns into five candidate inputs: the range itself, both
//! received powers, their difference (RSSD = RxRssi - FpRssi), and the
//! population standard deviation of that anchor's ranges over a trailing
//! 0.5 s window. The window is inclusive of the current timestamp and causal,
//! so features can be computed online; windows holding fewer than two samples
//! yield 0 so the head of a stream stays usable.

use crate::error::{Error, Result};
use crate::sim::RangingSample;

pub const DEFAULT_STD_WINDOW: f64 = 0.5;

/// The candidate network inputs for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub range: f64,
    pub rx_rssi: f64,
    pub fp_rssi: f64,
    pub rssd: f64,
    pub range_std: f64,
}

impl FeatureVector {
    /// Canonical dense layout: range, rx_rssi, fp_rssi, rssd, range_std.
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.range,
            self.rx_rssi,
            self.fp_rssi,
            self.rssd,
            self.range_std,
        ]
    }
}

/// One extracted row, aligned 1:1 with the input sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub t: f64,
    pub anchor_id: u32,
    pub features: FeatureVector,
    pub label: Option<u8>,
}

/// A training example: features plus the LOS label (1) / NLOS label (0).
pub type LabelledSample = (FeatureVector, u8);

/// Received signal strength difference, in dB.
pub fn compute_rssd(rx_rssi: f64, fp_rssi: f64) -> f64 {
    rx_rssi - fp_rssi
}

/// Population standard deviation of the ranges measured within
/// `[t_now - window, t_now]`. `samples` is one anchor's stream sorted by
/// time; fewer than two in-window samples yield 0.
pub fn compute_window_std(samples: &[RangingSample], t_now: f64, window: f64) -> Result<f64> {
    if !window.is_finite() || window <= 0.0 {
        return Err(Error::NonPositive {
            name: "window",
            value: window,
        });
    }
    for (i, pair) in samples.windows(2).enumerate() {
        if pair[1].t < pair[0].t {
            return Err(Error::UnsortedSamples { index: i + 1 });
        }
    }
    let lo = t_now - window;
    let in_window: Vec<f64> = samples
        .iter()
        .filter(|s| s.t >= lo && s.t <= t_now)
        .map(|s| s.range)
        .collect();
    Ok(population_std(&in_window))
}

fn population_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Extracts one [`FeatureRow`] per sample, in input order. The windowed
/// deviation is computed per anchor over the trailing `window` seconds; each
/// anchor's sub-stream must be time sorted.
pub fn extract_features(samples: &[RangingSample], window: f64) -> Result<Vec<FeatureRow>> {
    if !window.is_finite() || window <= 0.0 {
        return Err(Error::NonPositive {
            name: "window",
            value: window,
        });
    }
    // Per anchor: indices into `samples`, in order of appearance.
    let mut rows = Vec::with_capacity(samples.len());
    let mut per_anchor: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, s) in samples.iter().enumerate() {
        let stream = per_anchor.entry(s.anchor_id).or_default();
        if let Some(&prev) = stream.last() {
            if s.t < samples[prev].t {
                return Err(Error::UnsortedSamples { index: i });
            }
        }
        stream.push(i);

        // trailing window over this anchor's stream
        let lo = s.t - window;
        let start = stream.partition_point(|&j| samples[j].t < lo);
        let in_window: Vec<f64> = stream[start..].iter().map(|&j| samples[j].range).collect();
        let range_std = population_std(&in_window);

        rows.push(FeatureRow {
            t: s.t,
            anchor_id: s.anchor_id,
            features: FeatureVector {
                range: s.range,
                rx_rssi: s.rx_rssi,
                fp_rssi: s.fp_rssi,
                rssd: compute_rssd(s.rx_rssi, s.fp_rssi),
                range_std,
            },
            label: s.los_label,
        });
    }
    Ok(rows)
}

/// Average ranks (ties get the mean of the positions they occupy).
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the rank (i + j)/2 + 1
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: xs.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input"));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Spearman coefficient of each feature against the ranging error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationReport {
    pub fp_rssi: f64,
    pub rx_rssi: f64,
    pub rssd: f64,
    pub range_std: f64,
}

/// Correlates the four signal features with `measured - true` ranging error.
/// `true_ranges` must align elementwise with `rows`.
pub fn correlation_report(rows: &[FeatureRow], true_ranges: &[f64]) -> Result<CorrelationReport> {
    if rows.len() != true_ranges.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: true_ranges.len(),
        });
    }
    let errors: Vec<f64> = rows
        .iter()
        .zip(true_ranges)
        .map(|(r, d)| r.features.range - d)
        .collect();
    let col = |f: fn(&FeatureVector) -> f64| -> Vec<f64> {
        rows.iter().map(|r| f(&r.features)).collect()
    };
    Ok(CorrelationReport {
        fp_rssi: spearman(&col(|f| f.fp_rssi), &errors)?,
        rx_rssi: spearman(&col(|f| f.rx_rssi), &errors)?,
        rssd: spearman(&col(|f| f.rssd), &errors)?,
        range_std: spearman(&col(|f| f.range_std), &errors)?,
    })
}
