//! Environment definition and synthetic ranging campaigns.
//!
//! The simulator stands in for a hardware measurement campaign: a tag moves
//! along a trajectory through a 2D map of anchors and walls, and every
//! (pose, anchor) pair yields one [`RangingSample`]. Line of sight is decided
//! by ray-segment occlusion, and each sample is labelled with it, which makes
//! the simulator double as the ground-truth oracle for classifier training
//! and for localization error evaluation.
//!
//! Measurement model, LOS case:
//!
//! ```text
//! range  = d + N(0, los_range_sigma)
//! rx     = rssi_ref_power - 10 * n * log10(d) + N(0, rssi_sigma)
//! fp     = min(rx, rx + N(0, rssi_sigma))
//! ```
//!
//! NLOS case: the detour around the obstruction lengthens the propagation
//! path to `d + bias`, `bias ~ U(nlos_bias_min, nlos_bias_max)`. The biased
//! path length feeds both the ranging measurement and the path loss, so NLOS
//! samples read both longer and weaker, and the first path is additionally
//! attenuated by `U(attenuation_min, attenuation_max)` dB:
//!
//! ```text
//! range  = max(0, d + bias + N(0, nlos_range_sigma))
//! rx     = rssi_ref_power - 10 * n * log10(d + bias) + N(0, rssi_sigma)
//! fp     = min(rx, rx - attenuation + N(0, rssi_sigma))
//! ```
//!
//! `fp <= rx` always holds by the final clamp. The defaults below make the
//! four extracted features correlate with ranging error the way field data
//! does: received powers negatively, power difference and windowed ranging
//! deviation positively.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{segments_intersect, Aabb, Point2, Segment2};
use crate::rng::Rng;

/// Fixed UWB node at a known position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: u32,
    pub position: Point2,
}

/// Anchors, walls and the working area they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    anchors: Vec<Anchor>,
    walls: Vec<Segment2>,
    bounds: Aabb,
}

impl Environment {
    pub fn new(anchors: Vec<Anchor>, walls: Vec<Segment2>, bounds: Aabb) -> Result<Self> {
        if !bounds.is_valid() {
            return Err(Error::Environment(format!("invalid bounds {bounds:?}")));
        }
        if anchors.is_empty() {
            return Err(Error::Environment("at least one anchor required".into()));
        }
        let mut ids: Vec<u32> = anchors.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != anchors.len() {
            return Err(Error::Environment("anchor ids must be unique".into()));
        }
        for a in &anchors {
            if !bounds.contains(a.position) {
                return Err(Error::Environment(format!(
                    "anchor {} at ({}, {}) lies outside bounds",
                    a.id, a.position.x, a.position.y
                )));
            }
        }
        for (i, w) in walls.iter().enumerate() {
            if !w.a.is_finite() || !w.b.is_finite() || w.a == w.b {
                return Err(Error::Environment(format!("wall {i} is degenerate")));
            }
        }
        Ok(Environment {
            anchors,
            walls,
            bounds,
        })
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn walls(&self) -> &[Segment2] {
        &self.walls
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn anchor_by_id(&self, id: u32) -> Option<&Anchor> {
        self.anchors.iter().find(|a| a.id == id)
    }

    /// Environment restricted to the given anchor ids (order preserved).
    pub fn with_anchor_subset(&self, ids: &[u32]) -> Result<Environment> {
        let mut anchors = Vec::with_capacity(ids.len());
        let mut missing = Vec::new();
        for &id in ids {
            match self.anchor_by_id(id) {
                Some(a) => anchors.push(*a),
                None => missing.push(id),
            }
        }
        if !missing.is_empty() {
            return Err(Error::UnknownAnchors { ids: missing });
        }
        Environment::new(anchors, self.walls.clone(), self.bounds)
    }
}

/// Noise parameters of the measurement model; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub los_range_sigma: f64,
    pub nlos_bias_min: f64,
    pub nlos_bias_max: f64,
    pub nlos_range_sigma: f64,
    pub rssi_path_loss_exponent: f64,
    pub rssi_ref_power: f64,
    pub rssi_sigma: f64,
    pub nlos_fp_extra_attenuation_min: f64,
    pub nlos_fp_extra_attenuation_max: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            los_range_sigma: 0.05,
            nlos_bias_min: 0.3,
            nlos_bias_max: 2.0,
            nlos_range_sigma: 0.25,
            rssi_path_loss_exponent: 2.0,
            rssi_ref_power: -60.0,
            rssi_sigma: 2.0,
            nlos_fp_extra_attenuation_min: 3.0,
            nlos_fp_extra_attenuation_max: 12.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("los_range_sigma", self.los_range_sigma),
            ("nlos_bias_min", self.nlos_bias_min),
            ("nlos_range_sigma", self.nlos_range_sigma),
            ("rssi_sigma", self.rssi_sigma),
        ];
        for (name, value) in nonneg {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Environment(format!(
                    "noise.{name} must be finite and >= 0, got {value}"
                )));
            }
        }
        if self.nlos_bias_max < self.nlos_bias_min {
            return Err(Error::Environment(
                "noise.nlos_bias_max must be >= nlos_bias_min".into(),
            ));
        }
        if self.nlos_fp_extra_attenuation_max < self.nlos_fp_extra_attenuation_min {
            return Err(Error::Environment(
                "noise.nlos_fp_extra_attenuation_max must be >= the min".into(),
            ));
        }
        if !self.rssi_path_loss_exponent.is_finite() || !self.rssi_ref_power.is_finite() {
            return Err(Error::Environment(
                "noise RSSI parameters must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Timestamped ground-truth position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub t: f64,
    pub position: Point2,
}

/// One ranging record from one anchor, as a low-cost UWB module reports it:
/// timestamp, distance measurement, total and first-path received powers.
/// `los_label` is 1 for LOS and 0 for NLOS when known.
#[derive(Debug, Clone, PartialEq)]
pub struct RangingSample {
    pub t: f64,
    pub anchor_id: u32,
    pub range: f64,
    pub rx_rssi: f64,
    pub fp_rssi: f64,
    pub los_label: Option<u8>,
}

/// True iff the tag-anchor segment crosses no wall.
pub fn is_los(tag: Point2, anchor: Point2, env: &Environment) -> bool {
    let ray = Segment2::new(tag, anchor);
    !env.walls().iter().any(|w| segments_intersect(ray, *w))
}

/// Synthesizes one measurement; `rng` carries the substream for this sample.
pub fn synthesize_measurement(
    true_pos: Point2,
    anchor: &Anchor,
    env: &Environment,
    noise: &NoiseModel,
    t: f64,
    rng: &mut Rng,
) -> Result<RangingSample> {
    let d = true_pos.dist(anchor.position);
    if d <= 0.0 {
        return Err(Error::CoincidentAnchor {
            anchor_id: anchor.id,
        });
    }
    let los = is_los(true_pos, anchor.position, env);

    let (path_len, range_sigma, attenuation) = if los {
        (d, noise.los_range_sigma, 0.0)
    } else {
        let bias = rng.uniform_range(noise.nlos_bias_min, noise.nlos_bias_max);
        let att = rng.uniform_range(
            noise.nlos_fp_extra_attenuation_min,
            noise.nlos_fp_extra_attenuation_max,
        );
        (d + bias, noise.nlos_range_sigma, att)
    };

    let range = (path_len + range_sigma * rng.normal()).max(0.0);
    let rx_rssi = noise.rssi_ref_power - 10.0 * noise.rssi_path_loss_exponent * path_len.log10()
        + noise.rssi_sigma * rng.normal();
    let fp_rssi = (rx_rssi - attenuation + noise.rssi_sigma * rng.normal()).min(rx_rssi);

    Ok(RangingSample {
        t,
        anchor_id: anchor.id,
        range,
        rx_rssi,
        fp_rssi,
        los_label: Some(if los { 1 } else { 0 }),
    })
}

/// Samples a constant-speed traversal of the waypoint polyline at uniform
/// timestamps starting from t = 0.
pub fn generate_trajectory(
    waypoints: &[Point2],
    speed: f64,
    sample_rate: f64,
) -> Result<Vec<Pose>> {
    if waypoints.len() < 2 {
        return Err(Error::DegeneratePath);
    }
    if waypoints.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("waypoints"));
    }
    if !speed.is_finite() || speed <= 0.0 {
        return Err(Error::NonPositive {
            name: "speed",
            value: speed,
        });
    }
    if !sample_rate.is_finite() || sample_rate <= 0.0 {
        return Err(Error::NonPositive {
            name: "sample_rate",
            value: sample_rate,
        });
    }

    let seg_lengths: Vec<f64> = waypoints.windows(2).map(|w| w[0].dist(w[1])).collect();
    let total_length: f64 = seg_lengths.iter().sum();
    if total_length <= 0.0 {
        return Err(Error::DegeneratePath);
    }

    let total_time = total_length / speed;
    let n_samples = (total_time * sample_rate).floor() as usize + 1;

    let mut poses = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let t = k as f64 / sample_rate;
        let target = (speed * t).min(total_length);
        let mut walked = 0.0;
        let mut position = *waypoints.last().expect("non-empty");
        for (i, &len) in seg_lengths.iter().enumerate() {
            if target <= walked + len && len > 0.0 {
                let frac = (target - walked) / len;
                let a = waypoints[i];
                let b = waypoints[i + 1];
                position = Point2::new(a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y));
                break;
            }
            walked += len;
        }
        poses.push(Pose { t, position });
    }
    Ok(poses)
}

/// Runs a full campaign: one sample per (pose, anchor), ordered by timestamp
/// then anchor. Each sample draws from the substream keyed by (pose index,
/// anchor id), so the dataset is a pure function of the seed.
pub fn simulate_campaign(
    env: &Environment,
    trajectory: &[Pose],
    noise: &NoiseModel,
) -> Result<Vec<RangingSample>> {
    if trajectory.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    noise.validate()?;
    let mut samples = Vec::with_capacity(trajectory.len() * env.anchors().len());
    for (k, pose) in trajectory.iter().enumerate() {
        for anchor in env.anchors() {
            let mut rng = Rng::substream(noise.seed, &[k as u64, anchor.id as u64]);
            samples.push(synthesize_measurement(
                pose.position,
                anchor,
                env,
                noise,
                pose.t,
                &mut rng,
            )?);
        }
    }
    Ok(samples)
}
