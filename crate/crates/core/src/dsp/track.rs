use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bin: usize,
    pub power: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Number of past gate centers used for the constant-velocity prediction.
    pub window: usize,
    /// Gate width in range bins (odd widths are centered exactly).
    pub gate_width: usize,
    /// Largest allowed center change between consecutive frames.
    pub max_step: usize,
    /// Detections farther than this from the prediction are ignored.
    pub association_radius: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            window: 5,
            gate_width: 5,
            max_step: 3,
            association_radius: 4,
        }
    }
}

/// Per-frame range gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackGate {
    pub centers: Vec<usize>,
    pub width: usize,
    pub velocities: Vec<f64>,
}

impl TrackGate {
    /// Inclusive-exclusive bin range covered in `frame`.
    pub fn bins(&self, frame: usize) -> std::ops::Range<usize> {
        let lo = self.centers[frame] - self.width / 2;
        lo..lo + self.width
    }
}

/// Sliding-window constant-velocity tracker over per-frame detections.
///
/// The track starts at the strongest detection of the first frame that has
/// any. Afterwards each frame predicts `last + mean step over the window`,
/// takes the detection nearest that prediction (within the association
/// radius) and otherwise coasts on the prediction. Frames before the first
/// detection inherit the starting center.
pub fn track_target(detections: &[Vec<Detection>], bins: usize, cfg: &TrackerConfig) -> Result<TrackGate> {
    if cfg.gate_width == 0 || cfg.gate_width > bins || cfg.window == 0 {
        return Err(Error::Config(format!(
            "tracker: gate width {} / window {} invalid for {bins} bins",
            cfg.gate_width, cfg.window
        )));
    }
    let half = cfg.gate_width / 2;
    let lo = half as i64;
    let hi = (bins - (cfg.gate_width - half)) as i64;
    let clamp = |c: i64| c.clamp(lo, hi);

    let first = detections.iter().position(|d| !d.is_empty()).ok_or(Error::NoTarget)?;
    let start = detections[first]
        .iter()
        .max_by(|a, b| a.power.total_cmp(&b.power))
        .expect("non-empty");

    let mut centers: Vec<i64> = vec![clamp(start.bin as i64); first + 1];
    let mut velocities = vec![start.velocity; first + 1];

    for dets in &detections[first + 1..] {
        let last = *centers.last().unwrap();
        let history = &centers[centers.len().saturating_sub(cfg.window + 1)..];
        let drift = if history.len() > 1 {
            (history[history.len() - 1] - history[0]) as f64 / (history.len() - 1) as f64
        } else {
            0.0
        };
        let predicted = last as f64 + drift;
        let nearest = dets
            .iter()
            .map(|d| (d, (d.bin as f64 - predicted).abs()))
            .filter(|(_, dist)| *dist <= cfg.association_radius as f64)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(b.0.power.total_cmp(&a.0.power)));
        let (target, velocity) = match nearest {
            Some((d, _)) => (d.bin as f64, d.velocity),
            None => (predicted, *velocities.last().unwrap()),
        };
        let step = (target.round() as i64 - last).clamp(-(cfg.max_step as i64), cfg.max_step as i64);
        centers.push(clamp(last + step));
        velocities.push(velocity);
    }

    Ok(TrackGate {
        centers: centers.into_iter().map(|c| c as usize).collect(),
        width: cfg.gate_width,
        velocities,
    })
}
