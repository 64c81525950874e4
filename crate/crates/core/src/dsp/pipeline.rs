use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::cfar::{cfar_detect, CfarConfig};
use super::enhance::{enhance_spectrogram, EnhanceConfig};
use super::fft::{doppler_column, range_fft, remove_static_clutter, RangeProfileSeq};
use super::spectrogram::Spectrogram;
use super::stft::{stft_spectrogram, StftConfig};
use super::track::{track_target, Detection, TrackGate, TrackerConfig};
use crate::error::{Error, Result};
use crate::sim::BeatSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cfar: CfarConfig,
    pub tracker: TrackerConfig,
    pub stft: StftConfig,
    /// Doppler rows beyond this radial speed (m/s) are cropped before enhancement.
    pub max_velocity: f64,
    pub enhance: EnhanceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cfar: CfarConfig::default(),
            tracker: TrackerConfig::default(),
            stft: StftConfig::default(),
            max_velocity: 6.0,
            enhance: EnhanceConfig::default(),
        }
    }
}

/// Intermediate products of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineTrace {
    pub detections: Vec<Vec<Detection>>,
    pub gate: TrackGate,
    pub slow_time: Vec<Complex64>,
    pub raw: Spectrogram,
    pub enhanced: Spectrogram,
}

/// Sums, per chirp, the clutter-free returns inside the frame's gate.
pub fn gate_slow_time(rp: &RangeProfileSeq, gate: &TrackGate) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(rp.frames * rp.chirps);
    for frame in 0..rp.frames {
        let bins = gate.bins(frame);
        for chirp in rp.frame(frame).chunks_exact(rp.bins) {
            out.push(chirp[bins.clone()].iter().sum());
        }
    }
    out
}

/// Merges runs of adjacent CFAR hits into one detection at the run's peak.
fn cluster(hits: &[usize], power: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < hits.len() {
        let mut j = i;
        while j + 1 < hits.len() && hits[j + 1] == hits[j] + 1 {
            j += 1;
        }
        let peak = hits[i..=j]
            .iter()
            .copied()
            .max_by(|&a, &b| power[a].total_cmp(&power[b]))
            .unwrap();
        peaks.push(peak);
        i = j + 1;
    }
    peaks
}

pub struct SpectrogramPipeline {
    pub config: PipelineConfig,
}

impl SpectrogramPipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self { config }
    }

    pub fn detect(&self, clean: &RangeProfileSeq, sig: &BeatSignal) -> Result<Vec<Vec<Detection>>> {
        let chirps = clean.chirps;
        let v_per_row = sig.config.velocity_per_bin(chirps);
        let fft = FftPlanner::new().plan_fft_forward(chirps);
        (0..clean.frames)
            .map(|f| {
                let power = clean.frame_power(f);
                let hits = cfar_detect(&power, &self.config.cfar)?;
                Ok(cluster(&hits, &power)
                    .into_iter()
                    .map(|bin| {
                        let column = doppler_column(clean.frame(f), chirps, clean.bins, bin, fft.as_ref());
                        let row = (0..chirps).max_by(|&a, &b| column[a].total_cmp(&column[b])).unwrap_or(chirps / 2);
                        Detection {
                            bin,
                            power: power[bin],
                            velocity: (row as f64 - (chirps / 2) as f64) * v_per_row,
                        }
                    })
                    .collect())
            })
            .collect()
    }

    pub fn run(&self, sig: &BeatSignal) -> Result<PipelineTrace> {
        if sig.frames == 0 {
            return Err(Error::Size("pipeline: empty beat signal".into()));
        }
        let clean = remove_static_clutter(&range_fft(sig));
        let detections = self.detect(&clean, sig)?;
        let gate = track_target(&detections, clean.bins, &self.config.tracker)?;
        let slow_time = gate_slow_time(&clean, &gate);
        let full = stft_spectrogram(&slow_time, &self.config.stft)?;
        let raw = self.crop_doppler(&full, sig);
        let enhanced = enhance_spectrogram(&raw, &self.config.enhance);
        Ok(PipelineTrace {
            detections,
            gate,
            slow_time,
            raw,
            enhanced,
        })
    }

    pub fn process(&self, sig: &BeatSignal) -> Result<Spectrogram> {
        Ok(self.run(sig)?.enhanced)
    }

    /// Keeps the Doppler rows with `|v| <= max_velocity`.
    fn crop_doppler(&self, full: &Spectrogram, sig: &BeatSignal) -> Spectrogram {
        let v_per_row = sig.config.velocity_per_bin(full.rows);
        let keep = ((self.config.max_velocity / v_per_row).floor() as usize).min(full.rows / 2 - 1);
        let center = full.rows / 2;
        let (lo, hi) = (center - keep, center + keep + 1);
        let pixels = full.pixels[lo * full.cols..hi * full.cols].to_vec();
        Spectrogram::new(hi - lo, full.cols, pixels)
    }
}
