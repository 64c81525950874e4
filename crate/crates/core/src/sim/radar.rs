use std::fs;
use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FMCW chirp and frame timing.
///
/// `chirp_duration_s` is the active ramp time over which the
/// `samples_per_chirp` ADC samples are taken. Chirps are spread uniformly
/// across a frame, so the chirp repetition interval is
/// `1 / (frame_rate_hz * chirps_per_frame)` and slow time is contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub chirp_duration_s: f64,
    pub chirps_per_frame: usize,
    pub samples_per_chirp: usize,
    pub frame_rate_hz: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 77e9,
            bandwidth_hz: 1e9,
            chirp_duration_s: 50e-6,
            chirps_per_frame: 64,
            samples_per_chirp: 128,
            frame_rate_hz: 200.0,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("chirp_duration_s", self.chirp_duration_s),
            ("frame_rate_hz", self.frame_rate_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("radar.{name} must be positive, got {v}")));
            }
        }
        if self.chirps_per_frame == 0 || self.samples_per_chirp == 0 {
            return Err(Error::Config(
                "radar.chirps_per_frame and radar.samples_per_chirp must be positive".into(),
            ));
        }
        if self.bandwidth_hz > 4e9 {
            return Err(Error::Config(format!(
                "radar.bandwidth_hz {} exceeds the 4 GHz device limit",
                self.bandwidth_hz
            )));
        }
        if self.chirp_interval_s() < self.chirp_duration_s {
            return Err(Error::Config(format!(
                "radar: {} chirps of {} s do not fit in a {} Hz frame",
                self.chirps_per_frame, self.chirp_duration_s, self.frame_rate_hz
            )));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Chirp slope in Hz/s.
    pub fn slope(&self) -> f64 {
        self.bandwidth_hz / self.chirp_duration_s
    }

    /// ADC sample rate in Hz.
    pub fn adc_rate_hz(&self) -> f64 {
        self.samples_per_chirp as f64 / self.chirp_duration_s
    }

    pub fn chirp_interval_s(&self) -> f64 {
        1.0 / (self.frame_rate_hz * self.chirps_per_frame as f64)
    }

    /// Slow-time sample rate (chirp repetition frequency).
    pub fn prf_hz(&self) -> f64 {
        self.frame_rate_hz * self.chirps_per_frame as f64
    }

    pub fn range_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }

    pub fn beat_frequency_hz(&self, range_m: f64) -> f64 {
        2.0 * self.slope() * range_m / SPEED_OF_LIGHT
    }

    /// Doppler frequency of a target approaching at `velocity` m/s.
    pub fn doppler_hz(&self, velocity: f64) -> f64 {
        2.0 * velocity / self.wavelength_m()
    }

    /// Radial velocity represented by one bin of a `bins`-point slow-time DFT.
    pub fn velocity_per_bin(&self, bins: usize) -> f64 {
        self.prf_hz() / bins as f64 * self.wavelength_m() / 2.0
    }
}

/// Complex baseband returns laid out `[frame][chirp][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatSignal {
    pub frames: usize,
    pub config: RadarConfig,
    pub data: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSignalHeader {
    pub frames: usize,
    pub chirps: usize,
    pub samples: usize,
    pub sample_format: String,
    pub config: RadarConfig,
}

impl BeatSignal {
    pub fn zeros(config: RadarConfig, frames: usize) -> Self {
        let n = frames * config.chirps_per_frame * config.samples_per_chirp;
        Self {
            frames,
            config,
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn chirps(&self) -> usize {
        self.config.chirps_per_frame
    }

    pub fn samples(&self) -> usize {
        self.config.samples_per_chirp
    }

    pub fn chirp(&self, frame: usize, chirp: usize) -> &[Complex64] {
        let n = self.samples();
        let start = (frame * self.chirps() + chirp) * n;
        &self.data[start..start + n]
    }

    pub fn total_power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn header(&self) -> BeatSignalHeader {
        BeatSignalHeader {
            frames: self.frames,
            chirps: self.chirps(),
            samples: self.samples(),
            sample_format: "f32le interleaved re/im, [frame][chirp][sample]".into(),
            config: self.config,
        }
    }

    /// Writes `<stem>.bin` (little-endian f32 re/im pairs) and `<stem>.json`.
    pub fn dump(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for z in &self.data {
            bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
            bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
        fs::File::create(dir.join(format!("{stem}.bin")))?.write_all(&bytes)?;
        let header = serde_json::to_vec_pretty(&self.header())?;
        fs::write(dir.join(format!("{stem}.json")), header)?;
        Ok(())
    }

    /// Reads a dump written by [`BeatSignal::dump`]; samples come back at f32 precision.
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let header: BeatSignalHeader =
            serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
        let bytes = fs::read(dir.join(format!("{stem}.bin")))?;
        let n = header.frames * header.chirps * header.samples;
        if bytes.len() != n * 8 {
            return Err(Error::Integrity(format!(
                "{stem}.bin holds {} bytes, header implies {}",
                bytes.len(),
                n * 8
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        Ok(Self {
            frames: header.frames,
            config: header.config,
            data,
        })
    }
}
