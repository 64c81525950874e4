use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::env::DomainEnv;
use super::profile::GaitProfile;
use super::radar::{BeatSignal, RadarConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Toward,
    Away,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Toward, Direction::Away];

    /// +1 when range shrinks over time.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Toward => 1.0,
            Direction::Away => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Toward => "toward",
            Direction::Away => "away",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toward" => Ok(Direction::Toward),
            "away" => Ok(Direction::Away),
            _ => Err(Error::Config(format!("unknown direction '{s}'"))),
        }
    }
}

/// One walking pass in front of the radar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Walk {
    pub duration_s: f64,
    pub direction: Direction,
    pub start_range_m: f64,
    /// Offset added to every limb phase (where in the gait cycle the pass starts).
    pub gait_phase: f64,
    pub noise_seed: u64,
}

/// How individual walks are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub duration_s: f64,
    pub samples_per_direction: usize,
    pub toward_start_m: (f64, f64),
    pub away_start_m: (f64, f64),
    /// Relative per-walk jitter of cadence, speed and limb amplitude.
    pub jitter: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            duration_s: 1.28,
            samples_per_direction: 20,
            toward_start_m: (7.0, 9.0),
            away_start_m: (3.0, 5.0),
            jitter: 0.03,
        }
    }
}

impl Walk {
    /// Draws the walk and the jittered profile for one recorded sample.
    pub fn draw(
        cfg: &WalkConfig,
        profile: &GaitProfile,
        seed: u64,
        env: &DomainEnv,
        day: u32,
        direction: Direction,
        index: usize,
    ) -> (GaitProfile, Walk) {
        let mut r = rng::stream(
            seed,
            &[
                rng::tag("walk"),
                profile.subject_id as u64,
                rng::tag(&env.env_id),
                day as u64,
                rng::tag(direction.label()),
                index as u64,
            ],
        );
        let jittered = profile.jittered(&mut r, cfg.jitter);
        let (lo, hi) = match direction {
            Direction::Toward => cfg.toward_start_m,
            Direction::Away => cfg.away_start_m,
        };
        let walk = Walk {
            duration_s: cfg.duration_s,
            direction,
            start_range_m: r.random_range(lo..=hi),
            gait_phase: r.random_range(0.0..2.0 * PI),
            noise_seed: r.random(),
        };
        (jittered, walk)
    }
}

struct BodyPoint {
    amplitude: f64,
    speed: f64,
    swing: f64,
    omega: f64,
    phase: f64,
    range_offset: f64,
}

impl BodyPoint {
    /// Range along a path whose length changes `scale` times as fast as the direct one.
    fn range_at(&self, start: f64, sign: f64, t: f64, scale: f64) -> f64 {
        let displacement = if self.omega > 0.0 {
            self.speed * t + self.swing / self.omega * (self.phase.cos() - (self.omega * t + self.phase).cos())
        } else {
            self.speed * t
        };
        start + self.range_offset - sign * scale * displacement
    }
}

/// Adds `amplitude * exp(j*(2*pi*f_b*n/fs - 4*pi*R/lambda))` for `n` in
/// `0..out.len()`, for every `(range, amplitude)` tone.
///
/// The tones advance together sample by sample so their phasor recurrences
/// are independent and pipeline well.
fn add_tones(out: &mut [Complex64], cfg: &RadarConfig, tones: &[(f64, f64)]) {
    let mut z = Vec::with_capacity(tones.len());
    let mut step = Vec::with_capacity(tones.len());
    for &(range_m, amplitude) in tones {
        if amplitude == 0.0 {
            continue;
        }
        let step_phase = 2.0 * PI * cfg.beat_frequency_hz(range_m) / cfg.adc_rate_hz();
        let start_phase = -4.0 * PI * range_m / cfg.wavelength_m();
        z.push(Complex64::from_polar(amplitude, start_phase));
        step.push(Complex64::from_polar(1.0, step_phase));
    }
    for s in out.iter_mut() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (zi, si) in z.iter_mut().zip(&step) {
            acc += *zi;
            *zi *= si;
        }
        *s += acc;
    }
}

/// Synthesizes the beat signal of one walk.
///
/// Each body point contributes a tone whose beat frequency follows its
/// instantaneous range and whose carrier phase rotates with its radial
/// velocity (positive Doppler while approaching). Multipath paths repeat
/// every body tone at the excess range `c * delay / 2` with the path's
/// attenuation and velocity scale. Static clutter, complex white noise and the sensor gain are
/// applied last.
pub fn simulate_walk(profile: &GaitProfile, env: &DomainEnv, cfg: &RadarConfig, walk: &Walk) -> Result<BeatSignal> {
    cfg.validate()?;
    env.validate()?;
    if !(profile.cadence > 0.0 && profile.torso_speed > 0.0) {
        return Err(Error::Config(format!(
            "subject {}: cadence and torso speed must be positive",
            profile.subject_id
        )));
    }
    let minimum = 2.0 * profile.gait_cycle_s();
    if walk.duration_s < minimum {
        return Err(Error::DurationTooShort {
            duration: walk.duration_s,
            minimum,
        });
    }

    let frames = (walk.duration_s * cfg.frame_rate_hz).round() as usize;
    let chirps = cfg.chirps_per_frame;
    let samples = cfg.samples_per_chirp;
    let mut sig = BeatSignal::zeros(*cfg, frames);

    let mut points = vec![BodyPoint {
        amplitude: profile.torso_reflectivity,
        speed: profile.torso_speed,
        swing: 0.0,
        omega: 0.0,
        phase: 0.0,
        range_offset: 0.0,
    }];
    for limb in &profile.limbs {
        points.push(BodyPoint {
            amplitude: limb.reflectivity,
            speed: profile.torso_speed,
            swing: limb.peak_velocity,
            omega: 2.0 * PI * profile.cadence * limb.harmonic as f64,
            phase: limb.phase + walk.gait_phase * limb.harmonic as f64,
            range_offset: 0.0,
        });
    }
    let mut paths: Vec<(f64, f64, f64)> = vec![(0.0, 1.0, 1.0)];
    for mp in &env.multipath {
        paths.push((
            SPEED_OF_LIGHT * mp.excess_delay_s / 2.0,
            10f64.powf(-mp.attenuation_db / 20.0),
            mp.velocity_scale,
        ));
    }

    let mut clutter_chirp = vec![Complex64::new(0.0, 0.0); samples];
    let clutter: Vec<(f64, f64)> = env.static_clutter.iter().map(|c| (c.range_m, c.reflectivity)).collect();
    add_tones(&mut clutter_chirp, cfg, &clutter);

    let sign = walk.direction.sign();
    let frame_period = 1.0 / cfg.frame_rate_hz;
    let chirp_interval = cfg.chirp_interval_s();
    let mut tones = Vec::with_capacity(points.len() * paths.len());
    for (k, chirp_buf) in sig.data.chunks_exact_mut(samples).enumerate() {
        let (frame, chirp) = (k / chirps, k % chirps);
        let t = frame as f64 * frame_period + chirp as f64 * chirp_interval;
        tones.clear();
        for p in &points {
            for &(excess, atten, scale) in &paths {
                tones.push((p.range_at(walk.start_range_m, sign, t, scale) + excess, p.amplitude * atten));
            }
        }
        add_tones(chirp_buf, cfg, &tones);
        for (s, c) in chirp_buf.iter_mut().zip(&clutter_chirp) {
            *s += c;
        }
    }

    let sigma = env.noise_sigma();
    if sigma > 0.0 {
        let mut r = rng::stream(walk.noise_seed, &[rng::tag("noise")]);
        let scale = sigma / 2f64.sqrt();
        for s in sig.data.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut r);
            let im: f64 = StandardNormal.sample(&mut r);
            *s += Complex64::new(re * scale, im * scale);
        }
    }
    let gain = env.gain_amplitude();
    if gain != 1.0 {
        for s in sig.data.iter_mut() {
            *s *= gain;
        }
    }
    debug_assert_eq!(sig.data.len(), frames * chirps * samples);
    Ok(sig)
}
