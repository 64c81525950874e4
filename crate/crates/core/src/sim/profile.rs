use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    LeftLeg,
    RightLeg,
    LeftArm,
    RightArm,
}

/// A limb whose radial velocity is `torso + peak * sin(2*pi*cadence*harmonic*t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimbScatterer {
    pub part: BodyPart,
    pub peak_velocity: f64,
    pub phase: f64,
    pub reflectivity: f64,
    pub harmonic: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitProfile {
    pub subject_id: usize,
    pub torso_speed: f64,
    /// Step frequency in Hz; one gait cycle lasts `1 / cadence` seconds.
    pub cadence: f64,
    pub torso_reflectivity: f64,
    pub limbs: Vec<LimbScatterer>,
    pub height_scale: f64,
}

impl GaitProfile {
    pub fn gait_cycle_s(&self) -> f64 {
        1.0 / self.cadence
    }

    /// Per-walk variation of one subject: small cadence/speed/amplitude drift.
    pub fn jittered<R: Rng>(&self, rng: &mut R, amount: f64) -> GaitProfile {
        let mut j = |x: f64| x * (1.0 + amount * rng.random_range(-1.0..=1.0));
        let mut out = self.clone();
        out.cadence = j(self.cadence);
        out.torso_speed = j(self.torso_speed);
        for limb in &mut out.limbs {
            limb.peak_velocity = j(limb.peak_velocity);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterConfig {
    pub subjects: usize,
    pub cadence_min: f64,
    pub cadence_max: f64,
    /// Minimum cadence gap between any two subjects of the roster.
    pub min_cadence_gap: f64,
}

impl Default for RosterConfig {
    fn default() -> Self {
        Self {
            subjects: 4,
            cadence_min: 1.6,
            cadence_max: 2.4,
            min_cadence_gap: 0.04,
        }
    }
}

/// Generates subjects `0..roster.subjects`.
///
/// Cadences are stratified: the cadence interval is cut into one slot per
/// subject, slots are dealt out by a seeded shuffle and each subject is
/// placed inside its slot with a margin of half the minimum gap, so any two
/// subjects differ by at least `min_cadence_gap`.
pub fn synth_roster(seed: u64, roster: &RosterConfig) -> Result<Vec<GaitProfile>> {
    (0..roster.subjects)
        .map(|id| synth_subject_profile(seed, id, roster))
        .collect::<Result<Vec<_>>>()
        .and_then(|v| if v.is_empty() { Err(Error::EmptyRoster) } else { Ok(v) })
}

pub fn synth_subject_profile(seed: u64, subject_id: usize, roster: &RosterConfig) -> Result<GaitProfile> {
    let count = roster.subjects;
    if count == 0 {
        return Err(Error::EmptyRoster);
    }
    if subject_id >= count {
        return Err(Error::Config(format!(
            "subject {subject_id} outside a roster of {count}"
        )));
    }
    let slot_width = (roster.cadence_max - roster.cadence_min) / count as f64;
    if !(slot_width > roster.min_cadence_gap) || roster.cadence_min <= 0.0 {
        return Err(Error::Config(format!(
            "roster: {count} subjects cannot keep a {} Hz cadence gap inside [{}, {}] Hz",
            roster.min_cadence_gap, roster.cadence_min, roster.cadence_max
        )));
    }

    let mut slots: Vec<usize> = (0..count).collect();
    slots.shuffle(&mut rng::stream(seed, &[rng::tag("roster-slots"), count as u64]));
    let slot = slots[subject_id];

    let mut r = rng::stream(seed, &[rng::tag("subject"), subject_id as u64]);
    let half_gap = roster.min_cadence_gap / 2.0;
    let lo = roster.cadence_min + slot as f64 * slot_width + half_gap;
    let hi = roster.cadence_min + (slot + 1) as f64 * slot_width - half_gap;
    let cadence = r.random_range(lo..=hi);

    let torso_speed = r.random_range(1.0..=1.6);
    let height_scale = r.random_range(0.85..=1.15);
    let leg_phase = r.random_range(0.0..2.0 * PI);
    let leg_peak = r.random_range(1.6..=2.8);
    let leg_asym = r.random_range(0.85..=1.15);
    let leg_refl = r.random_range(0.25..=0.45);
    let arm_peak = r.random_range(0.4..=1.2);
    let arm_harmonic = if r.random_bool(0.5) { 1 } else { 2 };
    let arm_refl = r.random_range(0.08..=0.2);
    let arm_lag = r.random_range(0.25..=0.75) * PI;

    let limbs = vec![
        LimbScatterer {
            part: BodyPart::LeftLeg,
            peak_velocity: leg_peak,
            phase: leg_phase,
            reflectivity: leg_refl * height_scale,
            harmonic: 1,
        },
        LimbScatterer {
            part: BodyPart::RightLeg,
            peak_velocity: leg_peak * leg_asym,
            phase: leg_phase + PI,
            reflectivity: leg_refl * height_scale,
            harmonic: 1,
        },
        LimbScatterer {
            part: BodyPart::LeftArm,
            peak_velocity: arm_peak,
            phase: leg_phase + arm_lag,
            reflectivity: arm_refl * height_scale,
            harmonic: arm_harmonic,
        },
        LimbScatterer {
            part: BodyPart::RightArm,
            peak_velocity: arm_peak,
            phase: leg_phase + arm_lag + PI,
            reflectivity: arm_refl * height_scale,
            harmonic: arm_harmonic,
        },
    ];

    Ok(GaitProfile {
        subject_id,
        torso_speed,
        cadence,
        torso_reflectivity: height_scale,
        limbs,
        height_scale,
    })
}
