use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterReflector {
    pub range_m: f64,
    pub reflectivity: f64,
}

/// Indirect path: the body return arrives `excess_delay_s` later and
/// `attenuation_db` weaker than the direct return. A bounce off a wall at an
/// angle to the walking direction changes its length more slowly than the
/// direct path; `velocity_scale` is that ratio (1 for a path along the line
/// of sight).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultipathPath {
    pub excess_delay_s: f64,
    pub attenuation_db: f64,
    #[serde(default = "unit_scale")]
    pub velocity_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEnv {
    pub env_id: String,
    pub static_clutter: Vec<ClutterReflector>,
    pub multipath: Vec<MultipathPath>,
    /// Receiver noise power per complex sample in dB; `-inf` (stored as `null`) disables noise.
    #[serde(with = "db_or_off")]
    pub noise_floor_db: f64,
    pub sensor_gain_db: f64,
    pub day_jitter_seed: u64,
}

impl DomainEnv {
    pub fn validate(&self) -> Result<()> {
        if self
            .multipath
            .iter()
            .any(|p| p.attenuation_db < 0.0 || p.excess_delay_s < 0.0 || !(0.0..=1.0).contains(&p.velocity_scale))
        {
            return Err(Error::Config(format!(
                "env {}: multipath attenuation and excess delay must be non-negative and velocity_scale in [0, 1]",
                self.env_id
            )));
        }
        if self.static_clutter.iter().any(|c| c.range_m < 0.0) {
            return Err(Error::Config(format!("env {}: clutter range must be non-negative", self.env_id)));
        }
        if self.noise_floor_db.is_nan() || !self.sensor_gain_db.is_finite() {
            return Err(Error::Config(format!("env {}: noise floor / gain must be numbers", self.env_id)));
        }
        Ok(())
    }

    /// Noise standard deviation per complex sample (before sensor gain).
    pub fn noise_sigma(&self) -> f64 {
        if self.noise_floor_db == f64::NEG_INFINITY {
            0.0
        } else {
            10f64.powf(self.noise_floor_db / 20.0)
        }
    }

    pub fn gain_amplitude(&self) -> f64 {
        10f64.powf(self.sensor_gain_db / 20.0)
    }

    /// A room with no clutter, no multipath, no noise and unit gain.
    pub fn anechoic(env_id: &str) -> Self {
        Self {
            env_id: env_id.into(),
            static_clutter: Vec::new(),
            multipath: Vec::new(),
            noise_floor_db: f64::NEG_INFINITY,
            sensor_gain_db: 0.0,
            day_jitter_seed: 0,
        }
    }
}

mod db_or_off {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// The four recording locations: the source lab and three target rooms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainPreset {
    Source,
    Server,
    Conference,
    Office,
}

impl DomainPreset {
    pub const ALL: [DomainPreset; 4] = [Self::Source, Self::Server, Self::Conference, Self::Office];

    pub fn label(self) -> &'static str {
        match self {
            Self::Source => "source",
            Self::Server => "server",
            Self::Conference => "conference",
            Self::Office => "office",
        }
    }
}

impl fmt::Display for DomainPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DomainPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown domain preset '{s}' (expected source|server|conference|office)")))
    }
}

struct PresetTable {
    clutter: &'static [(f64, f64)],
    multipath: &'static [(f64, f64, f64)],
    noise_floor_db: f64,
    sensor_gain_db: f64,
}

// Authored room descriptions. Target rooms are noisier, have a weaker
// sensor gain and denser reflectors than the source lab.
fn table(preset: DomainPreset) -> PresetTable {
    match preset {
        DomainPreset::Source => PresetTable {
            clutter: &[(2.4, 3.0), (11.0, 4.0), (14.5, 2.0)],
            multipath: &[(4.0e-9, 14.0, 1.0)],
            noise_floor_db: -10.0,
            sensor_gain_db: 0.0,
        },
        DomainPreset::Server => PresetTable {
            clutter: &[(1.8, 5.0), (3.2, 4.0), (10.2, 6.0), (12.0, 5.0), (13.5, 4.0), (16.0, 6.0)],
            multipath: &[(2.0e-9, 6.0, 0.7), (6.0e-9, 9.0, 1.0)],
            noise_floor_db: 0.0,
            sensor_gain_db: -8.0,
        },
        DomainPreset::Conference => PresetTable {
            clutter: &[(3.0, 3.0), (12.5, 5.0)],
            multipath: &[(3.0e-9, 5.0, 0.8)],
            noise_floor_db: -4.0,
            sensor_gain_db: -4.0,
        },
        DomainPreset::Office => PresetTable {
            clutter: &[(2.0, 4.0), (2.9, 3.0), (10.8, 5.0), (13.2, 3.0), (15.1, 4.0)],
            multipath: &[(2.5e-9, 6.0, 0.55), (5.0e-9, 8.0, 1.0)],
            noise_floor_db: 2.0,
            sensor_gain_db: -10.0,
        },
    }
}

/// Builds the room for `preset` as recorded on `day` (1-based).
///
/// The day index seeds a perturbation of clutter positions (within
/// +-0.3 m) and of the noise floor (within +-1 dB), which is what separates
/// recordings of one room on different days.
pub fn make_domain_env(preset: DomainPreset, day: u32) -> DomainEnv {
    let t = table(preset);
    let day_jitter_seed = rng::derive_seed(rng::tag(preset.label()), &[rng::tag("day"), day as u64]);
    let mut r = rng::stream(day_jitter_seed, &[]);
    let static_clutter = t
        .clutter
        .iter()
        .map(|&(range_m, reflectivity)| ClutterReflector {
            range_m: range_m + r.random_range(-0.3..=0.3),
            reflectivity,
        })
        .collect();
    let multipath = t
        .multipath
        .iter()
        .map(|&(excess_delay_s, attenuation_db, velocity_scale)| MultipathPath {
            excess_delay_s,
            attenuation_db,
            velocity_scale,
        })
        .collect();
    DomainEnv {
        env_id: preset.label().to_string(),
        static_clutter,
        multipath,
        noise_floor_db: t.noise_floor_db + r.random_range(-1.0..=1.0),
        sensor_gain_db: t.sensor_gain_db,
        day_jitter_seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_preset_and_day_is_identical() {
        assert_eq!(make_domain_env(DomainPreset::Source, 1), make_domain_env(DomainPreset::Source, 1));
    }

    #[test]
    fn days_move_the_clutter() {
        let d1 = make_domain_env(DomainPreset::Source, 1);
        let d2 = make_domain_env(DomainPreset::Source, 2);
        assert_eq!(d1.env_id, d2.env_id);
        assert_ne!(d1.static_clutter, d2.static_clutter);
        assert_ne!(d1.noise_floor_db, d2.noise_floor_db);
    }

    #[test]
    fn preset_golden_values() {
        let src = make_domain_env(DomainPreset::Source, 1);
        let office = make_domain_env(DomainPreset::Office, 1);
        assert_eq!(src.static_clutter.len(), 3);
        assert_eq!(office.static_clutter.len(), 5);
        assert!((src.noise_floor_db - -10.0).abs() <= 1.0);
        assert!((office.noise_floor_db - 2.0).abs() <= 1.0);
        assert_ne!(src.noise_floor_db, office.noise_floor_db);
        assert_eq!(office.sensor_gain_db, -10.0);
        for p in DomainPreset::ALL {
            make_domain_env(p, 3).validate().unwrap();
        }
    }

    #[test]
    fn disabled_noise_round_trips_through_json() {
        let env = DomainEnv::anechoic("quiet");
        let json = serde_json::to_string(&env).unwrap();
        assert!(json.contains("\"noise_floor_db\":null"));
        let back: DomainEnv = serde_json::from_str(&json).unwrap();
        assert_eq!(back.noise_floor_db, f64::NEG_INFINITY);
        assert_eq!(back.noise_sigma(), 0.0);
    }

    #[test]
    fn negative_attenuation_is_rejected() {
        let mut env = DomainEnv::anechoic("x");
        env.multipath.push(MultipathPath {
            excess_delay_s: 1e-9,
            attenuation_db: -3.0,
            velocity_scale: 1.0,
        });
        assert!(env.validate().is_err());
    }

    #[test]
    fn preset_names_parse() {
        assert_eq!("office".parse::<DomainPreset>().unwrap(), DomainPreset::Office);
        assert!("garage".parse::<DomainPreset>().is_err());
    }
}
