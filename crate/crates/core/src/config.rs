//! Experiment configuration: everything a run needs, in one JSON document.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugPolicy;
use crate::dataset::{SplitMode, SplitSpec};
use crate::dsp::{EnhanceConfig, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::AblationRow;
use crate::model::EncoderSpec;
use crate::sim::{DomainPreset, RadarConfig, RosterConfig, WalkConfig};
use crate::train::TrainConfig;

pub const ENV_SEED: &str = "GAITSADA_SEED";
pub const ENV_OUTPUT_ROOT: &str = "GAITSADA_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub rows: Vec<AblationRow>,
    /// One result column per split.
    pub columns: Vec<SplitSpec>,
    /// Training seeds; cells report the median over them.
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            rows: AblationRow::ALL.to_vec(),
            columns: vec![SplitSpec {
                mode: SplitMode::Spatial,
                train_days: 1,
                source_domain: DomainPreset::Source.label().into(),
                target_domain: DomainPreset::Office.label().into(),
            }],
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_root: PathBuf,
    pub radar: RadarConfig,
    pub roster: RosterConfig,
    pub walk: WalkConfig,
    pub domains: Vec<DomainPreset>,
    /// Recording days simulated for every domain.
    pub days: u32,
    /// Days simulated for the split's source domain when it differs from
    /// the target; `None` means `days`.
    pub source_days: Option<u32>,
    pub pipeline: PipelineConfig,
    pub split: SplitSpec,
    pub augment: AugPolicy,
    pub encoder: EncoderSpec,
    pub train: TrainConfig,
    pub ablation: AblationConfig,
}

/// Side length of the desk-scale spectrogram images.
pub const DESK_IMAGE: usize = 32;

impl Default for ExperimentConfig {
    /// The desk-scale benchmark: four subjects, the source lab and the office
    /// as target, 32x32 spectrograms and the small residual encoder.
    fn default() -> Self {
        Self {
            seed: 1,
            output_root: PathBuf::from("runs"),
            radar: RadarConfig::default(),
            roster: RosterConfig::default(),
            walk: WalkConfig::default(),
            domains: vec![DomainPreset::Source, DomainPreset::Office],
            days: 3,
            source_days: Some(1),
            pipeline: PipelineConfig {
                enhance: EnhanceConfig {
                    out_rows: DESK_IMAGE,
                    out_cols: DESK_IMAGE,
                },
                ..PipelineConfig::default()
            },
            split: SplitSpec {
                mode: SplitMode::Spatial,
                train_days: 1,
                source_domain: DomainPreset::Source.label().into(),
                target_domain: DomainPreset::Office.label().into(),
            },
            augment: AugPolicy::desk(),
            encoder: EncoderSpec::desk(DESK_IMAGE, DESK_IMAGE, 2),
            train: TrainConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.augment.validate()?;
        self.encoder.validate()?;
        self.train.validate()?;
        self.split.validate()?;
        if self.roster.subjects < 2 {
            return Err(Error::Config("roster.subjects must be at least 2".into()));
        }
        if self.days == 0 {
            return Err(Error::Config("days must be at least 1".into()));
        }
        if self.source_days == Some(0) {
            return Err(Error::Config("source_days must be at least 1".into()));
        }
        if self.domains.is_empty() {
            return Err(Error::Config("domains must not be empty".into()));
        }
        if self.walk.samples_per_direction == 0 {
            return Err(Error::Config("walk.samples_per_direction must be positive".into()));
        }
        let e = &self.pipeline.enhance;
        if (e.out_rows, e.out_cols) != (self.encoder.input_h, self.encoder.input_w) {
            return Err(Error::Config(format!(
                "pipeline.enhance is {}x{} but encoder input is {}x{}",
                e.out_rows, e.out_cols, self.encoder.input_h, self.encoder.input_w
            )));
        }
        if self.ablation.seeds.is_empty() {
            return Err(Error::Config("ablation.seeds must not be empty".into()));
        }
        for split in &self.ablation.columns {
            split.validate()?;
        }
        Ok(())
    }

    /// Days simulated for `domain`.
    pub fn days_for(&self, domain: DomainPreset) -> u32 {
        let spatial_source = self.split.mode == SplitMode::Spatial
            && self.split.source_domain == domain.label()
            && self.split.target_domain != domain.label();
        match self.source_days {
            Some(d) if spatial_source => d,
            _ => self.days,
        }
    }

    /// Parses a config file; unknown or mistyped fields are config errors naming the field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies the seed and output-root overrides from the environment.
    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_overrides(std::env::var(ENV_SEED).ok().as_deref(), std::env::var(ENV_OUTPUT_ROOT).ok().as_deref())
    }

    pub fn apply_overrides(&mut self, seed: Option<&str>, output_root: Option<&str>) -> Result<()> {
        if let Some(s) = seed {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_SEED} must be an unsigned integer, got '{s}'")))?;
            self.train.seed = self.seed;
        }
        if let Some(root) = output_root {
            self.output_root = PathBuf::from(root);
        }
        Ok(())
    }
}
