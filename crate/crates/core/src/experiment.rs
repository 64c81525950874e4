//! Run directories and whole-dataset simulation.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::dataset::{write_dataset, Manifest};
use crate::dsp::{Spectrogram, SpectrogramMeta, SpectrogramPipeline};
use crate::error::Result;
use crate::sim::{make_domain_env, simulate_walk, synth_roster, Direction, DomainPreset, Walk};

pub const CONFIG_FILE: &str = "config.json";

/// `{config.json, manifest.json, spectrograms/, checkpoints/, reports/, plots/}`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// Creates the layout and writes the exact config used.
    pub fn create(root: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let run = Self { root: root.to_path_buf() };
        for sub in ["checkpoints", "reports", "plots"] {
            fs::create_dir_all(root.join(sub))?;
        }
        fs::write(run.config_path(), cfg.to_json()?)?;
        Ok(run)
    }

    pub fn open(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config_path())
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.checkpoints().join(format!("{name}.json"))
    }
}

/// One recorded sample: who, where, when, which way, which repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub subject: usize,
    pub domain: DomainPreset,
    pub day: u32,
    pub direction: Direction,
    pub index: usize,
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for subject in 0..cfg.roster.subjects {
        for &domain in &cfg.domains {
            for day in 1..=cfg.days_for(domain) {
                for direction in [Direction::Toward, Direction::Away] {
                    for index in 0..cfg.walk.samples_per_direction {
                        out.push(Cell {
                            subject,
                            domain,
                            day,
                            direction,
                            index,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Simulates and processes every cell; output order follows [`cells`].
pub fn simulate_samples(cfg: &ExperimentConfig) -> Result<Vec<Spectrogram>> {
    cfg.validate()?;
    let roster = synth_roster(cfg.seed, &cfg.roster)?;
    let pipeline = SpectrogramPipeline::new(cfg.pipeline.clone());
    cells(cfg)
        .par_iter()
        .map(|c| {
            let env = make_domain_env(c.domain, c.day);
            let (profile, walk) = Walk::draw(&cfg.walk, &roster[c.subject], cfg.seed, &env, c.day, c.direction, c.index);
            let signal = simulate_walk(&profile, &env, &cfg.radar, &walk)?;
            Ok(pipeline.process(&signal)?.with_meta(SpectrogramMeta {
                subject: Some(c.subject),
                domain: c.domain.label().into(),
                day: c.day,
                direction: Some(c.direction),
            }))
        })
        .collect()
}

/// Simulates the dataset into `run` and writes its manifest.
pub fn simulate_into(run: &RunDir, cfg: &ExperimentConfig) -> Result<Manifest> {
    let samples = simulate_samples(cfg)?;
    write_dataset(&samples, &run.root)
}
