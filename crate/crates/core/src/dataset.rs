//! Spectrogram persistence and domain-aware train/test splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{Spectrogram, SpectrogramMeta};
use crate::error::{Error, Result};
use crate::sim::Direction;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path of the pixel file relative to the dataset root.
    pub path: String,
    pub subject: usize,
    pub domain: String,
    pub day: u32,
    pub direction: Direction,
    /// Hex SHA-256 of the pixel file.
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Number of subjects; labels run over `0..roster`.
    pub roster: usize,
    pub entries: Vec<ManifestEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut subjects = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Integrity(format!("duplicate manifest path {}", e.path)));
            }
            if e.subject >= self.roster {
                return Err(Error::Integrity(format!("{}: subject {} outside roster of {}", e.path, e.subject, self.roster)));
            }
            subjects.insert(e.subject);
        }
        if !self.entries.is_empty() && subjects.len() != self.roster {
            return Err(Error::Integrity(format!(
                "subjects are not dense: {} of {} present",
                subjects.len(),
                self.roster
            )));
        }
        Ok(())
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root)?;
        fs::write(root.join(MANIFEST_FILE), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let m: Self = serde_json::from_slice(&fs::read(root.join(MANIFEST_FILE))?)?;
        m.validate()?;
        Ok(m)
    }

    /// Days present for `domain`, ascending.
    pub fn days(&self, domain: &str) -> Vec<u32> {
        self.entries
            .iter()
            .filter(|e| e.domain == domain)
            .map(|e| e.day)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

fn entry_meta(e: &ManifestEntry) -> SpectrogramMeta {
    SpectrogramMeta {
        subject: Some(e.subject),
        domain: e.domain.clone(),
        day: e.day,
        direction: Some(e.direction),
    }
}

/// Writes every sample under `root` with a manifest. Samples must carry a
/// subject and a direction.
pub fn write_dataset(samples: &[Spectrogram], root: &Path) -> Result<Manifest> {
    let mut entries = Vec::with_capacity(samples.len());
    let mut roster = 0;
    for (i, s) in samples.iter().enumerate() {
        let (Some(subject), Some(direction)) = (s.meta.subject, s.meta.direction) else {
            return Err(Error::Contract(format!("sample {i} lacks a subject or direction")));
        };
        roster = roster.max(subject + 1);
        let rel = format!(
            "spectrograms/{}/day{:02}/s{:02}_{}_{:05}.f32",
            s.meta.domain,
            s.meta.day,
            subject,
            direction.label(),
            i
        );
        entries.push(ManifestEntry {
            path: rel,
            subject,
            domain: s.meta.domain.clone(),
            day: s.meta.day,
            direction,
            sha256: sha256_hex(&s.data_bytes()),
        });
    }
    let manifest = Manifest { roster, entries };
    manifest.validate()?;
    samples
        .par_iter()
        .zip(&manifest.entries)
        .try_for_each(|(s, e)| s.write(&root.join(&e.path)))?;
    manifest.save(root)?;
    Ok(manifest)
}

fn read_entry(root: &Path, e: &ManifestEntry) -> Result<Spectrogram> {
    let path: PathBuf = root.join(&e.path);
    let bytes = fs::read(&path).map_err(|err| Error::Integrity(format!("missing or unreadable {}: {err}", path.display())))?;
    let found = sha256_hex(&bytes);
    if found != e.sha256 {
        return Err(Error::Corruption {
            path,
            expected: e.sha256.clone(),
            found,
        });
    }
    let s = Spectrogram::read(&path)?;
    if s.meta != entry_meta(e) {
        return Err(Error::Integrity(format!("{}: sidecar metadata disagrees with the manifest", path.display())));
    }
    Ok(s)
}

/// Reads and verifies every manifest entry, in manifest order.
pub fn read_dataset(manifest: &Manifest, root: &Path) -> Result<Vec<Spectrogram>> {
    manifest.entries.par_iter().map(|e| read_entry(root, e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Source and target are different locations over the same days.
    Spatial,
    /// Source and target are consecutive day ranges at one location.
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train_days: u32,
    pub source_domain: String,
    pub target_domain: String,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.train_days) {
            return Err(Error::Config(format!("split.train_days must be 1, 2 or 3, got {}", self.train_days)));
        }
        Ok(())
    }
}

/// Which domain and days feed each partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub source: (String, Vec<u32>),
    pub target: (String, Vec<u32>),
    pub test: (String, Vec<u32>),
}

/// Resolves the day ranges of a split against the days the manifest holds.
pub fn plan_split(manifest: &Manifest, spec: &SplitSpec) -> Result<SplitPlan> {
    spec.validate()?;
    let k = spec.train_days;
    let range = |a: u32, b: u32| (a..=b).collect::<Vec<_>>();
    let mut shortfall: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    let mut need = |domain: &str, days: &[u32]| {
        let have = manifest.days(domain);
        for &d in days.iter().filter(|d| !have.contains(d)) {
            shortfall.entry(domain.to_string()).or_default().insert(d);
        }
    };
    let plan = match spec.mode {
        SplitMode::Spatial => {
            let last = manifest.days(&spec.target_domain).last().copied().unwrap_or(0);
            let source = range(1, k);
            let target = range(1, k);
            need(&spec.source_domain, &source);
            need(&spec.target_domain, &target);
            if last <= k {
                need(&spec.target_domain, &[k + 1]);
            }
            SplitPlan {
                source: (spec.source_domain.clone(), source),
                target: (spec.target_domain.clone(), target),
                test: (spec.target_domain.clone(), range(k + 1, last.max(k + 1))),
            }
        }
        SplitMode::Temporal => {
            let domain = &spec.source_domain;
            let last = manifest.days(domain).last().copied().unwrap_or(0);
            let source = range(1, k);
            let target = range(k + 1, 2 * k);
            need(domain, &source);
            need(domain, &target);
            if last <= 2 * k {
                need(domain, &[2 * k + 1]);
            }
            SplitPlan {
                source: (domain.clone(), source),
                target: (domain.clone(), target),
                test: (domain.clone(), range(2 * k + 1, last.max(2 * k + 1))),
            }
        }
    };
    if !shortfall.is_empty() {
        let parts: Vec<String> = shortfall
            .iter()
            .map(|(domain, days)| format!("{domain} days {:?}", days.iter().collect::<Vec<_>>()))
            .collect();
        return Err(Error::Split(format!("manifest is missing {}", parts.join(", "))));
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: Spectrogram,
    pub subject: usize,
}

/// A target-domain sample with its subject identity removed.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSample {
    image: Spectrogram,
}

impl UnlabeledSample {
    pub fn new(mut image: Spectrogram) -> Self {
        image.meta.subject = None;
        Self { image }
    }

    pub fn image(&self) -> &Spectrogram {
        &self.image
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainDataset {
    pub num_classes: usize,
    pub labeled_source: Vec<LabeledSample>,
    pub unlabeled_target: Vec<UnlabeledSample>,
    pub test: Vec<LabeledSample>,
}

/// Splits `samples` (as read for `manifest`) into the three partitions.
pub fn make_split(manifest: &Manifest, samples: &[Spectrogram], spec: &SplitSpec) -> Result<DomainDataset> {
    if samples.len() != manifest.entries.len() {
        return Err(Error::Contract("make_split: samples do not match the manifest".into()));
    }
    let plan = plan_split(manifest, spec)?;
    let member = |part: &(String, Vec<u32>), e: &ManifestEntry| e.domain == part.0 && part.1.contains(&e.day);
    let mut ds = DomainDataset {
        num_classes: manifest.roster,
        ..Default::default()
    };
    for (e, s) in manifest.entries.iter().zip(samples) {
        if member(&plan.source, e) {
            ds.labeled_source.push(LabeledSample {
                image: s.clone(),
                subject: e.subject,
            });
        } else if member(&plan.target, e) {
            ds.unlabeled_target.push(UnlabeledSample::new(s.clone()));
        } else if member(&plan.test, e) {
            ds.test.push(LabeledSample {
                image: s.clone(),
                subject: e.subject,
            });
        }
    }
    Ok(ds)
}

/// Reads the manifest under `root`, verifies every file and splits it.
pub fn load_split(root: &Path, spec: &SplitSpec) -> Result<DomainDataset> {
    let manifest = Manifest::load(root)?;
    plan_split(&manifest, spec)?;
    let samples = read_dataset(&manifest, root)?;
    make_split(&manifest, &samples, spec)
}
