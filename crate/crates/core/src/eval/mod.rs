//! Evaluation, ablation harness, saliency and plots.

mod ablation;
mod plots;
mod saliency;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{DomainDataset, LabeledSample};
use crate::error::{Error, Result};
use crate::model::ModelState;

pub use ablation::{column_label, run_ablation, AblationOutcome, CellResult};
pub use plots::{bar_chart, export_plots, export_run_plots, line_chart, saliency_overlay, spectrogram_grid};
pub use saliency::{grad_cam, SaliencyMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationRow {
    Supervised,
    SupervisedAm,
    Contrastive,
    SingleStage,
    TwoStageNoCentroid,
    Full,
}

impl AblationRow {
    pub const ALL: [AblationRow; 6] = [
        Self::Supervised,
        Self::SupervisedAm,
        Self::Contrastive,
        Self::SingleStage,
        Self::TwoStageNoCentroid,
        Self::Full,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Supervised => "supervised",
            Self::SupervisedAm => "supervised+am",
            Self::Contrastive => "supervised+am+contrastive",
            Self::SingleStage => "supervised+am+consistency+centroid",
            Self::TwoStageNoCentroid => "two-stage w/o centroid",
            Self::Full => "two-stage full",
        }
    }

    /// File-name friendly identifier.
    pub fn slug(self) -> &'static str {
        match self {
            Self::Supervised => "supervised",
            Self::SupervisedAm => "supervised_am",
            Self::Contrastive => "contrastive",
            Self::SingleStage => "single_stage",
            Self::TwoStageNoCentroid => "two_stage_no_centroid",
            Self::Full => "full",
        }
    }
}

/// Top-1 accuracy in percent of `model` on labeled `samples`.
pub fn accuracy(model: &ModelState, samples: &[LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty split".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.subject >= model.num_classes) {
        return Err(Error::Contract(format!(
            "label {} outside the model's {} classes",
            bad.subject, model.num_classes
        )));
    }
    let images: Vec<Vec<f64>> = samples.iter().map(|s| s.image.to_f64()).collect();
    let refs: Vec<&[f64]> = images.iter().map(|v| v.as_slice()).collect();
    let pred = model.predict_batch(&refs)?;
    let correct = pred.iter().zip(samples).filter(|(p, s)| **p == s.subject).count();
    Ok(100.0 * correct as f64 / samples.len() as f64)
}

/// Target-test accuracy of `model` on `data`.
pub fn evaluate(model: &ModelState, data: &DomainDataset) -> Result<f64> {
    if data.num_classes != model.num_classes {
        return Err(Error::Contract(format!(
            "split has {} classes, checkpoint has {}",
            data.num_classes, model.num_classes
        )));
    }
    accuracy(model, &data.test)
}

/// Loads a checkpoint read-only and evaluates it.
pub fn evaluate_checkpoint(path: &Path, data: &DomainDataset) -> Result<f64> {
    evaluate(&ModelState::load(path)?, data)
}

/// Accuracy (%) per row, column and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub seeds: Vec<u64>,
    /// `cells[row][column][seed]`.
    pub cells: Vec<Vec<Vec<f64>>>,
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ResultTable {
    pub fn new(rows: Vec<String>, columns: Vec<String>, seeds: Vec<u64>) -> Self {
        let cells = vec![vec![Vec::with_capacity(seeds.len()); columns.len()]; rows.len()];
        Self {
            rows,
            columns,
            seeds,
            cells,
        }
    }

    pub fn median(&self, row: usize, column: usize) -> f64 {
        median(&self.cells[row][column])
    }

    pub fn range(&self, row: usize, column: usize) -> (f64, f64) {
        let v = &self.cells[row][column];
        (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Mean of the row's column medians.
    pub fn average(&self, row: usize) -> f64 {
        (0..self.columns.len()).map(|c| self.median(row, c)).sum::<f64>() / self.columns.len() as f64
    }

    pub fn row_index(&self, label: &str) -> Option<usize> {
        self.rows.iter().position(|r| r == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for c in &self.columns {
            let _ = write!(out, ",{c}");
        }
        out.push_str(",average");
        for c in &self.columns {
            let _ = write!(out, ",{c}_min,{c}_max");
        }
        out.push('\n');
        for (r, label) in self.rows.iter().enumerate() {
            out.push_str(label);
            for c in 0..self.columns.len() {
                let _ = write!(out, ",{:.2}", self.median(r, c));
            }
            let _ = write!(out, ",{:.2}", self.average(r));
            for c in 0..self.columns.len() {
                let (lo, hi) = self.range(r, c);
                let _ = write!(out, ",{lo:.2},{hi:.2}");
            }
            out.push('\n');
        }
        out
    }

    /// Medians with the seed range in brackets.
    pub fn to_text(&self) -> String {
        let mut header = vec!["".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("average".into());
        let mut lines = vec![header];
        for (r, label) in self.rows.iter().enumerate() {
            let mut line = vec![label.clone()];
            for c in 0..self.columns.len() {
                let (lo, hi) = self.range(r, c);
                line.push(format!("{:.2} [{lo:.1}-{hi:.1}]", self.median(r, c)));
            }
            line.push(format!("{:.2}", self.average(r)));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len()).map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0)).collect();
        let mut out = format!("accuracy % (median over seeds {:?})\n", self.seeds);
        for l in &lines {
            let cells: Vec<String> = l.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv`, `<stem>.txt` and `<stem>.table.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            (dir.join(format!("{stem}.csv")), self.to_csv()),
            (dir.join(format!("{stem}.txt")), self.to_text()),
            (dir.join(format!("{stem}.table.json")), serde_json::to_string_pretty(self)?),
        ];
        let mut out = Vec::new();
        for (path, text) in files {
            fs::write(&path, text)?;
            out.push(path);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
