//! The six-row ablation: single-stage variants and the two-stage method.
//!
//! Every (column, seed) pair is an independent job. Finished cells are
//! persisted under `work_dir/cells`, so an interrupted run resumes where it
//! stopped. Two-stage rows start from the same stage-1 checkpoint that the
//! contrastive row evaluates.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, AblationRow, ResultTable};
use crate::config::ExperimentConfig;
use crate::dataset::{load_split, DomainDataset, SplitMode, SplitSpec};
use crate::error::Result;
use crate::model::ModelState;
use crate::train::{run_stage, train_stage1, LossRecipe, StageRun, Supervision, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub row: AblationRow,
    pub column: String,
    pub seed: u64,
    pub target_acc: f64,
    pub report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub table: ResultTable,
    pub cells: Vec<CellResult>,
}

impl AblationOutcome {
    pub fn cell(&self, row: AblationRow, column: &str, seed: u64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.row == row && c.column == column && c.seed == seed)
    }
}

pub fn column_label(split: &SplitSpec) -> String {
    match split.mode {
        SplitMode::Temporal => "temporal".into(),
        SplitMode::Spatial => split.target_domain.clone(),
    }
}

struct Job<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a DomainDataset,
    column: String,
    seed: u64,
    dir: PathBuf,
}

impl Job<'_> {
    fn train_cfg(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.cfg.train.clone()
        }
    }

    fn cell_path(&self, row: AblationRow) -> PathBuf {
        self.dir.join(format!("{}_s{}.json", row.slug(), self.seed))
    }

    fn fresh(&self) -> Result<ModelState> {
        ModelState::new(self.cfg.encoder.clone(), self.data.num_classes, self.seed)
    }

    fn single_stage(&self, recipe: LossRecipe) -> Result<(ModelState, TrainReport)> {
        let tc = self.train_cfg();
        let mut model = self.fresh()?;
        let run = StageRun {
            stage: 1,
            epochs: tc.epochs_stage1,
            recipe,
            track_test: false,
        };
        let report = run_stage(&mut model, self.data, &self.cfg.augment, &tc, &run)?;
        Ok((model, report))
    }

    /// The shared stage-1 model, trained once per (column, seed).
    fn stage1(&self) -> Result<(ModelState, TrainReport)> {
        let ckpt = self.dir.join(format!("stage1_s{}.json", self.seed));
        let log = self.dir.join(format!("stage1_s{}.jsonl", self.seed));
        if ckpt.exists() && log.exists() {
            return Ok((ModelState::load(&ckpt)?, TrainReport::read(&log)?));
        }
        let (model, report) = train_stage1(self.cfg.encoder.clone(), self.data, &self.cfg.augment, &self.train_cfg())?;
        model.save(&ckpt)?;
        report.write(&log)?;
        Ok((model, report))
    }

    fn two_stage(&self, recipe: LossRecipe) -> Result<(ModelState, TrainReport)> {
        let tc = self.train_cfg();
        let (mut model, mut report) = self.stage1()?;
        let run = StageRun {
            stage: 2,
            epochs: tc.epochs_stage2,
            recipe,
            track_test: false,
        };
        report.extend(run_stage(&mut model, self.data, &self.cfg.augment, &tc, &run)?);
        Ok((model, report))
    }

    fn run(&self, row: AblationRow) -> Result<CellResult> {
        let path = self.cell_path(row);
        if path.exists() {
            return Ok(serde_json::from_str(&fs::read_to_string(&path)?)?);
        }
        let (model, report) = match row {
            AblationRow::Supervised => self.single_stage(LossRecipe::supervised(Supervision::Softmax))?,
            AblationRow::SupervisedAm => self.single_stage(LossRecipe::supervised(Supervision::AmSoftmax))?,
            AblationRow::Contrastive => self.stage1()?,
            AblationRow::SingleStage => self.single_stage(LossRecipe::joint())?,
            AblationRow::TwoStageNoCentroid => self.two_stage(LossRecipe {
                centroid: false,
                ..LossRecipe::stage2()
            })?,
            AblationRow::Full => self.two_stage(LossRecipe::stage2())?,
        };
        let cell = CellResult {
            row,
            column: self.column.clone(),
            seed: self.seed,
            target_acc: evaluate(&model, self.data)?,
            report,
        };
        fs::write(&path, serde_json::to_string(&cell)?)?;
        log::info!("ablation {} / {} / seed {}: {:.2}%", row.label(), self.column, self.seed, cell.target_acc);
        Ok(cell)
    }
}

/// Runs `cfg.ablation` on the dataset stored at `data_root`.
pub fn run_ablation(cfg: &ExperimentConfig, data_root: &Path, work_dir: &Path) -> Result<AblationOutcome> {
    cfg.validate()?;
    let ab = &cfg.ablation;
    let columns: Vec<(String, DomainDataset)> = ab
        .columns
        .iter()
        .map(|split| Ok((column_label(split), load_split(data_root, split)?)))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (column, data) in &columns {
        let dir = work_dir.join("cells").join(column);
        fs::create_dir_all(&dir)?;
        for &seed in &ab.seeds {
            jobs.push(Job {
                cfg,
                data,
                column: column.clone(),
                seed,
                dir: dir.clone(),
            });
        }
    }
    let results: Vec<Vec<CellResult>> = jobs
        .par_iter()
        .map(|job| ab.rows.iter().map(|&row| job.run(row)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let cells: Vec<CellResult> = results.into_iter().flatten().collect();

    let mut table = ResultTable::new(
        ab.rows.iter().map(|r| r.label().to_string()).collect(),
        columns.iter().map(|(c, _)| c.clone()).collect(),
        ab.seeds.clone(),
    );
    for (r, &row) in ab.rows.iter().enumerate() {
        for (c, (column, _)) in columns.iter().enumerate() {
            for &seed in &ab.seeds {
                let cell = cells.iter().find(|x| x.row == row && &x.column == column && x.seed == seed);
                table.cells[r][c].push(cell.expect("every cell was run").target_acc);
            }
        }
    }
    Ok(AblationOutcome { table, cells })
}
