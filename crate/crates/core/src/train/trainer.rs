//! Epoch loop shared by both stages and by the ablation variants.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::centroid::{batch_centroids, CentroidBank};
use super::config::{lr_at, Adam, TrainConfig};
use super::objective::{evaluate_objective, pseudo_labels, Branch, LossBreakdown, LossRecipe, ObjectiveTerms};
use crate::augment::{augment, AugPolicy};
use crate::dataset::DomainDataset;
use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::model::{EncoderSpec, ModelState};
use crate::rng;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: u8,
    pub losses: LossBreakdown,
    /// Share of unlabeled target samples whose pseudo-label passes `tau`.
    pub mask_rate: f64,
    pub lr: f64,
    pub source_acc: f64,
    pub target_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json_lines()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn extend(&mut self, other: TrainReport) {
        self.records.extend(other.records);
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Options of one run of the epoch loop.
#[derive(Debug, Clone, Copy)]
pub struct StageRun {
    /// Stage number stored in the log and mixed into RNG streams.
    pub stage: u8,
    pub epochs: usize,
    pub recipe: LossRecipe,
    /// Evaluate test accuracy after every epoch.
    pub track_test: bool,
}

struct Pools<'a> {
    source: Vec<(&'a Spectrogram, Vec<f64>, usize)>,
    target: Vec<(&'a Spectrogram, Vec<f64>)>,
    test: Vec<(Vec<f64>, usize)>,
}

fn check_shape(model: &ModelState, s: &Spectrogram) -> Result<()> {
    if s.rows != model.spec.input_h || s.cols != model.spec.input_w {
        return Err(Error::Contract(format!(
            "spectrogram is {}x{} but the encoder expects {}x{}",
            s.rows, s.cols, model.spec.input_h, model.spec.input_w
        )));
    }
    Ok(())
}

impl<'a> Pools<'a> {
    fn new(model: &ModelState, data: &'a DomainDataset) -> Result<Self> {
        if data.num_classes != model.num_classes {
            return Err(Error::Contract(format!(
                "dataset has {} classes, model has {}",
                data.num_classes, model.num_classes
            )));
        }
        for s in data.labeled_source.iter().map(|x| &x.image).chain(data.unlabeled_target.iter().map(|u| u.image())) {
            check_shape(model, s)?;
        }
        Ok(Self {
            source: data.labeled_source.iter().map(|x| (&x.image, x.image.to_f64(), x.subject)).collect(),
            target: data.unlabeled_target.iter().map(|u| (u.image(), u.image().to_f64())).collect(),
            test: data.test.iter().map(|x| (x.image.to_f64(), x.subject)).collect(),
        })
    }
}

fn shuffled(n: usize, seed: u64, path: &[u64]) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut rng::stream(seed, path));
    v
}

fn augmented(items: &[&Spectrogram], policy: &AugPolicy, seed: u64, path: &[u64]) -> Vec<Vec<f64>> {
    items
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut p = path.to_vec();
            p.push(i as u64);
            augment(s, policy, &mut rng::stream(seed, &p)).to_f64()
        })
        .collect()
}

fn accuracy(model: &ModelState, items: &[(Vec<f64>, usize)]) -> Result<f64> {
    if items.is_empty() {
        return Ok(0.0);
    }
    let images: Vec<&[f64]> = items.iter().map(|(x, _)| x.as_slice()).collect();
    let pred = model.predict_batch(&images)?;
    let correct = pred.iter().zip(items).filter(|(p, (_, y))| **p == *y).count();
    Ok(100.0 * correct as f64 / items.len() as f64)
}

/// Trains `model` in place for `run.epochs` epochs of `run.recipe`.
pub fn run_stage(model: &mut ModelState, data: &DomainDataset, policy: &AugPolicy, cfg: &TrainConfig, run: &StageRun) -> Result<TrainReport> {
    cfg.validate()?;
    policy.validate()?;
    let pools = Pools::new(model, data)?;
    let recipe = run.recipe;
    let needs_target = recipe.similarity || recipe.needs_pseudo_labels();
    if pools.source.is_empty() && recipe.supervision.is_some() {
        return Err(Error::Contract("no labeled source samples".into()));
    }
    if pools.target.is_empty() && needs_target {
        return Err(Error::Contract("no unlabeled target samples".into()));
    }
    let n_src = pools.source.len();
    let n_tgt = pools.target.len();
    let pool_len = if recipe.supervision.is_some() { n_src } else { n_src.max(n_tgt) };
    let b = cfg.batch_size.min(pool_len.max(1));
    let steps = (pool_len / b).max(1);
    let total_steps = steps * run.epochs;
    let stage_tag = run.stage as u64;
    let cycles = if run.stage == 2 { cfg.lr_cycles_stage2 } else { cfg.lr_cycles };
    let seed = cfg.seed;
    let dim = model.embedding_dim();
    let mut adam = Adam::new(model.params.len());
    let mut bank = CentroidBank::new(model.num_classes, dim);
    let mut report = TrainReport::default();
    let mut last_good: Option<(usize, usize)> = None;
    let target_raw: Vec<&[f64]> = pools.target.iter().map(|t| t.1.as_slice()).collect();

    for epoch in 0..run.epochs {
        let e = epoch as u64;
        let src_perm = shuffled(n_src, seed, &[rng::tag("shuffle-source"), stage_tag, e]);
        let tgt_perm = shuffled(n_tgt, seed, &[rng::tag("shuffle-target"), stage_tag, e]);
        let mut sum = LossBreakdown::default();
        let mut lr = cfg.lr_start;
        for step in 0..steps {
            let k = step as u64;
            let global = epoch * steps + step;
            lr = lr_at(global, total_steps, cycles, cfg);
            let src_idx: Vec<usize> = (0..b.min(n_src)).map(|i| src_perm[(step * b + i) % n_src]).collect();
            let tgt_idx: Vec<usize> = if n_tgt == 0 { Vec::new() } else { (0..b).map(|i| tgt_perm[(step * b + i) % n_tgt]).collect() };
            let labels: Vec<usize> = src_idx.iter().map(|&i| pools.source[i].2).collect();

            let src_specs: Vec<&Spectrogram> = src_idx.iter().map(|&i| pools.source[i].0).collect();
            let src_aug;
            let src_images: Vec<&[f64]> = if recipe.augment_source {
                src_aug = augmented(&src_specs, policy, seed, &[rng::tag("aug-source"), stage_tag, e, k]);
                src_aug.iter().map(|v| v.as_slice()).collect()
            } else {
                src_idx.iter().map(|&i| pools.source[i].1.as_slice()).collect()
            };
            let source = match recipe.supervision {
                Some(_) => Some(Branch::compute(model, &src_images)?),
                None => None,
            };

            let mut similarity = None;
            if recipe.similarity {
                let n_from_src = if recipe.supervision.is_some() {
                    ((b as f64 * cfg.mixed_source_fraction).round() as usize).min(src_idx.len())
                } else {
                    0
                };
                let mut specs: Vec<&Spectrogram> = src_specs[..n_from_src].to_vec();
                let mut raws: Vec<&[f64]> = src_idx[..n_from_src].iter().map(|&i| pools.source[i].1.as_slice()).collect();
                for &i in tgt_idx.iter().take(b - n_from_src) {
                    specs.push(pools.target[i].0);
                    raws.push(pools.target[i].1.as_slice());
                }
                let aug = augmented(&specs, policy, seed, &[rng::tag("aug-mixed"), stage_tag, e, k]);
                let aug_refs: Vec<&[f64]> = aug.iter().map(|v| v.as_slice()).collect();
                similarity = Some((Branch::compute(model, &raws)?, Branch::compute(model, &aug_refs)?));
            }

            let mut consistency = None;
            if recipe.needs_pseudo_labels() {
                let raws: Vec<&[f64]> = tgt_idx.iter().map(|&i| pools.target[i].1.as_slice()).collect();
                let feats = model.encode_batch(&raws)?;
                let pseudo = pseudo_labels(model, cfg, &feats);
                if recipe.centroid {
                    let src_feats = match &source {
                        Some(branch) if !recipe.augment_source => branch.feats.clone(),
                        _ => {
                            let raw: Vec<&[f64]> = src_idx.iter().map(|&i| pools.source[i].1.as_slice()).collect();
                            model.encode_batch(&raw)?
                        }
                    };
                    let c = batch_centroids(&src_feats, &labels, &feats, &pseudo, model.num_classes, dim);
                    bank.ema_update(&c, cfg.alpha);
                }
                if recipe.consistency {
                    let specs: Vec<&Spectrogram> = tgt_idx.iter().map(|&i| pools.target[i].0).collect();
                    let aug = augmented(&specs, policy, seed, &[rng::tag("aug-target"), stage_tag, e, k]);
                    let aug_refs: Vec<&[f64]> = aug.iter().map(|v| v.as_slice()).collect();
                    consistency = Some((Branch::compute(model, &aug_refs)?, pseudo));
                }
            }

            let terms = ObjectiveTerms {
                supervised: source.as_ref().zip(recipe.supervision).map(|(br, kind)| (br, labels.as_slice(), kind)),
                similarity: similarity.as_ref().map(|(r, a)| (r, a)),
                consistency: consistency.as_ref().map(|(a, p)| (a, p)),
                centroid: recipe.centroid.then_some(&bank),
            };
            let (loss, grad) = evaluate_objective(model, cfg, &terms)?;
            if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss or gradient at stage {} epoch {epoch} step {step}; last good (epoch, step) {:?}",
                    run.stage, last_good
                )));
            }
            adam.step(&mut model.params, &grad, lr);
            if !model.is_finite() {
                return Err(Error::Numerical(format!(
                    "parameters diverged at stage {} epoch {epoch} step {step}; last good (epoch, step) {:?}",
                    run.stage, last_good
                )));
            }
            last_good = Some((epoch, step));
            sum.add_scaled(&loss, 1.0 / steps as f64);
        }

        let mask_rate = if target_raw.is_empty() {
            0.0
        } else {
            pseudo_labels(model, cfg, &model.encode_batch(&target_raw)?).mask_rate()
        };
        let source_items: Vec<(Vec<f64>, usize)> = pools.source.iter().map(|(_, x, y)| (x.clone(), *y)).collect();
        let record = EpochRecord {
            epoch,
            stage: run.stage,
            losses: sum,
            mask_rate,
            lr,
            source_acc: accuracy(model, &source_items)?,
            target_acc: if run.track_test && !pools.test.is_empty() {
                Some(accuracy(model, &pools.test)?)
            } else {
                None
            },
        };
        log::info!(
            "stage {} epoch {epoch}: loss {:.4} mask {:.3} src {:.1}% tgt {:?}",
            run.stage,
            record.losses.total,
            record.mask_rate,
            record.source_acc,
            record.target_acc
        );
        report.records.push(record);
    }
    Ok(report)
}

/// Stage 1 from a fresh, seeded model.
pub fn train_stage1(spec: EncoderSpec, data: &DomainDataset, policy: &AugPolicy, cfg: &TrainConfig) -> Result<(ModelState, TrainReport)> {
    let mut model = ModelState::new(spec, data.num_classes, cfg.seed)?;
    let report = run_stage(
        &mut model,
        data,
        policy,
        cfg,
        &StageRun {
            stage: 1,
            epochs: cfg.epochs_stage1,
            recipe: LossRecipe::stage1(),
            track_test: true,
        },
    )?;
    Ok((model, report))
}

/// Stage 2 fine-tuning, which must start from a stage-1 model.
pub fn train_stage2(init: Option<ModelState>, data: &DomainDataset, policy: &AugPolicy, cfg: &TrainConfig) -> Result<(ModelState, TrainReport)> {
    let mut model = init.ok_or_else(|| Error::Orchestration("stage 2 needs a stage-1 checkpoint".into()))?;
    let report = run_stage(
        &mut model,
        data,
        policy,
        cfg,
        &StageRun {
            stage: 2,
            epochs: cfg.epochs_stage2,
            recipe: LossRecipe::stage2(),
            track_test: true,
        },
    )?;
    Ok((model, report))
}
