//! Stage objectives: loss values and exact parameter gradients for one batch.

use serde::{Deserialize, Serialize};

use super::centroid::{batch_centroids, centroid_loss_grad, CentroidBank};
use super::config::TrainConfig;
use super::losses::{am_softmax_grad, consistency_grad, predict_probs, similarity_grad, PseudoLabelBatch};
use crate::error::{Error, Result};
use crate::model::{ModelState, Trace};

/// Encoder outputs of one batch with the activations needed for backprop.
pub struct Branch {
    pub feats: Vec<Vec<f64>>,
    traces: Vec<Trace>,
}

impl Branch {
    pub fn compute(model: &ModelState, images: &[&[f64]]) -> Result<Self> {
        let (feats, traces) = model.encoder().forward_traced_batch(&model.params, images)?;
        Ok(Self { feats, traces })
    }

    pub fn len(&self) -> usize {
        self.feats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feats.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Cross-entropy on scaled cosines without a margin.
    Softmax,
    AmSoftmax,
}

/// Which loss terms a training stage optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossRecipe {
    pub supervision: Option<Supervision>,
    /// Supervised branch sees augmented (true) or raw (false) source images.
    pub augment_source: bool,
    pub similarity: bool,
    pub consistency: bool,
    pub centroid: bool,
}

impl LossRecipe {
    pub fn stage1() -> Self {
        Self {
            supervision: Some(Supervision::AmSoftmax),
            augment_source: true,
            similarity: true,
            consistency: false,
            centroid: false,
        }
    }

    pub fn stage2() -> Self {
        Self {
            supervision: Some(Supervision::AmSoftmax),
            augment_source: false,
            similarity: false,
            consistency: true,
            centroid: true,
        }
    }

    pub fn supervised(kind: Supervision) -> Self {
        Self {
            supervision: Some(kind),
            augment_source: true,
            similarity: false,
            consistency: false,
            centroid: false,
        }
    }

    /// Supervised, consistency and centroid terms trained jointly from scratch.
    pub fn joint() -> Self {
        Self {
            supervision: Some(Supervision::AmSoftmax),
            augment_source: true,
            similarity: false,
            consistency: true,
            centroid: true,
        }
    }

    pub fn similarity_only() -> Self {
        Self {
            supervision: None,
            augment_source: false,
            similarity: true,
            consistency: false,
            centroid: false,
        }
    }

    /// Whether a step needs pseudo-labels for the target batch.
    pub fn needs_pseudo_labels(&self) -> bool {
        self.consistency || self.centroid
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub supervised: f64,
    pub similarity: f64,
    pub consistency: f64,
    pub centroid: f64,
    pub l2: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.supervised, self.similarity, self.consistency, self.centroid, self.l2, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn add_scaled(&mut self, other: &Self, k: f64) {
        self.supervised += k * other.supervised;
        self.similarity += k * other.similarity;
        self.consistency += k * other.consistency;
        self.centroid += k * other.centroid;
        self.l2 += k * other.l2;
        self.total += k * other.total;
    }
}

/// Inputs of every active term; `None` switches a term off.
#[derive(Default)]
pub struct ObjectiveTerms<'a> {
    pub supervised: Option<(&'a Branch, &'a [usize], Supervision)>,
    pub similarity: Option<(&'a Branch, &'a Branch)>,
    pub consistency: Option<(&'a Branch, &'a PseudoLabelBatch)>,
    pub centroid: Option<&'a CentroidBank>,
}

/// Sum of the active terms plus the kernel L2 penalty, and its gradient.
pub fn evaluate_objective(model: &ModelState, cfg: &TrainConfig, terms: &ObjectiveTerms) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut grad = vec![0.0; model.params.len()];
    let mut out = LossBreakdown::default();
    let dim = model.embedding_dim();

    if let Some((branch, labels, kind)) = terms.supervised {
        if branch.is_empty() || labels.len() != branch.len() {
            return Err(Error::Contract("supervised branch is empty or mislabeled".into()));
        }
        if labels.iter().any(|&y| y >= model.num_classes) {
            return Err(Error::Contract("label outside the classifier range".into()));
        }
        let scores: Vec<Vec<f64>> = branch.feats.iter().map(|f| model.scores(f)).collect();
        let margin = match kind {
            Supervision::Softmax => 0.0,
            Supervision::AmSoftmax => cfg.margin,
        };
        let (loss, d_scores) = am_softmax_grad(&scores, labels, cfg.scale, margin);
        out.supervised = loss;
        let d_feats: Vec<Vec<f64>> = branch
            .feats
            .iter()
            .zip(&d_scores)
            .map(|(f, ds)| model.scores_backward(f, ds, &mut grad))
            .collect();
        model.encoder().backward_traced_batch(&model.params, &branch.traces, &d_feats, &mut grad)?;
    }

    if let Some((raw, aug)) = terms.similarity {
        if raw.is_empty() || raw.len() != aug.len() {
            return Err(Error::Contract("similarity branches are empty or unpaired".into()));
        }
        let (loss, d_raw, d_aug) = similarity_grad(&raw.feats, &aug.feats);
        out.similarity = loss;
        model.encoder().backward_traced_batch(&model.params, &raw.traces, &d_raw, &mut grad)?;
        model.encoder().backward_traced_batch(&model.params, &aug.traces, &d_aug, &mut grad)?;
    }

    if let Some((aug, pseudo)) = terms.consistency {
        if aug.is_empty() || aug.len() != pseudo.len() {
            return Err(Error::Contract("consistency branch is empty or unpaired".into()));
        }
        let scores: Vec<Vec<f64>> = aug.feats.iter().map(|f| model.scores(f)).collect();
        let (loss, d_scores) = consistency_grad(pseudo, &scores, cfg.scale);
        out.consistency = loss;
        let d_feats: Vec<Vec<f64>> = aug
            .feats
            .iter()
            .zip(&d_scores)
            .map(|(f, ds)| model.scores_backward(f, ds, &mut grad))
            .collect();
        model.encoder().backward_traced_batch(&model.params, &aug.traces, &d_feats, &mut grad)?;
    }

    if let Some(bank) = terms.centroid {
        let (loss, g) = centroid_loss_grad(model.classifier(), model.num_classes, dim, bank, cfg.scale, cfg.margin);
        out.centroid = loss;
        let range = model.classifier_range();
        grad[range].iter_mut().zip(&g).for_each(|(a, b)| *a += cfg.lambda * b);
    }

    out.l2 = model.l2_penalty();
    model.add_l2_grad(&mut grad);
    out.total = out.supervised + out.similarity + out.consistency + cfg.lambda * out.centroid + out.l2;
    Ok((out, grad))
}

/// Pseudo-labels from unaugmented target features.
pub fn pseudo_labels(model: &ModelState, cfg: &TrainConfig, target_raw: &[Vec<f64>]) -> PseudoLabelBatch {
    let scores: Vec<Vec<f64>> = target_raw.iter().map(|f| model.scores(f)).collect();
    PseudoLabelBatch::new(predict_probs(&scores, cfg.scale), cfg.tau)
}

/// One stage-1 batch: augmented labeled source and a raw/augmented pair of
/// the mixed unlabeled batch.
pub struct Stage1Batch<'a> {
    pub source_aug: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
    pub mixed_raw: Vec<&'a [f64]>,
    pub mixed_aug: Vec<&'a [f64]>,
}

pub fn stage1_loss(model: &ModelState, cfg: &TrainConfig, batch: &Stage1Batch) -> Result<(LossBreakdown, Vec<f64>)> {
    if batch.source_aug.is_empty() || batch.mixed_raw.is_empty() {
        return Err(Error::Contract("stage 1 needs non-empty source and mixed batches".into()));
    }
    let source = Branch::compute(model, &batch.source_aug)?;
    let raw = Branch::compute(model, &batch.mixed_raw)?;
    let aug = Branch::compute(model, &batch.mixed_aug)?;
    evaluate_objective(
        model,
        cfg,
        &ObjectiveTerms {
            supervised: Some((&source, &batch.labels, Supervision::AmSoftmax)),
            similarity: Some((&raw, &aug)),
            ..Default::default()
        },
    )
}

/// One stage-2 batch: raw labeled source, raw and augmented unlabeled target.
pub struct Stage2Batch<'a> {
    pub source_raw: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
    pub target_raw: Vec<&'a [f64]>,
    pub target_aug: Vec<&'a [f64]>,
}

/// Quantities held constant while differentiating the stage-2 loss.
#[derive(Debug, Clone)]
pub struct Stage2Frozen {
    pub pseudo: PseudoLabelBatch,
    pub bank: CentroidBank,
}

/// Pseudo-labels for the batch and the bank after this batch's EMA update.
pub fn stage2_prepare(model: &ModelState, cfg: &TrainConfig, batch: &Stage2Batch, bank: &CentroidBank) -> Result<Stage2Frozen> {
    let source = model.encode_batch(&batch.source_raw)?;
    let target = model.encode_batch(&batch.target_raw)?;
    let pseudo = pseudo_labels(model, cfg, &target);
    let centroids = batch_centroids(&source, &batch.labels, &target, &pseudo, model.num_classes, model.embedding_dim());
    let mut bank = bank.clone();
    bank.ema_update(&centroids, cfg.alpha);
    Ok(Stage2Frozen { pseudo, bank })
}

pub fn stage2_loss(model: &ModelState, cfg: &TrainConfig, batch: &Stage2Batch, frozen: &Stage2Frozen) -> Result<(LossBreakdown, Vec<f64>)> {
    if batch.source_raw.is_empty() || batch.target_aug.is_empty() {
        return Err(Error::Contract("stage 2 needs non-empty source and target batches".into()));
    }
    let source = Branch::compute(model, &batch.source_raw)?;
    let aug = Branch::compute(model, &batch.target_aug)?;
    evaluate_objective(
        model,
        cfg,
        &ObjectiveTerms {
            supervised: Some((&source, &batch.labels, Supervision::AmSoftmax)),
            consistency: Some((&aug, &frozen.pseudo)),
            centroid: Some(&frozen.bank),
            ..Default::default()
        },
    )
}
