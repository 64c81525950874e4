//! Batch losses on cosine scores and features, each with its exact gradient.

use crate::model::{cosine, cosine_grad};

/// Guards `ln` of predicted probabilities in the consistency loss.
pub const LOG_EPS: f64 = 1e-12;

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Additive-margin softmax over cosine scores, averaged over the batch.
pub fn am_softmax_loss(scores: &[Vec<f64>], labels: &[usize], s: f64, m: f64) -> f64 {
    am_softmax_grad(scores, labels, s, m).0
}

/// Loss and its gradient with respect to every cosine score.
pub fn am_softmax_grad(scores: &[Vec<f64>], labels: &[usize], s: f64, m: f64) -> (f64, Vec<Vec<f64>>) {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let b = scores.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(scores.len());
    for (row, &y) in scores.iter().zip(labels) {
        let z: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(j, &c)| s * (c - if j == y { m } else { 0.0 }))
            .collect();
        loss += log_sum_exp(&z) - z[y];
        let p = softmax(&z);
        grads.push(
            p.iter()
                .enumerate()
                .map(|(j, &pj)| s * (pj - if j == y { 1.0 } else { 0.0 }) / b)
                .collect(),
        );
    }
    (loss / b, grads)
}

/// Negative mean cosine between paired features.
pub fn similarity_loss(f: &[Vec<f64>], f_hat: &[Vec<f64>]) -> f64 {
    assert_eq!(f.len(), f_hat.len(), "feature batches differ in size");
    -f.iter().zip(f_hat).map(|(a, b)| cosine(a, b)).sum::<f64>() / f.len() as f64
}

/// Loss and gradients with respect to both feature batches.
pub fn similarity_grad(f: &[Vec<f64>], f_hat: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    assert_eq!(f.len(), f_hat.len(), "feature batches differ in size");
    let b = f.len() as f64;
    let mut loss = 0.0;
    let (mut da, mut db) = (Vec::with_capacity(f.len()), Vec::with_capacity(f.len()));
    for (x, y) in f.iter().zip(f_hat) {
        let (c, gx, gy) = cosine_grad(x, y);
        loss -= c;
        da.push(gx.into_iter().map(|g| -g / b).collect());
        db.push(gy.into_iter().map(|g| -g / b).collect());
    }
    (loss / b, da, db)
}

/// Row-wise `softmax(s * cos)`: class probabilities without the margin.
pub fn predict_probs(scores: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    scores
        .iter()
        .map(|row| softmax(&row.iter().map(|c| s * c).collect::<Vec<_>>()))
        .collect()
}

/// Soft pseudo-labels from the unaugmented branch, treated as constants.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelBatch {
    pub q: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    pub hard: Vec<usize>,
}

impl PseudoLabelBatch {
    pub fn new(q: Vec<Vec<f64>>, tau: f64) -> Self {
        let hard: Vec<usize> = q.iter().map(|row| crate::model::argmax(row)).collect();
        let mask = q.iter().zip(&hard).map(|(row, &h)| row[h] >= tau).collect();
        Self { q, mask, hard }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn passing(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn mask_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.passing() as f64 / self.len() as f64
        }
    }
}

/// Masked cross-entropy `H(q, q_hat)` averaged over the whole batch.
pub fn consistency_loss(pl: &PseudoLabelBatch, q_hat: &[Vec<f64>]) -> f64 {
    assert_eq!(pl.len(), q_hat.len(), "pseudo-labels and predictions differ in size");
    let b = pl.len() as f64;
    pl.q.iter()
        .zip(q_hat)
        .zip(&pl.mask)
        .filter(|(_, m)| **m)
        .map(|((q, r), _)| -q.iter().zip(r).map(|(qc, rc)| qc * (rc + LOG_EPS).ln()).sum::<f64>())
        .sum::<f64>()
        / b
}

/// Consistency loss of `q_hat = softmax(s * scores_hat)` and its gradient
/// with respect to `scores_hat`. No gradient reaches `q`.
pub fn consistency_grad(pl: &PseudoLabelBatch, scores_hat: &[Vec<f64>], s: f64) -> (f64, Vec<Vec<f64>>) {
    let q_hat = predict_probs(scores_hat, s);
    let loss = consistency_loss(pl, &q_hat);
    let b = pl.len() as f64;
    let grads = pl
        .q
        .iter()
        .zip(&q_hat)
        .zip(&pl.mask)
        .map(|((q, r), &m)| {
            if !m {
                return vec![0.0; r.len()];
            }
            // dH/dz_j = -sum_c q_c / (r_c + eps) * r_c * (delta_cj - r_j)
            let w: Vec<f64> = q.iter().zip(r).map(|(qc, rc)| qc * rc / (rc + LOG_EPS)).collect();
            let total: f64 = w.iter().sum();
            (0..r.len()).map(|j| s * (-(w[j]) + r[j] * total) / b).collect()
        })
        .collect();
    (loss, grads)
}
