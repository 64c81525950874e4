//! Class centroids of source and confidently pseudo-labeled target features.

use serde::{Deserialize, Serialize};

use super::losses::PseudoLabelBatch;
use crate::model::cosine_grad;

/// Per-class means of one batch. A class with zero denominator is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchCentroids {
    pub z: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

impl BatchCentroids {
    pub fn is_present(&self, c: usize) -> bool {
        self.counts[c] > 0
    }
}

/// Sums labeled source features and masked target features by (pseudo-)class.
pub fn batch_centroids(
    source: &[Vec<f64>],
    labels: &[usize],
    target: &[Vec<f64>],
    pseudo: &PseudoLabelBatch,
    classes: usize,
    dim: usize,
) -> BatchCentroids {
    let mut z = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    let picked = source.iter().zip(labels.iter().copied()).chain(
        target
            .iter()
            .zip(pseudo.hard.iter().copied())
            .zip(&pseudo.mask)
            .filter(|(_, m)| **m)
            .map(|(p, _)| p),
    );
    for (f, c) in picked {
        counts[c] += 1;
        z[c].iter_mut().zip(f).for_each(|(a, b)| *a += b);
    }
    for (row, &n) in z.iter_mut().zip(&counts) {
        if n > 0 {
            row.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    BatchCentroids { z, counts }
}

/// Exponential moving average of class centroids across steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidBank {
    pub z: Vec<Vec<f64>>,
    pub initialized: Vec<bool>,
}

impl CentroidBank {
    pub fn new(classes: usize, dim: usize) -> Self {
        Self {
            z: vec![vec![0.0; dim]; classes],
            initialized: vec![false; classes],
        }
    }

    pub fn initialized_count(&self) -> usize {
        self.initialized.iter().filter(|i| **i).count()
    }

    /// `Z_c <- alpha * batch_c + (1 - alpha) * Z_c` for present classes; the
    /// first observation of a class initializes it.
    pub fn ema_update(&mut self, batch: &BatchCentroids, alpha: f64) {
        for c in 0..self.z.len() {
            if !batch.is_present(c) {
                continue;
            }
            if self.initialized[c] {
                self.z[c]
                    .iter_mut()
                    .zip(&batch.z[c])
                    .for_each(|(z, b)| *z = alpha * b + (1.0 - alpha) * *z);
            } else {
                self.z[c].clone_from(&batch.z[c]);
                self.initialized[c] = true;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().flatten().all(|v| v.is_finite())
    }
}

/// AM-softmax between classifier rows and bank centroids, averaged over the
/// initialized classes; the gradient reaches `w` only. Returns zero loss and
/// gradient when fewer than two classes are initialized.
pub fn centroid_loss_grad(w: &[f64], classes: usize, dim: usize, bank: &CentroidBank, s: f64, m: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; w.len()];
    let active: Vec<usize> = (0..classes).filter(|&c| bank.initialized[c]).collect();
    if active.len() < 2 {
        log::warn!("centroid loss skipped: {} initialized class(es)", active.len());
        return (0.0, grad);
    }
    let n = active.len() as f64;
    let mut loss = 0.0;
    for &c in &active {
        let zc = &bank.z[c];
        let parts: Vec<(f64, Vec<f64>)> = (0..classes)
            .map(|j| {
                let (cos, gw, _) = cosine_grad(&w[j * dim..(j + 1) * dim], zc);
                (cos, gw)
            })
            .collect();
        let logits: Vec<f64> = parts
            .iter()
            .enumerate()
            .map(|(j, (cos, _))| s * (cos - if j == c { m } else { 0.0 }))
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += max + sum.ln() - logits[c];
        for (j, (_, gw)) in parts.iter().enumerate() {
            let d = s * (exps[j] / sum - if j == c { 1.0 } else { 0.0 }) / n;
            grad[j * dim..(j + 1) * dim].iter_mut().zip(gw).for_each(|(g, v)| *g += d * v);
        }
    }
    (loss / n, grad)
}

pub fn centroid_loss(w: &[f64], classes: usize, dim: usize, bank: &CentroidBank, s: f64, m: f64) -> f64 {
    centroid_loss_grad(w, classes, dim, bank, s, m).0
}
