use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::encoder::Encoder;
use super::head::{cosine_scores, cosine_scores_backward};
use super::spec::EncoderSpec;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    ConvKernel,
    Bias,
    NormScale,
    NormShift,
    Linear,
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub kind: ParamKind,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named tensors packed back to back in one flat vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub entries: Vec<ParamEntry>,
    len: usize,
}

impl ParamLayout {
    /// Appends a tensor and returns its offset.
    pub fn push(&mut self, name: &str, shape: &[usize], kind: ParamKind) -> usize {
        let offset = self.len;
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            kind,
        });
        self.len += shape.iter().product::<usize>();
        offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn of_kind(&self, kind: ParamKind) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    /// Layout and encoder for `spec` with a `num_classes`-row classifier, without allocating parameters.
    pub fn for_model(spec: &EncoderSpec, num_classes: usize) -> Result<(Self, Encoder, usize)> {
        let mut layout = Self::default();
        let encoder = Encoder::compile(spec, &mut layout)?;
        let w = layout.push("classifier.weight", &[num_classes, spec.embedding_dim], ParamKind::Classifier);
        Ok((layout, encoder, w))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointIndex {
    spec: EncoderSpec,
    num_classes: usize,
    sha256: String,
    tensors: Vec<ParamEntry>,
}

/// Encoder plus cosine classifier and their parameters.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub spec: EncoderSpec,
    pub num_classes: usize,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
    encoder: Encoder,
    classifier_offset: usize,
}

impl ModelState {
    /// Fresh model: He (fan-in) normal kernels, zero biases, unit norm scales,
    /// standard normal classifier rows.
    pub fn new(spec: EncoderSpec, num_classes: usize, seed: u64) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("need at least two classes, got {num_classes}")));
        }
        let (layout, encoder, classifier_offset) = ParamLayout::for_model(&spec, num_classes)?;
        let mut params = vec![0.0; layout.len()];
        let mut r = rng::stream(seed, &[rng::tag("init")]);
        for e in &layout.entries {
            let slot = &mut params[e.range()];
            match e.kind {
                ParamKind::ConvKernel | ParamKind::Linear => {
                    let fan_in: usize = e.shape[1..].iter().product();
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
                    slot.iter_mut().for_each(|v| *v = normal.sample(&mut r));
                }
                ParamKind::Classifier => {
                    let normal = Normal::new(0.0, 1.0).expect("finite std");
                    slot.iter_mut().for_each(|v| *v = normal.sample(&mut r));
                }
                ParamKind::NormScale => slot.fill(1.0),
                ParamKind::Bias | ParamKind::NormShift => {}
            }
        }
        Ok(Self {
            spec,
            num_classes,
            layout,
            params,
            encoder,
            classifier_offset,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn embedding_dim(&self) -> usize {
        self.spec.embedding_dim
    }

    pub fn classifier_range(&self) -> std::ops::Range<usize> {
        self.classifier_offset..self.classifier_offset + self.num_classes * self.spec.embedding_dim
    }

    pub fn classifier(&self) -> &[f64] {
        &self.params[self.classifier_range()]
    }

    pub fn encode(&self, image: &[f64]) -> Result<Vec<f64>> {
        self.encoder.forward(&self.params, image)
    }

    pub fn encode_batch(&self, images: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        self.encoder.forward_batch(&self.params, images)
    }

    /// Cosine score of `feat` against every class row.
    pub fn scores(&self, feat: &[f64]) -> Vec<f64> {
        cosine_scores(self.classifier(), self.num_classes, self.spec.embedding_dim, feat)
    }

    /// Accumulates the classifier gradient into `grad` and returns the feature gradient.
    pub fn scores_backward(&self, feat: &[f64], d_scores: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let range = self.classifier_range();
        cosine_scores_backward(
            &self.params[range.clone()],
            self.num_classes,
            self.spec.embedding_dim,
            feat,
            d_scores,
            &mut grad[range],
        )
    }

    pub fn predict(&self, image: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(&self.encode(image)?)))
    }

    /// Predicted classes for a batch, in input order.
    pub fn predict_batch(&self, images: &[&[f64]]) -> Result<Vec<usize>> {
        Ok(self.encode_batch(images)?.iter().map(|f| argmax(&self.scores(f))).collect())
    }

    /// `l2_reg * sum(w^2)` over convolution kernels.
    pub fn l2_penalty(&self) -> f64 {
        self.spec.l2_reg
            * self
                .layout
                .of_kind(ParamKind::ConvKernel)
                .map(|e| self.params[e.range()].iter().map(|w| w * w).sum::<f64>())
                .sum::<f64>()
    }

    pub fn add_l2_grad(&self, grad: &mut [f64]) {
        let k = 2.0 * self.spec.l2_reg;
        for e in self.layout.of_kind(ParamKind::ConvKernel) {
            for i in e.range() {
                grad[i] += k * self.params[i];
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    fn bin_path(index: &Path) -> PathBuf {
        index.with_extension("bin")
    }

    /// Writes `path` (JSON index) and a sibling `.bin` of little-endian f64 parameters.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let bytes: Vec<u8> = self.params.iter().flat_map(|v| v.to_le_bytes()).collect();
        let index = CheckpointIndex {
            spec: self.spec.clone(),
            num_classes: self.num_classes,
            sha256: hex::encode(Sha256::digest(&bytes)),
            tensors: self.layout.entries.clone(),
        };
        fs::write(Self::bin_path(path), &bytes)?;
        fs::write(path, serde_json::to_vec_pretty(&index)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let index: CheckpointIndex = serde_json::from_slice(&fs::read(path)?)?;
        let bin = Self::bin_path(path);
        let bytes = fs::read(&bin)?;
        let found = hex::encode(Sha256::digest(&bytes));
        if found != index.sha256 {
            return Err(Error::Corruption {
                path: bin,
                expected: index.sha256,
                found,
            });
        }
        let (layout, encoder, classifier_offset) = ParamLayout::for_model(&index.spec, index.num_classes)?;
        if layout.entries != index.tensors {
            return Err(Error::Integrity(format!("{}: tensor table does not match the encoder spec", path.display())));
        }
        if bytes.len() != layout.len() * 8 {
            return Err(Error::Integrity(format!(
                "{}: {} bytes for {} parameters",
                bin.display(),
                bytes.len(),
                layout.len()
            )));
        }
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            spec: index.spec,
            num_classes: index.num_classes,
            layout,
            params,
            encoder,
            classifier_offset,
        })
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}
