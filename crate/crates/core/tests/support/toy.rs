//! Small synthetic spectrogram sets with a controllable domain shift.

use gaitsada_core::dataset::{DomainDataset, LabeledSample, UnlabeledSample};
use gaitsada_core::dsp::Spectrogram;
use gaitsada_core::model::{cosine, ModelState};
use rand::Rng;

/// Brightness shift applied to every target-domain image.
#[derive(Debug, Clone, Copy)]
pub struct Shift {
    pub gain: f32,
    pub floor: f32,
}

impl Shift {
    pub const NONE: Shift = Shift { gain: 1.0, floor: 0.0 };
}

/// Class `c` of `classes` is a bright horizontal band whose row and time
/// modulation depend on the class, plus uniform speckle.
pub fn toy_image<R: Rng>(class: usize, classes: usize, size: usize, shift: Shift, r: &mut R) -> Spectrogram {
    let center = (class + 1) as f64 * size as f64 / (classes + 1) as f64 + r.random_range(-0.7..0.7);
    let period = 3.0 + class as f64 * 2.0;
    let phase = r.random_range(0.0..std::f64::consts::TAU);
    let mut pixels = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let wobble = (col as f64 * std::f64::consts::TAU / period + phase).sin();
            let d = row as f64 - center - wobble;
            let band = (-(d * d) / 2.0).exp();
            let v = 0.85 * band + 0.15 * r.random::<f64>();
            pixels.push(((v as f32) * shift.gain + shift.floor).clamp(0.0, 1.0));
        }
    }
    Spectrogram::new(size, size, pixels)
}

pub fn toy_dataset(classes: usize, per_class: usize, size: usize, shift: Shift, seed: u64) -> DomainDataset {
    let mut r = gaitsada_core::rng::stream(seed, &[gaitsada_core::rng::tag("toy")]);
    let mut ds = DomainDataset {
        num_classes: classes,
        ..Default::default()
    };
    for i in 0..per_class * classes {
        let c = i % classes;
        ds.labeled_source.push(LabeledSample {
            image: toy_image(c, classes, size, Shift::NONE, &mut r),
            subject: c,
        });
        ds.unlabeled_target.push(UnlabeledSample::new(toy_image(c, classes, size, shift, &mut r)));
        ds.test.push(LabeledSample {
            image: toy_image(c, classes, size, shift, &mut r),
            subject: c,
        });
    }
    ds
}

pub fn features(model: &ModelState, images: &[&Spectrogram]) -> Vec<Vec<f64>> {
    let data: Vec<Vec<f64>> = images.iter().map(|s| s.to_f64()).collect();
    let refs: Vec<&[f64]> = data.iter().map(|v| v.as_slice()).collect();
    model.encode_batch(&refs).unwrap()
}

/// Mean cosine over all unordered pairs.
pub fn mean_pairwise_cosine(feats: &[Vec<f64>]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..feats.len() {
        for j in i + 1..feats.len() {
            sum += cosine(&feats[i], &feats[j]);
            n += 1;
        }
    }
    sum / n as f64
}

/// Largest cosine between two distinct class centroids.
pub fn max_centroid_cosine(feats: &[Vec<f64>], labels: &[usize], classes: usize) -> f64 {
    let dim = feats[0].len();
    let mut z = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    for (f, &y) in feats.iter().zip(labels) {
        counts[y] += 1;
        z[y].iter_mut().zip(f).for_each(|(a, b)| *a += b);
    }
    let mut worst = f64::NEG_INFINITY;
    for a in 0..classes {
        for b in a + 1..classes {
            if counts[a] > 0 && counts[b] > 0 {
                worst = worst.max(cosine(&z[a], &z[b]));
            }
        }
    }
    worst
}
