//! Grad-CAM over the last residual stage.

use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::model::ModelState;

/// Heat map aligned to the input spectrogram, row-major, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub rows: usize,
    pub cols: usize,
    pub heat: Vec<f64>,
    /// The weighted activation sum was non-positive everywhere.
    pub degenerate: bool,
}

impl SaliencyMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.heat[row * self.cols + col]
    }

    /// Share of total heat inside rows `[lo, hi)`.
    pub fn row_band_mass(&self, lo: usize, hi: usize) -> f64 {
        let total: f64 = self.heat.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let band: f64 = self.heat[lo * self.cols..hi.min(self.rows) * self.cols].iter().sum();
        band / total
    }
}

/// Bilinear resize with pixel-center alignment.
fn upsample(src: &[f64], h: usize, w: usize, rows: usize, cols: usize) -> Vec<f64> {
    let coord = |i: usize, out: usize, inp: usize| {
        let x = ((i as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
        let x0 = x.floor() as usize;
        (x0, (x0 + 1).min(inp - 1), x - x0 as f64)
    };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (y0, y1, fy) = coord(r, rows, h);
        for c in 0..cols {
            let (x0, x1, fx) = coord(c, cols, w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Class-`class` saliency of `image` under `model`.
pub fn grad_cam(model: &ModelState, image: &Spectrogram, class: usize) -> Result<SaliencyMap> {
    if class >= model.num_classes {
        return Err(Error::Contract(format!("class {class} outside the model's {} classes", model.num_classes)));
    }
    let encoder = model.encoder();
    let (feat, trace) = encoder.forward_traced(&model.params, &image.to_f64())?;
    let mut scratch = vec![0.0; model.params.len()];
    let mut d_scores = vec![0.0; model.num_classes];
    d_scores[class] = 1.0;
    let d_feat = model.scores_backward(&feat, &d_scores, &mut scratch);
    let d_map = encoder.head_backward(&model.params, &trace, &d_feat, &mut scratch);

    let channels = encoder.final_channels();
    let (h, w) = encoder.final_hw();
    let hw = h * w;
    let mut cam = vec![0.0; hw];
    for ch in 0..channels {
        let grads = &d_map[ch * hw..(ch + 1) * hw];
        let alpha = grads.iter().sum::<f64>() / hw as f64;
        for (c, a) in cam.iter_mut().zip(&trace.final_map[ch * hw..(ch + 1) * hw]) {
            *c += alpha * a;
        }
    }
    for c in cam.iter_mut() {
        *c = c.max(0.0);
    }
    let mut heat = upsample(&cam, h, w, image.rows, image.cols);
    let max = heat.iter().copied().fold(0.0, f64::max);
    let degenerate = !(max > 0.0 && max.is_finite());
    if degenerate {
        heat.iter_mut().for_each(|v| *v = 0.0);
    } else {
        heat.iter_mut().for_each(|v| *v /= max);
    }
    Ok(SaliencyMap {
        rows: image.rows,
        cols: image.cols,
        heat,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EncoderSpec;
    use rand::Rng;

    #[test]
    fn upsample_preserves_constants_and_corners() {
        assert!(upsample(&[2.0; 4], 2, 2, 7, 5).iter().all(|&v| (v - 2.0).abs() < 1e-12));
        let up = upsample(&[0.0, 1.0, 2.0, 3.0], 2, 2, 4, 4);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[15], 3.0);
    }

    #[test]
    fn maps_are_non_negative_and_max_normalized() {
        let model = ModelState::new(EncoderSpec::desk(16, 16, 1), 3, 5).unwrap();
        let mut r = crate::rng::stream(9, &[]);
        for k in 0..6 {
            let px: Vec<f32> = (0..256).map(|_| r.random::<f32>()).collect();
            let map = grad_cam(&model, &Spectrogram::new(16, 16, px), k % 3).unwrap();
            assert_eq!(map.heat.len(), 256);
            assert!(map.heat.iter().all(|&v| (0.0..=1.0).contains(&v)));
            if !map.degenerate {
                assert_eq!(map.heat.iter().copied().fold(0.0, f64::max), 1.0);
            } else {
                assert!(map.heat.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn out_of_range_class_is_a_contract_error() {
        let model = ModelState::new(EncoderSpec::desk(8, 8, 1), 2, 0).unwrap();
        assert!(matches!(grad_cam(&model, &Spectrogram::zeros(8, 8), 2), Err(Error::Contract(_))));
    }
}
