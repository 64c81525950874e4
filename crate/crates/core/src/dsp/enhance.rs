use serde::{Deserialize, Serialize};

use super::spectrogram::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhanceConfig {
    pub out_rows: usize,
    pub out_cols: usize,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            out_rows: 128,
            out_cols: 128,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Box-filter resampling of one axis: output cell `i` averages input over
/// `[i * n_in / n_out, (i + 1) * n_in / n_out)` with fractional edge weights.
fn resample_axis(input: &[f64], n_out: usize) -> Vec<f64> {
    let n_in = input.len();
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
            let mut acc = 0.0;
            let mut j = lo.floor() as usize;
            while (j as f64) < hi && j < n_in {
                let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                acc += overlap * input[j];
                j += 1;
            }
            acc / (hi - lo)
        })
        .collect()
}

/// Area-averaging resize of a row-major `rows x cols` image.
pub fn resample_area(pixels: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    if rows == out_rows && cols == out_cols {
        return pixels.to_vec();
    }
    let horiz: Vec<Vec<f64>> = pixels.chunks_exact(cols).map(|r| resample_axis(r, out_cols)).collect();
    let mut out = vec![0.0; out_rows * out_cols];
    let mut column = vec![0.0; rows];
    for c in 0..out_cols {
        for (r, row) in horiz.iter().enumerate() {
            column[r] = row[c];
        }
        for (r, v) in resample_axis(&column, out_rows).into_iter().enumerate() {
            out[r * out_cols + c] = v;
        }
    }
    out
}

/// Background removal and normalization.
///
/// Each frequency row has its median over time subtracted (the stationary
/// background of that Doppler bin) and is floored at zero; the image is then
/// resized to the model input and min-max scaled to `[0, 1]`. An image that
/// is constant at that point has no defined contrast and becomes all zeros.
pub fn enhance_spectrogram(raw: &Spectrogram, cfg: &EnhanceConfig) -> Spectrogram {
    let mut work: Vec<f64> = raw.to_f64();
    let mut scratch = vec![0.0; raw.cols];
    for row in work.chunks_exact_mut(raw.cols) {
        scratch.copy_from_slice(row);
        let m = median(&mut scratch);
        for v in row.iter_mut() {
            *v = (*v - m).max(0.0);
        }
    }
    let resized = resample_area(&work, raw.rows, raw.cols, cfg.out_rows, cfg.out_cols);
    let (lo, hi) = resized
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let pixels = if hi > lo {
        resized.iter().map(|&v| ((v - lo) / (hi - lo)) as f32).collect()
    } else {
        vec![0.0; resized.len()]
    };
    Spectrogram::new(cfg.out_rows, cfg.out_cols, pixels).with_meta(raw.meta.clone())
}
