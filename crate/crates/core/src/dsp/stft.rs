use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::fft::fftshift_index;
use super::spectrogram::Spectrogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFn {
    Hann,
    Rectangular,
}

impl WindowFn {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowFn::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            WindowFn::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowFn,
}

impl Default for StftConfig {
    /// 256-sample Hann window with 75% overlap (slow time runs at the chirp rate).
    fn default() -> Self {
        Self {
            window_len: 256,
            hop: 64,
            window: WindowFn::Hann,
        }
    }
}

/// Linear STFT magnitude, `[freq_row][frame]` with fftshifted rows (row `window_len / 2` is DC).
pub fn stft_magnitude(signal: &[Complex64], cfg: &StftConfig) -> Result<(usize, usize, Vec<f64>)> {
    if cfg.window_len == 0 || cfg.hop == 0 {
        return Err(Error::Config("stft: window length and hop must be positive".into()));
    }
    if signal.len() < cfg.window_len {
        return Err(Error::Size(format!(
            "stft: signal of {} samples is shorter than the {}-sample window",
            signal.len(),
            cfg.window_len
        )));
    }
    let n = cfg.window_len;
    let cols = (signal.len() - n) / cfg.hop + 1;
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut out = vec![0.0; n * cols];
    for col in 0..cols {
        let seg = &signal[col * cfg.hop..col * cfg.hop + n];
        for ((b, s), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = s * w;
        }
        fft.process(&mut buf);
        for row in 0..n {
            out[row * cols + col] = buf[fftshift_index(row, n)].norm();
        }
    }
    Ok((n, cols, out))
}

/// Log-compressed magnitude STFT, `log(1 + |X|)`.
pub fn stft_spectrogram(signal: &[Complex64], cfg: &StftConfig) -> Result<Spectrogram> {
    let (rows, cols, mag) = stft_magnitude(signal, cfg)?;
    Ok(Spectrogram::new(rows, cols, mag.iter().map(|m| m.ln_1p() as f32).collect()))
}
