use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::sim::BeatSignal;

/// Range spectra laid out `[frame][chirp][range_bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfileSeq {
    pub frames: usize,
    pub chirps: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl RangeProfileSeq {
    pub fn frame(&self, frame: usize) -> &[Complex64] {
        let n = self.chirps * self.bins;
        &self.data[frame * n..(frame + 1) * n]
    }

    pub fn at(&self, frame: usize, chirp: usize, bin: usize) -> Complex64 {
        self.data[(frame * self.chirps + chirp) * self.bins + bin]
    }

    /// Per-bin power summed over the chirps of one frame.
    pub fn frame_power(&self, frame: usize) -> Vec<f64> {
        let mut power = vec![0.0; self.bins];
        for chirp in self.frame(frame).chunks_exact(self.bins) {
            for (p, z) in power.iter_mut().zip(chirp) {
                *p += z.norm_sqr();
            }
        }
        power
    }
}

/// Unnormalized DFT of every chirp along fast time (all bins kept).
pub fn range_fft(sig: &BeatSignal) -> RangeProfileSeq {
    let bins = sig.samples();
    let mut data = sig.data.clone();
    if !data.is_empty() {
        FftPlanner::new().plan_fft_forward(bins).process(&mut data);
    }
    RangeProfileSeq {
        frames: sig.frames,
        chirps: sig.chirps(),
        bins,
        data,
    }
}

/// Subtracts, per frame and range bin, the mean over the frame's chirps.
pub fn remove_static_clutter(rp: &RangeProfileSeq) -> RangeProfileSeq {
    let mut out = rp.clone();
    let n = rp.chirps * rp.bins;
    for frame in out.data.chunks_exact_mut(n) {
        let mut mean = vec![Complex64::new(0.0, 0.0); rp.bins];
        for chirp in frame.chunks_exact(rp.bins) {
            for (m, z) in mean.iter_mut().zip(chirp) {
                *m += z;
            }
        }
        for m in &mut mean {
            *m /= rp.chirps as f64;
        }
        for chirp in frame.chunks_exact_mut(rp.bins) {
            for (z, m) in chirp.iter_mut().zip(&mean) {
                *z -= m;
            }
        }
    }
    out
}

/// Source index of output row `row` after an fftshift of length `n`; row `n / 2` holds DC.
pub fn fftshift_index(row: usize, n: usize) -> usize {
    (row + n - n / 2) % n
}

/// Complex slow-time DFT of one frame, `[doppler_row][bin]`, fftshifted.
///
/// Row `chirps / 2` is zero Doppler and rows above it are approaching
/// targets. This is the linear part of [`doppler_map`].
pub fn doppler_spectrum(frame: &[Complex64], chirps: usize, bins: usize) -> Vec<Complex64> {
    assert_eq!(frame.len(), chirps * bins, "doppler_spectrum: frame is not chirps x bins");
    let fft = FftPlanner::new().plan_fft_forward(chirps);
    let mut column = vec![Complex64::new(0.0, 0.0); chirps];
    let mut out = vec![Complex64::new(0.0, 0.0); chirps * bins];
    for bin in 0..bins {
        for (c, z) in column.iter_mut().enumerate() {
            *z = frame[c * bins + bin];
        }
        fft.process(&mut column);
        for row in 0..chirps {
            out[row * bins + bin] = column[fftshift_index(row, chirps)];
        }
    }
    out
}

/// Magnitude Doppler profile of a single range bin, fftshifted like [`doppler_map`].
pub fn doppler_column(frame: &[Complex64], chirps: usize, bins: usize, bin: usize, fft: &dyn Fft<f64>) -> Vec<f64> {
    let mut column: Vec<Complex64> = (0..chirps).map(|c| frame[c * bins + bin]).collect();
    fft.process(&mut column);
    (0..chirps).map(|row| column[fftshift_index(row, chirps)].norm()).collect()
}

/// Magnitude of [`doppler_spectrum`].
pub fn doppler_map(frame: &[Complex64], chirps: usize, bins: usize) -> Vec<f64> {
    doppler_spectrum(frame, chirps, bins).iter().map(|z| z.norm()).collect()
}
