//! Spectrogram acquisition and enhancement.
//!
//! Beat signal -> range FFT -> static reflection removal -> CA-CFAR
//! detection -> per-frame Doppler estimate -> sliding-window tracking ->
//! gated slow-time signal -> STFT -> enhancement.

mod cfar;
mod enhance;
mod fft;
mod pipeline;
mod spectrogram;
mod stft;
mod track;

pub use cfar::{cfar_detect, CfarConfig};
pub use enhance::{enhance_spectrogram, resample_area, EnhanceConfig};
pub use fft::{doppler_column, doppler_map, doppler_spectrum, fftshift_index, range_fft, remove_static_clutter, RangeProfileSeq};
pub use pipeline::{gate_slow_time, PipelineConfig, PipelineTrace, SpectrogramPipeline};
pub use spectrogram::{Spectrogram, SpectrogramMeta};
pub use stft::{stft_magnitude, stft_spectrogram, StftConfig, WindowFn};
pub use track::{track_target, Detection, TrackGate, TrackerConfig};
