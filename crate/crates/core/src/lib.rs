//! Synthetic mmWave gait radar, micro-Doppler spectrogram processing and
//! two-stage self-aligned domain adaptation for gait identification.
//!
//! The crate is organised the way data flows through an experiment:
//!
//! * [`sim`] synthesizes FMCW beat signals of walking subjects in
//!   configurable rooms (the source of spatial/temporal domain shift),
//! * [`dsp`] turns beat signals into enhanced micro-Doppler spectrograms,
//! * [`dataset`] persists spectrograms and builds domain-aware splits,
//! * [`augment`] is the stochastic spectrogram augmentation policy,
//! * [`model`] holds the residual SELU encoder and the cosine classifier,
//! * [`train`] implements every loss, the centroid bank and both stages,
//! * [`eval`] covers accuracy, the ablation harness, Grad-CAM and plots.

pub mod augment;
pub mod config;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod rng;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
