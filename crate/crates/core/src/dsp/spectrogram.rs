use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Direction;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectrogramMeta {
    pub subject: Option<usize>,
    pub domain: String,
    pub day: u32,
    pub direction: Option<Direction>,
}

/// Real-valued time-frequency image stored row-major `[freq][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f32>,
    pub meta: SpectrogramMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    subject: Option<usize>,
    domain: String,
    day: u32,
    direction: Option<Direction>,
    shape: [usize; 2],
}

impl Spectrogram {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), rows * cols, "spectrogram pixel count");
        Self {
            rows,
            cols,
            pixels,
            meta: SpectrogramMeta::default(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn with_meta(mut self, meta: SpectrogramMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.pixels[row * self.cols + col] = v;
    }

    pub fn is_normalized(&self) -> bool {
        self.pixels.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    pub fn data_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.to_le_bytes()).collect()
    }

    /// Writes little-endian f32 pixels to `path` and the JSON sidecar next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.data_bytes())?;
        fs::write(sidecar_path(path), serde_json::to_vec_pretty(&self.sidecar())?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
        Self::from_bytes(&fs::read(path)?, path, &sidecar)
    }

    fn sidecar(&self) -> Sidecar {
        Sidecar {
            subject: self.meta.subject,
            domain: self.meta.domain.clone(),
            day: self.meta.day,
            direction: self.meta.direction,
            shape: [self.rows, self.cols],
        }
    }

    fn from_bytes(bytes: &[u8], path: &Path, sidecar: &Sidecar) -> Result<Self> {
        let [rows, cols] = sidecar.shape;
        if bytes.len() != rows * cols * 4 {
            return Err(Error::Integrity(format!(
                "{}: {} bytes do not match shape {rows}x{cols}",
                path.display(),
                bytes.len()
            )));
        }
        let pixels = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            rows,
            cols,
            pixels,
            meta: SpectrogramMeta {
                subject: sidecar.subject,
                domain: sidecar.domain.clone(),
                day: sidecar.day,
                direction: sidecar.direction,
            },
        })
    }

    /// 8-bit grayscale rendering with the highest Doppler row at the top.
    pub fn to_gray_image(&self) -> image::GrayImage {
        let (lo, hi) = self
            .pixels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        image::GrayImage::from_fn(self.cols as u32, self.rows as u32, |x, y| {
            let v = (self.get(self.rows - 1 - y as usize, x as usize) - lo) / span;
            image::Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        self.to_gray_image().save(path)?;
        Ok(())
    }
}

pub(crate) fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}
