//! Stochastic spectrogram augmentation.
//!
//! One call applies, in order: two independent cutout stripe draws
//! (horizontal = a frequency band, vertical = a time interval, or none),
//! additive uniform white noise, then a single center-anchored affine warp
//! composed of zoom, counter-clockwise shear and rotation. The result is
//! clamped to `[0, 1]`.
//!
//! Sampling and application are split ([`draw_augmentation`] /
//! [`apply_augmentation`]) so the drawn parameters can be inspected.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoutPolicy {
    pub p_horizontal: f64,
    pub p_vertical: f64,
    pub p_none: f64,
    pub thickness_min: usize,
    pub thickness_max: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePolicy {
    pub p: f64,
    /// Per-pixel noise is uniform in `[-amplitude, amplitude]`.
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub min: f64,
    pub max: f64,
}

impl UniformRange {
    pub const fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    fn sample<R: Rng>(&self, r: &mut R) -> f64 {
        if self.max > self.min {
            r.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugPolicy {
    pub cutout: CutoutPolicy,
    pub white_noise: NoisePolicy,
    pub zoom: UniformRange,
    pub shear_deg: UniformRange,
    pub rotation_deg: UniformRange,
}

impl Default for AugPolicy {
    fn default() -> Self {
        Self {
            cutout: CutoutPolicy {
                p_horizontal: 1.0 / 3.0,
                p_vertical: 1.0 / 3.0,
                p_none: 1.0 / 3.0,
                thickness_min: 2,
                thickness_max: 8,
                count: 2,
            },
            white_noise: NoisePolicy {
                p: 2.0 / 3.0,
                amplitude: 0.5,
            },
            zoom: UniformRange { min: 0.8, max: 1.2 },
            shear_deg: UniformRange { min: 0.0, max: 5.0 },
            rotation_deg: UniformRange { min: -5.0, max: 5.0 },
        }
    }
}

impl AugPolicy {
    /// The default policy with white noise reduced to `+-0.1`, which keeps
    /// sparse `[0, 1]` desk-scale spectrograms recognisable.
    pub fn desk() -> Self {
        Self {
            white_noise: NoisePolicy {
                amplitude: 0.1,
                ..Self::default().white_noise
            },
            ..Self::default()
        }
    }

    /// A policy whose every draw leaves the input unchanged.
    pub fn identity() -> Self {
        Self {
            cutout: CutoutPolicy {
                p_horizontal: 0.0,
                p_vertical: 0.0,
                p_none: 1.0,
                ..Self::default().cutout
            },
            white_noise: NoisePolicy { p: 0.0, amplitude: 0.5 },
            zoom: UniformRange::fixed(1.0),
            shear_deg: UniformRange::fixed(0.0),
            rotation_deg: UniformRange::fixed(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cutout;
        let total = c.p_horizontal + c.p_vertical + c.p_none;
        if [c.p_horizontal, c.p_vertical, c.p_none].iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("augment.cutout probabilities must be >= 0 and sum to 1, got {total}")));
        }
        if c.thickness_min == 0 || c.thickness_min > c.thickness_max {
            return Err(Error::Config("augment.cutout thickness range is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.white_noise.p) || self.white_noise.amplitude < 0.0 {
            return Err(Error::Config("augment.white_noise.p must lie in [0, 1]".into()));
        }
        for (name, r) in [("zoom", self.zoom), ("shear_deg", self.shear_deg), ("rotation_deg", self.rotation_deg)] {
            if !(r.min <= r.max) {
                return Err(Error::Config(format!("augment.{name}: min exceeds max")));
            }
        }
        if self.zoom.min <= 0.0 {
            return Err(Error::Config("augment.zoom must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Zeroes whole rows: a missing frequency band.
    Horizontal,
    /// Zeroes whole columns: a missing time interval.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripeDraw {
    pub orientation: Option<Orientation>,
    pub start: usize,
    pub thickness: usize,
}

/// Every random choice of one augmentation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugDraws {
    pub stripes: Vec<StripeDraw>,
    pub noise_seed: Option<u64>,
    pub scale: f64,
    pub shear_deg: f64,
    pub rotation_deg: f64,
}

impl AugDraws {
    pub fn identity() -> Self {
        Self {
            stripes: Vec::new(),
            noise_seed: None,
            scale: 1.0,
            shear_deg: 0.0,
            rotation_deg: 0.0,
        }
    }
}

pub fn draw_augmentation<R: Rng>(policy: &AugPolicy, rows: usize, cols: usize, r: &mut R) -> AugDraws {
    let c = &policy.cutout;
    let stripes = (0..c.count)
        .map(|_| {
            let u: f64 = r.random();
            let orientation = if u < c.p_horizontal {
                Some(Orientation::Horizontal)
            } else if u < c.p_horizontal + c.p_vertical {
                Some(Orientation::Vertical)
            } else {
                None
            };
            let thickness = r.random_range(c.thickness_min..=c.thickness_max);
            let extent = match orientation {
                Some(Orientation::Horizontal) => rows,
                _ => cols,
            };
            let start = r.random_range(0..=extent.saturating_sub(thickness));
            StripeDraw {
                orientation,
                start,
                thickness,
            }
        })
        .collect();
    let noise_seed = r.random_bool(policy.white_noise.p).then(|| r.random());
    AugDraws {
        stripes,
        noise_seed,
        scale: policy.zoom.sample(r),
        shear_deg: policy.shear_deg.sample(r),
        rotation_deg: policy.rotation_deg.sample(r),
    }
}

pub fn apply_augmentation(s: &Spectrogram, draws: &AugDraws, policy: &AugPolicy) -> Spectrogram {
    let mut out = s.clone();
    for stripe in &draws.stripes {
        if let Some(o) = stripe.orientation {
            out = cutout_stripe(&out, o, stripe.start, stripe.thickness);
        }
    }
    if let Some(seed) = draws.noise_seed {
        let a = policy.white_noise.amplitude as f32;
        let mut r = rng::stream(seed, &[rng::tag("white-noise")]);
        for p in out.pixels.iter_mut() {
            *p += r.random_range(-a..=a);
        }
    }
    if draws.scale != 1.0 || draws.shear_deg != 0.0 || draws.rotation_deg != 0.0 {
        out = geometric(&out, draws.scale, draws.shear_deg, draws.rotation_deg);
    }
    for p in out.pixels.iter_mut() {
        *p = p.clamp(0.0, 1.0);
    }
    out
}

pub fn augment<R: Rng>(s: &Spectrogram, policy: &AugPolicy, r: &mut R) -> Spectrogram {
    let draws = draw_augmentation(policy, s.rows, s.cols, r);
    apply_augmentation(s, &draws, policy)
}

/// Zeroes `thickness` rows or columns starting at `start`, clipped to the image.
pub fn cutout_stripe(s: &Spectrogram, orientation: Orientation, start: usize, thickness: usize) -> Spectrogram {
    let mut out = s.clone();
    match orientation {
        Orientation::Horizontal => {
            for row in start..(start + thickness).min(s.rows) {
                out.pixels[row * s.cols..(row + 1) * s.cols].fill(0.0);
            }
        }
        Orientation::Vertical => {
            for row in 0..s.rows {
                for col in start..(start + thickness).min(s.cols) {
                    out.pixels[row * s.cols + col] = 0.0;
                }
            }
        }
    }
    out
}

/// Center-anchored affine warp with bilinear sampling; samples that fall
/// outside the image read as zero.
///
/// The forward map is `rotation * shear * zoom` in (column, row) coordinates
/// about the image center; positive angles turn content counter-clockwise
/// on screen (row 0 at the top).
pub fn geometric(s: &Spectrogram, scale: f64, shear_deg: f64, rot_deg: f64) -> Spectrogram {
    let (sh, th) = (shear_deg.to_radians(), rot_deg.to_radians());
    // Screen y points down, so a visually counter-clockwise turn is -theta in (x, y).
    let rot = [[th.cos(), th.sin()], [-th.sin(), th.cos()]];
    let shear = [[1.0, sh.sin()], [0.0, sh.cos()]];
    let rs = mat_mul(rot, shear);
    let forward = [[rs[0][0] * scale, rs[0][1] * scale], [rs[1][0] * scale, rs[1][1] * scale]];
    let det = forward[0][0] * forward[1][1] - forward[0][1] * forward[1][0];
    let inv = [
        [forward[1][1] / det, -forward[0][1] / det],
        [-forward[1][0] / det, forward[0][0] / det],
    ];

    let cx = (s.cols as f64 - 1.0) / 2.0;
    let cy = (s.rows as f64 - 1.0) / 2.0;
    let mut out = Spectrogram::zeros(s.rows, s.cols).with_meta(s.meta.clone());
    for row in 0..s.rows {
        for col in 0..s.cols {
            let (x, y) = (col as f64 - cx, row as f64 - cy);
            let sx = inv[0][0] * x + inv[0][1] * y + cx;
            let sy = inv[1][0] * x + inv[1][1] * y + cy;
            out.pixels[row * s.cols + col] = bilinear(s, sx, sy);
        }
    }
    out
}

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn bilinear(s: &Spectrogram, x: f64, y: f64) -> f32 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let pixel = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= s.cols as f64 || yi >= s.rows as f64 {
            0.0
        } else {
            s.get(yi as usize, xi as usize) as f64
        }
    };
    let mut v = 0.0;
    for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            let w = wx * wy;
            if w != 0.0 {
                v += w * pixel(x0 + dx, y0 + dy);
            }
        }
    }
    v as f32
}
