use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub const fn new(out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            out_channels,
            kernel,
            stride,
        }
    }
}

/// A chain of conv -> norm -> SELU units. With `residual`, the last unit's
/// normalized output is added to the block input (through a strided 1x1
/// projection when the shape changes) before the final SELU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub convs: Vec<ConvSpec>,
    pub residual: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Per-sample normalization over channels and space with a per-channel affine.
    Layer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub input_h: usize,
    pub input_w: usize,
    pub blocks: Vec<BlockSpec>,
    pub normalization: Normalization,
    pub embedding_dim: usize,
    /// L2 penalty coefficient on convolution kernels.
    pub l2_reg: f64,
}

pub const EMBEDDING_DIM: usize = 128;

impl EncoderSpec {
    /// Desk-scale encoder: a stem conv and four residual stages of two 3x3
    /// convs each (8, 16, 32, 64 channels, the last three downsampling).
    pub fn desk(input_h: usize, input_w: usize, stem_stride: usize) -> Self {
        let stage = |c: usize, s: usize| BlockSpec {
            convs: vec![ConvSpec::new(c, 3, s), ConvSpec::new(c, 3, 1)],
            residual: true,
        };
        Self {
            input_h,
            input_w,
            blocks: vec![
                BlockSpec {
                    convs: vec![ConvSpec::new(8, 3, stem_stride)],
                    residual: false,
                },
                stage(8, 1),
                stage(16, 2),
                stage(32, 2),
                stage(64, 2),
            ],
            normalization: Normalization::Layer,
            embedding_dim: EMBEDDING_DIM,
            l2_reg: 1e-4,
        }
    }

    /// Small encoder for gradient checks and unit tests.
    pub fn tiny(input_h: usize, input_w: usize) -> Self {
        Self {
            input_h,
            input_w,
            blocks: vec![
                BlockSpec {
                    convs: vec![ConvSpec::new(3, 3, 1)],
                    residual: false,
                },
                BlockSpec {
                    convs: vec![ConvSpec::new(4, 3, 2), ConvSpec::new(4, 3, 1)],
                    residual: true,
                },
                BlockSpec {
                    convs: vec![ConvSpec::new(4, 3, 1), ConvSpec::new(4, 3, 1)],
                    residual: true,
                },
            ],
            normalization: Normalization::Layer,
            embedding_dim: EMBEDDING_DIM,
            l2_reg: 1e-4,
        }
    }

    /// Single-channel ResNet-50 layout: a strided 7x7 stem followed by
    /// bottleneck stages of 3, 4, 6 and 3 blocks, SELU activations and a
    /// 128-dimensional embedding.
    pub fn resnet50(input_h: usize, input_w: usize) -> Self {
        let mut blocks = vec![BlockSpec {
            convs: vec![ConvSpec::new(64, 7, 2)],
            residual: false,
        }];
        for (count, mid) in [(3, 64), (4, 128), (6, 256), (3, 512)] {
            for b in 0..count {
                // The first stage's stride stands in for the stem max-pool.
                let stride = if b == 0 { 2 } else { 1 };
                blocks.push(BlockSpec {
                    convs: vec![ConvSpec::new(mid, 1, 1), ConvSpec::new(mid, 3, stride), ConvSpec::new(mid * 4, 1, 1)],
                    residual: true,
                });
            }
        }
        Self {
            input_h,
            input_w,
            blocks,
            normalization: Normalization::Layer,
            embedding_dim: EMBEDDING_DIM,
            l2_reg: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_h == 0 || self.input_w == 0 {
            return Err(Error::Config("encoder input must be non-empty".into()));
        }
        if self.embedding_dim != EMBEDDING_DIM {
            return Err(Error::Config(format!(
                "encoder.embedding_dim must be {EMBEDDING_DIM}, got {}",
                self.embedding_dim
            )));
        }
        if self.blocks.is_empty() || self.blocks.iter().any(|b| b.convs.is_empty()) {
            return Err(Error::Config("encoder needs at least one block and every block a conv".into()));
        }
        for conv in self.blocks.iter().flat_map(|b| &b.convs) {
            if conv.out_channels == 0 || conv.kernel == 0 || conv.stride == 0 {
                return Err(Error::Config(format!("encoder conv {conv:?} has a zero dimension")));
            }
        }
        if self.l2_reg < 0.0 {
            return Err(Error::Config("encoder.l2_reg must be non-negative".into()));
        }
        Ok(())
    }
}
