use rayon::prelude::*;

use super::kernels::{layer_norm_backward, layer_norm_forward, selu, selu_grad, ConvGeom, NormCache};
use super::spec::{EncoderSpec, Normalization};
use super::state::{ParamKind, ParamLayout};
use crate::error::{Error, Result};

/// Samples per gradient work item. Fixed so the reduction order, and thus
/// every bit of the summed gradient, is independent of the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone)]
struct ConvLayer {
    geom: ConvGeom,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct NormLayer {
    channels: usize,
    scale: usize,
    shift: usize,
}

#[derive(Debug, Clone)]
struct Unit {
    conv: ConvLayer,
    norm: Option<NormLayer>,
}

#[derive(Debug, Clone)]
enum Shortcut {
    None,
    Identity,
    Projection(ConvLayer),
}

#[derive(Debug, Clone)]
struct Block {
    units: Vec<Unit>,
    shortcut: Shortcut,
}

/// Compiled encoder: geometry and parameter offsets for every layer.
#[derive(Debug, Clone)]
pub struct Encoder {
    blocks: Vec<Block>,
    input_len: usize,
    final_channels: usize,
    final_hw: (usize, usize),
    embed_weight: usize,
    embed_bias: usize,
    embedding_dim: usize,
}

struct UnitTrace {
    input: Vec<f64>,
    norm: Option<NormCache>,
    pre: Vec<f64>,
}

struct BlockTrace {
    units: Vec<UnitTrace>,
    sum: Vec<f64>,
}

/// Activations kept by a traced forward pass for backpropagation.
pub struct Trace {
    blocks: Vec<BlockTrace>,
    /// Output of the last block, `[channel][y][x]`.
    pub final_map: Vec<f64>,
    pooled: Vec<f64>,
}

impl Encoder {
    /// Lays out parameters for `spec` in `layout` and returns the compiled network.
    pub fn compile(spec: &EncoderSpec, layout: &mut ParamLayout) -> Result<Self> {
        spec.validate()?;
        let (mut c, mut h, mut w) = (1usize, spec.input_h, spec.input_w);
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for (bi, bspec) in spec.blocks.iter().enumerate() {
            let (in_c, in_h, in_w) = (c, h, w);
            let mut units = Vec::new();
            for (ui, cs) in bspec.convs.iter().enumerate() {
                let geom = ConvGeom::new(c, h, w, cs.out_channels, cs.kernel, cs.stride);
                if geom.out_h == 0 || geom.out_w == 0 {
                    return Err(Error::Config(format!("encoder block {bi} shrinks the image to nothing")));
                }
                let name = format!("block{bi}.conv{ui}");
                let conv = ConvLayer {
                    geom,
                    weight: layout.push(&format!("{name}.weight"), &[cs.out_channels, c, cs.kernel, cs.kernel], ParamKind::ConvKernel),
                    bias: layout.push(&format!("{name}.bias"), &[cs.out_channels], ParamKind::Bias),
                };
                let norm = match spec.normalization {
                    Normalization::None => None,
                    Normalization::Layer => Some(NormLayer {
                        channels: cs.out_channels,
                        scale: layout.push(&format!("{name}.norm.scale"), &[cs.out_channels], ParamKind::NormScale),
                        shift: layout.push(&format!("{name}.norm.shift"), &[cs.out_channels], ParamKind::NormShift),
                    }),
                };
                units.push(Unit { conv, norm });
                c = geom.out_c;
                h = geom.out_h;
                w = geom.out_w;
            }
            let shortcut = if !bspec.residual {
                Shortcut::None
            } else if (in_c, in_h, in_w) == (c, h, w) {
                Shortcut::Identity
            } else {
                let stride = bspec.convs.iter().map(|cs| cs.stride).product();
                let geom = ConvGeom::new(in_c, in_h, in_w, c, 1, stride);
                if (geom.out_h, geom.out_w) != (h, w) {
                    return Err(Error::Config(format!("encoder block {bi}: projection shortcut cannot match output shape")));
                }
                Shortcut::Projection(ConvLayer {
                    geom,
                    weight: layout.push(&format!("block{bi}.shortcut.weight"), &[c, in_c, 1, 1], ParamKind::ConvKernel),
                    bias: layout.push(&format!("block{bi}.shortcut.bias"), &[c], ParamKind::Bias),
                })
            };
            blocks.push(Block { units, shortcut });
        }
        let embed_weight = layout.push("embed.weight", &[spec.embedding_dim, c], ParamKind::Linear);
        let embed_bias = layout.push("embed.bias", &[spec.embedding_dim], ParamKind::Bias);
        Ok(Self {
            blocks,
            input_len: spec.input_h * spec.input_w,
            final_channels: c,
            final_hw: (h, w),
            embed_weight,
            embed_bias,
            embedding_dim: spec.embedding_dim,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn final_channels(&self) -> usize {
        self.final_channels
    }

    pub fn final_hw(&self) -> (usize, usize) {
        self.final_hw
    }

    fn check_input(&self, image: &[f64]) -> Result<()> {
        if image.len() != self.input_len {
            return Err(Error::Contract(format!(
                "encoder expects {} input pixels, got {}",
                self.input_len,
                image.len()
            )));
        }
        Ok(())
    }

    fn run_unit(&self, p: &[f64], unit: &Unit, x: &[f64], scratch: &mut Vec<f64>) -> (Vec<f64>, Option<NormCache>) {
        let g = &unit.conv.geom;
        let z = g.forward(
            x,
            &p[unit.conv.weight..unit.conv.weight + g.out_c * g.patch()],
            &p[unit.conv.bias..unit.conv.bias + g.out_c],
            scratch,
        );
        match &unit.norm {
            None => (z, None),
            Some(n) => {
                let (y, cache) = layer_norm_forward(&z, n.channels, &p[n.scale..n.scale + n.channels], &p[n.shift..n.shift + n.channels]);
                (y, Some(cache))
            }
        }
    }

    fn run_shortcut(&self, p: &[f64], block: &Block, x: &[f64], scratch: &mut Vec<f64>) -> Option<Vec<f64>> {
        match &block.shortcut {
            Shortcut::None => None,
            Shortcut::Identity => Some(x.to_vec()),
            Shortcut::Projection(conv) => {
                let g = &conv.geom;
                Some(g.forward(
                    x,
                    &p[conv.weight..conv.weight + g.out_c * g.patch()],
                    &p[conv.bias..conv.bias + g.out_c],
                    scratch,
                ))
            }
        }
    }

    fn embed(&self, p: &[f64], final_map: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h, w) = self.final_hw;
        let hw = (h * w) as f64;
        let pooled: Vec<f64> = final_map.chunks_exact(h * w).map(|plane| plane.iter().sum::<f64>() / hw).collect();
        let c = self.final_channels;
        let feats = (0..self.embedding_dim)
            .map(|o| {
                let row = &p[self.embed_weight + o * c..self.embed_weight + (o + 1) * c];
                p[self.embed_bias + o] + row.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        (feats, pooled)
    }

    /// Features of one image, no activations kept.
    pub fn forward(&self, p: &[f64], image: &[f64]) -> Result<Vec<f64>> {
        self.check_input(image)?;
        let mut scratch = Vec::new();
        let mut x = image.to_vec();
        for block in &self.blocks {
            let shortcut = self.run_shortcut(p, block, &x, &mut scratch);
            let last = block.units.len() - 1;
            for (i, unit) in block.units.iter().enumerate() {
                let (mut y, _) = self.run_unit(p, unit, &x, &mut scratch);
                if i == last {
                    if let Some(s) = &shortcut {
                        y.iter_mut().zip(s).for_each(|(a, b)| *a += b);
                    }
                }
                y.iter_mut().for_each(|v| *v = selu(*v));
                x = y;
            }
        }
        Ok(self.embed(p, &x).0)
    }

    pub fn forward_traced(&self, p: &[f64], image: &[f64]) -> Result<(Vec<f64>, Trace)> {
        self.check_input(image)?;
        let mut scratch = Vec::new();
        let mut x = image.to_vec();
        let mut traces = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let shortcut = self.run_shortcut(p, block, &x, &mut scratch);
            let last = block.units.len() - 1;
            let mut units = Vec::with_capacity(block.units.len());
            let mut sum = Vec::new();
            for (i, unit) in block.units.iter().enumerate() {
                let (y, norm) = self.run_unit(p, unit, &x, &mut scratch);
                let input = std::mem::take(&mut x);
                if i == last {
                    sum = y.clone();
                    if let Some(s) = &shortcut {
                        sum.iter_mut().zip(s).for_each(|(a, b)| *a += b);
                    }
                    x = sum.iter().map(|&v| selu(v)).collect();
                } else {
                    x = y.iter().map(|&v| selu(v)).collect();
                }
                units.push(UnitTrace { input, norm, pre: y });
            }
            traces.push(BlockTrace { units, sum });
        }
        let (feats, pooled) = self.embed(p, &x);
        Ok((
            feats,
            Trace {
                blocks: traces,
                final_map: x,
                pooled,
            },
        ))
    }

    /// Backpropagates `d_feat` through the embedding head only; returns the
    /// gradient with respect to the last block's output map.
    pub fn head_backward(&self, p: &[f64], trace: &Trace, d_feat: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let c = self.final_channels;
        let (h, w) = self.final_hw;
        let mut d_pooled = vec![0.0; c];
        for (o, &d) in d_feat.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[self.embed_bias + o] += d;
            let wrow = &p[self.embed_weight + o * c..self.embed_weight + (o + 1) * c];
            let grow = &mut grad[self.embed_weight + o * c..self.embed_weight + (o + 1) * c];
            for j in 0..c {
                grow[j] += d * trace.pooled[j];
                d_pooled[j] += d * wrow[j];
            }
        }
        let hw = (h * w) as f64;
        d_pooled.iter().flat_map(|&d| std::iter::repeat_n(d / hw, h * w)).collect()
    }

    /// Accumulates parameter gradients of `<d_feat, features(image)>` into `grad`.
    pub fn backward(&self, p: &[f64], trace: &Trace, d_feat: &[f64], grad: &mut [f64]) {
        let mut d_x = self.head_backward(p, trace, d_feat, grad);
        let mut scratch = Vec::new();
        for (bi, (block, bt)) in self.blocks.iter().zip(&trace.blocks).enumerate().rev() {
            let need_input_grad = bi > 0;
            let d_sum: Vec<f64> = d_x.iter().zip(&bt.sum).map(|(d, s)| d * selu_grad(*s)).collect();
            let block_input = &bt.units[0].input;
            let mut d_in = vec![0.0; if need_input_grad { block_input.len() } else { 0 }];
            match &block.shortcut {
                Shortcut::None => {}
                Shortcut::Identity => {
                    if need_input_grad {
                        d_in.iter_mut().zip(&d_sum).for_each(|(a, b)| *a += b);
                    }
                }
                Shortcut::Projection(conv) => {
                    let g = &conv.geom;
                    let (wr, br) = (conv.weight..conv.weight + g.out_c * g.patch(), conv.bias..conv.bias + g.out_c);
                    let (dw, db) = split_two(grad, wr.clone(), br);
                    g.backward(
                        block_input,
                        &p[wr],
                        &d_sum,
                        dw,
                        db,
                        need_input_grad.then_some(d_in.as_mut_slice()),
                        &mut scratch,
                    );
                }
            }
            let mut d_y = d_sum;
            for (ui, (unit, ut)) in block.units.iter().zip(&bt.units).enumerate().rev() {
                let d_z = match (&unit.norm, &ut.norm) {
                    (Some(n), Some(cache)) => {
                        let (ds, dsh) = split_two(grad, n.scale..n.scale + n.channels, n.shift..n.shift + n.channels);
                        layer_norm_backward(&d_y, cache, n.channels, &p[n.scale..n.scale + n.channels], ds, dsh)
                    }
                    _ => d_y,
                };
                let g = &unit.conv.geom;
                let wr = unit.conv.weight..unit.conv.weight + g.out_c * g.patch();
                let br = unit.conv.bias..unit.conv.bias + g.out_c;
                let first = ui == 0;
                let mut d_xi = if first && !need_input_grad { Vec::new() } else { vec![0.0; g.in_len()] };
                let want = !(first && !need_input_grad);
                {
                    let (dw, db) = split_two(grad, wr.clone(), br);
                    g.backward(&ut.input, &p[wr], &d_z, dw, db, want.then_some(d_xi.as_mut_slice()), &mut scratch);
                }
                if first {
                    if need_input_grad {
                        d_in.iter_mut().zip(&d_xi).for_each(|(a, b)| *a += b);
                    }
                    d_y = Vec::new();
                } else {
                    let prev_pre = &bt.units[ui - 1].pre;
                    d_y = d_xi.iter().zip(prev_pre).map(|(d, s)| d * selu_grad(*s)).collect();
                }
            }
            d_x = d_in;
        }
    }

    /// Features for a batch, computed in parallel, returned in input order.
    pub fn forward_batch(&self, p: &[f64], images: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        images.par_iter().map(|img| self.forward(p, img)).collect()
    }

    /// Features and traces for a batch, computed in parallel, in input order.
    pub fn forward_traced_batch(&self, p: &[f64], images: &[&[f64]]) -> Result<(Vec<Vec<f64>>, Vec<Trace>)> {
        let out: Vec<(Vec<f64>, Trace)> = images.par_iter().map(|img| self.forward_traced(p, img)).collect::<Result<_>>()?;
        Ok(out.into_iter().unzip())
    }

    /// Gradient of `sum_i <d_feats[i], features_i>` from stored traces.
    pub fn backward_traced_batch(&self, p: &[f64], traces: &[Trace], d_feats: &[Vec<f64>], grad: &mut [f64]) -> Result<()> {
        if traces.len() != d_feats.len() {
            return Err(Error::Contract("backward: traces and gradients differ in length".into()));
        }
        let work: Vec<(&Trace, &Vec<f64>)> = traces.iter().zip(d_feats).filter(|(_, d)| d.iter().any(|v| *v != 0.0)).collect();
        let partials: Vec<Vec<f64>> = work
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; grad.len()];
                for (t, d) in chunk {
                    self.backward(p, t, d, &mut g);
                }
                g
            })
            .collect();
        for part in partials {
            grad.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
        }
        Ok(())
    }

    /// Sum over the batch of parameter gradients of `<d_feats[i], features(images[i])>`.
    /// Samples with an all-zero feature gradient are skipped.
    pub fn backward_batch(&self, p: &[f64], images: &[&[f64]], d_feats: &[Vec<f64>], grad: &mut [f64]) -> Result<()> {
        if images.len() != d_feats.len() {
            return Err(Error::Contract("backward_batch: images and gradients differ in length".into()));
        }
        let work: Vec<(&[f64], &Vec<f64>)> = images
            .iter()
            .zip(d_feats)
            .filter(|(_, d)| d.iter().any(|v| *v != 0.0))
            .map(|(i, d)| (*i, d))
            .collect();
        let partials: Vec<Vec<f64>> = work
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| -> Result<Vec<f64>> {
                let mut g = vec![0.0; grad.len()];
                for (img, d) in chunk {
                    let (_, trace) = self.forward_traced(p, img)?;
                    self.backward(p, &trace, d, &mut g);
                }
                Ok(g)
            })
            .collect::<Result<_>>()?;
        for part in partials {
            grad.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
        }
        Ok(())
    }
}

/// Two disjoint mutable sub-slices of `v`.
fn split_two(v: &mut [f64], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [f64], &mut [f64]) {
    assert!(a.end <= b.start || b.end <= a.start, "overlapping parameter ranges");
    if a.start < b.start {
        let (lo, hi) = v.split_at_mut(b.start);
        (&mut lo[a], &mut hi[..b.end - b.start])
    } else {
        let (lo, hi) = v.split_at_mut(a.start);
        let a_len = a.end - a.start;
        (&mut hi[..a_len], &mut lo[b])
    }
}
