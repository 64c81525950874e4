//! Dense kernels shared by the encoder: GEMM, im2col convolution,
//! per-sample layer normalization and SELU.

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

#[inline]
pub fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// `c = a * b + beta * c` with `a` logically `m x k` and `b` logically
/// `k x n`; the `*_t` flags say the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover the m x k, k x n and m x n extents described by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(in_c: usize, in_h: usize, in_w: usize, out_c: usize, kernel: usize, stride: usize) -> Self {
        let pad = kernel / 2;
        let out_h = (in_h + 2 * pad - kernel) / stride + 1;
        let out_w = (in_w + 2 * pad - kernel) / stride + 1;
        Self {
            in_c,
            in_h,
            in_w,
            out_c,
            kernel,
            stride,
            pad,
            out_h,
            out_w,
        }
    }

    pub fn patch(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn out_hw(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_hw()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    /// Input pixel feeding column `(oy, ox)` of patch row `(ky, kx)`, if inside the image.
    #[inline]
    fn source(&self, ky: usize, kx: usize, oy: usize, ox: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad)?;
        let ix = (ox * self.stride + kx).checked_sub(self.pad)?;
        (iy < self.in_h && ix < self.in_w).then_some((iy, ix))
    }

    pub fn im2col(&self, x: &[f64], cols: &mut Vec<f64>) {
        let hw = self.out_hw();
        cols.clear();
        cols.resize(self.patch() * hw, 0.0);
        for c in 0..self.in_c {
            let plane = &x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (c * self.kernel + ky) * self.kernel + kx;
                    let dst = &mut cols[row * hw..(row + 1) * hw];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some((iy, ix)) = self.source(ky, kx, oy, ox) {
                                dst[oy * self.out_w + ox] = plane[iy * self.in_w + ix];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let hw = self.out_hw();
        for c in 0..self.in_c {
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (c * self.kernel + ky) * self.kernel + kx;
                    let src = &cols[row * hw..(row + 1) * hw];
                    let plane = &mut dx[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some((iy, ix)) = self.source(ky, kx, oy, ox) {
                                plane[iy * self.in_w + ix] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64], weight: &[f64], bias: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
        let hw = self.out_hw();
        let mut out = vec![0.0; self.out_len()];
        for (o, plane) in out.chunks_exact_mut(hw).enumerate() {
            plane.fill(bias[o]);
        }
        let cols: &[f64] = if self.is_pointwise() {
            x
        } else {
            self.im2col(x, scratch);
            scratch
        };
        gemm(self.out_c, self.patch(), hw, weight, false, cols, false, 1.0, &mut out);
        out
    }

    /// Accumulates weight/bias gradients and, if `dx` is given, adds the input gradient.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[f64],
        weight: &[f64],
        dout: &[f64],
        dweight: &mut [f64],
        dbias: &mut [f64],
        dx: Option<&mut [f64]>,
        scratch: &mut Vec<f64>,
    ) {
        let hw = self.out_hw();
        for (o, plane) in dout.chunks_exact(hw).enumerate() {
            dbias[o] += plane.iter().sum::<f64>();
        }
        let cols: &[f64] = if self.is_pointwise() {
            x
        } else {
            self.im2col(x, scratch);
            scratch
        };
        gemm(self.out_c, hw, self.patch(), dout, false, cols, true, 1.0, dweight);
        if let Some(dx) = dx {
            let mut dcols = vec![0.0; self.patch() * hw];
            gemm(self.patch(), self.out_c, hw, weight, true, dout, false, 0.0, &mut dcols);
            if self.is_pointwise() {
                for (d, g) in dx.iter_mut().zip(&dcols) {
                    *d += g;
                }
            } else {
                self.col2im(&dcols, dx);
            }
        }
    }
}

/// Per-sample layer normalization state needed for the backward pass.
pub struct NormCache {
    pub xhat: Vec<f64>,
    pub inv_std: f64,
}

pub fn layer_norm_forward(x: &[f64], channels: usize, scale: &[f64], shift: &[f64]) -> (Vec<f64>, NormCache) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    let hw = x.len() / channels;
    let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let y = xhat
        .iter()
        .enumerate()
        .map(|(i, h)| scale[i / hw] * h + shift[i / hw])
        .collect();
    (y, NormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    dy: &[f64],
    cache: &NormCache,
    channels: usize,
    scale: &[f64],
    dscale: &mut [f64],
    dshift: &mut [f64],
) -> Vec<f64> {
    let hw = dy.len() / channels;
    let n = dy.len() as f64;
    let mut dxhat = vec![0.0; dy.len()];
    for c in 0..channels {
        let range = c * hw..(c + 1) * hw;
        for i in range {
            dscale[c] += dy[i] * cache.xhat[i];
            dshift[c] += dy[i];
            dxhat[i] = dy[i] * scale[c];
        }
    }
    let sum_d = dxhat.iter().sum::<f64>();
    let sum_dx = dxhat.iter().zip(&cache.xhat).map(|(d, h)| d * h).sum::<f64>();
    dxhat
        .iter()
        .zip(&cache.xhat)
        .map(|(d, h)| cache.inv_std * (d - sum_d / n - h * sum_dx / n))
        .collect()
}
