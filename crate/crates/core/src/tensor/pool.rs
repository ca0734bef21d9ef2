//! Max pooling with symmetric zero padding.
//!
//! Padded cells hold `0.0` and take part in the maximum. Ties resolve to the
//! first candidate in row-major window order, so the gradient route is
//! deterministic.

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub padding: (usize, usize),
}

impl PoolSpec {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel: (kernel, kernel),
            stride: (stride, stride),
            dilation: (1, 1),
            padding: (0, 0),
        }
    }

    pub fn with_padding(mut self, pad: usize) -> Self {
        self.padding = (pad, pad);
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = (dilation, dilation);
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = self.kernel.0 > 0
            && self.kernel.1 > 0
            && self.stride.0 > 0
            && self.stride.1 > 0
            && self.dilation.0 > 0
            && self.dilation.1 > 0;
        if ok {
            Ok(())
        } else {
            Err(TensorError::InvalidSpec {
                op: "max_pool",
                what: format!("{self:?}"),
            })
        }
    }
}

pub fn pool_output_len(len: usize, kernel: usize, stride: usize, dilation: usize, pad: usize) -> Option<usize> {
    super::conv_output_len(len, kernel, stride, dilation, pad)
}

/// Pooled values plus, per output cell, the flat input index that won
/// (`None` when a padding cell won).
pub(crate) fn max_pool_forward(input: &Tensor, spec: &PoolSpec) -> Result<(Tensor, Vec<Option<usize>>)> {
    spec.validate()?;
    let (c, h, w) = input.chw()?;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (dh, dw) = spec.dilation;
    let (pad_h, pad_w) = spec.padding;
    let too_large = |extent, input| TensorError::KernelTooLarge {
        op: "max_pool",
        extent,
        input,
    };
    let oh = pool_output_len(h, kh, sh, dh, pad_h).ok_or(too_large(dh * (kh - 1) + 1, h + 2 * pad_h))?;
    let ow = pool_output_len(w, kw, sw, dw, pad_w).ok_or(too_large(dw * (kw - 1) + 1, w + 2 * pad_w))?;
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = None;
                let mut first = true;
                for ky in 0..kh {
                    let iy = (oy * sh + ky * dh) as isize - pad_h as isize;
                    for kx in 0..kw {
                        let ix = (ox * sw + kx * dw) as isize - pad_w as isize;
                        let inside = iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w;
                        let (v, at) = if inside {
                            let idx = base + iy as usize * w + ix as usize;
                            (src[idx], Some(idx))
                        } else {
                            (0.0, None)
                        };
                        if first || v > best {
                            best = v;
                            best_at = at;
                            first = false;
                        }
                    }
                }
                out.push(best);
                arg.push(best_at);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, arg))
}

pub(crate) fn max_pool_backward(grad: &Tensor, input_shape: &[usize], argmax: &[Option<usize>]) -> Tensor {
    let mut out = Tensor::zeros(input_shape);
    let dst = out.data_mut();
    for (&g, at) in grad.data().iter().zip(argmax) {
        if let Some(i) = at {
            dst[*i] += g;
        }
    }
    out
}
