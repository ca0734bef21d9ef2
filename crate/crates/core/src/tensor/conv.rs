//! 2-D convolution with stride, dilation and zero/reflect padding.
//!
//! Forward and backward both lower to a single GEMM over an im2col buffer.

use super::resample::{crop, reflect_pad_backward, reflect_pad_forward, zero_pad};
use super::{Result, Tensor, TensorError};

/// Boundary handling applied to the input before the kernel slides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    None,
    Zero(usize),
    Reflect(usize),
}

impl Padding {
    pub fn amount(self) -> usize {
        match self {
            Padding::None => 0,
            Padding::Zero(p) | Padding::Reflect(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub padding: Padding,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    /// Square kernel, unit stride and dilation, no padding.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            kernel: (kernel, kernel),
            stride: (1, 1),
            dilation: (1, 1),
            padding: Padding::None,
            in_channels,
            out_channels,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = (stride, stride);
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = (dilation, dilation);
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(TensorError::InvalidSpec {
                op: "conv2d",
                what: what.to_string(),
            })
        };
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return bad("kernel size must be positive");
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return bad("stride must be at least 1");
        }
        if self.dilation.0 == 0 || self.dilation.1 == 0 {
            return bad("dilation must be at least 1");
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive");
        }
        Ok(())
    }
}

/// `floor((len + 2 * pad - dilation * (kernel - 1) - 1) / stride) + 1`, or
/// `None` when the dilated kernel does not fit.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, dilation: usize, pad: usize) -> Option<usize> {
    let extent = dilation * (kernel - 1) + 1;
    let padded = len + 2 * pad;
    (padded >= extent).then(|| (padded - extent) / stride + 1)
}

/// Validated geometry of one convolution call.
struct Geometry {
    c: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

fn check_shapes(input: &Tensor, weight: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<(usize, usize, usize)> {
    spec.validate()?;
    let (c, h, w) = input.chw()?;
    if c != spec.in_channels {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            dim: "input channels".into(),
            expected: spec.in_channels,
            actual: c,
        });
    }
    let ws = spec.weight_shape();
    if weight.shape().len() != 4 {
        return Err(TensorError::Rank {
            op: "conv2d",
            expected: 4,
            shape: weight.shape().to_vec(),
        });
    }
    let names = ["weight out_channels", "weight in_channels", "weight kernel height", "weight kernel width"];
    for (i, name) in names.iter().enumerate() {
        if weight.shape()[i] != ws[i] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                dim: (*name).into(),
                expected: ws[i],
                actual: weight.shape()[i],
            });
        }
    }
    if bias.shape() != [spec.out_channels] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            dim: "bias length".into(),
            expected: spec.out_channels,
            actual: bias.len(),
        });
    }
    Ok((c, h, w))
}

fn pad_input(input: &Tensor, padding: Padding) -> Result<Tensor> {
    match padding {
        Padding::None | Padding::Zero(0) | Padding::Reflect(0) => Ok(input.clone()),
        Padding::Zero(p) => zero_pad(input, p, p),
        Padding::Reflect(p) => reflect_pad_forward(input, [p; 4]).map_err(|e| match e {
            TensorError::ReflectTooLarge { amount, extent, .. } => TensorError::ReflectTooLarge {
                op: "conv2d",
                amount,
                extent,
            },
            other => other,
        }),
    }
}

fn geometry(padded: &Tensor, spec: &ConvSpec) -> Result<Geometry> {
    let (c, ph, pw) = padded.chw()?;
    let (kh, kw) = spec.kernel;
    let oh = conv_output_len(ph, kh, spec.stride.0, spec.dilation.0, 0).ok_or(TensorError::KernelTooLarge {
        op: "conv2d",
        extent: spec.dilation.0 * (kh - 1) + 1,
        input: ph,
    })?;
    let ow = conv_output_len(pw, kw, spec.stride.1, spec.dilation.1, 0).ok_or(TensorError::KernelTooLarge {
        op: "conv2d",
        extent: spec.dilation.1 * (kw - 1) + 1,
        input: pw,
    })?;
    Ok(Geometry { c, ph, pw, oh, ow })
}

/// Rows are `(channel, ky, kx)`, columns are output pixels.
fn im2col(padded: &Tensor, g: &Geometry, spec: &ConvSpec) -> Vec<f64> {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (dh, dw) = spec.dilation;
    let npix = g.oh * g.ow;
    let src = padded.data();
    let mut cols = vec![0.0; g.c * kh * kw * npix];
    let mut row = 0;
    for ch in 0..g.c {
        let plane = &src[ch * g.ph * g.pw..(ch + 1) * g.ph * g.pw];
        for ky in 0..kh {
            for kx in 0..kw {
                let dst = &mut cols[row * npix..(row + 1) * npix];
                for oy in 0..g.oh {
                    let iy = oy * sh + ky * dh;
                    let srow = &plane[iy * g.pw..(iy + 1) * g.pw];
                    let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if sw == 1 {
                        let start = kx * dw;
                        drow.copy_from_slice(&srow[start..start + g.ow]);
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            *d = srow[ox * sw + kx * dw];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &Geometry, spec: &ConvSpec) -> Tensor {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (dh, dw) = spec.dilation;
    let npix = g.oh * g.ow;
    let mut out = vec![0.0; g.c * g.ph * g.pw];
    let mut row = 0;
    for ch in 0..g.c {
        let plane = &mut out[ch * g.ph * g.pw..(ch + 1) * g.ph * g.pw];
        for ky in 0..kh {
            for kx in 0..kw {
                let src = &cols[row * npix..(row + 1) * npix];
                for oy in 0..g.oh {
                    let iy = oy * sh + ky * dh;
                    let drow = &mut plane[iy * g.pw..(iy + 1) * g.pw];
                    let srow = &src[oy * g.ow..(oy + 1) * g.ow];
                    for (ox, &v) in srow.iter().enumerate() {
                        drow[ox * sw + kx * dw] += v;
                    }
                }
                row += 1;
            }
        }
    }
    Tensor {
        shape: vec![g.c, g.ph, g.pw],
        data: out,
    }
}

/// `c = a · b (+ c when accumulate)`, with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    let a_need = (m as isize - 1) * a_strides.0 + (k as isize - 1) * a_strides.1;
    let b_need = (k as isize - 1) * b_strides.0 + (n as isize - 1) * b_strides.1;
    assert!((a_need as usize) < a.len() && (b_need as usize) < b.len());
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every strided access inside a, b and c.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    check_shapes(input, weight, bias, spec)?;
    let padded = pad_input(input, spec.padding)?;
    let g = geometry(&padded, spec)?;
    let kdim = g.c * spec.kernel.0 * spec.kernel.1;
    let npix = g.oh * g.ow;
    let oc = spec.out_channels;
    let mut out = vec![0.0; oc * npix];
    for (o, plane) in out.chunks_mut(npix).enumerate() {
        plane.fill(bias.data()[o]);
    }
    if kdim * npix > 0 {
        let cols = if spec.kernel == (1, 1) && spec.stride == (1, 1) {
            // A pointwise convolution reads the input planes directly.
            padded.into_data()
        } else {
            im2col(&padded, &g, spec)
        };
        gemm(oc, kdim, npix, weight.data(), (kdim as isize, 1), &cols, (npix as isize, 1), &mut out, true);
    }
    Tensor::new(vec![oc, g.oh, g.ow], out)
}

/// Gradients with respect to (input, weight, bias); `None` where not requested.
pub(crate) struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

pub(crate) fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weight: &Tensor,
    spec: &ConvSpec,
    need: [bool; 3],
) -> Result<ConvGrads> {
    let (_, h, w) = input.chw()?;
    let padded = pad_input(input, spec.padding)?;
    let g = geometry(&padded, spec)?;
    let kdim = g.c * spec.kernel.0 * spec.kernel.1;
    let npix = g.oh * g.ow;
    let oc = spec.out_channels;
    let gout = grad_out.data();

    let bias = need[2].then(|| {
        let sums = gout.chunks(npix).map(|p| p.iter().sum()).collect();
        Tensor {
            shape: vec![oc],
            data: sums,
        }
    });

    let pointwise = spec.kernel == (1, 1) && spec.stride == (1, 1);
    let cols = if need[1] {
        Some(if pointwise {
            padded.data().to_vec()
        } else {
            im2col(&padded, &g, spec)
        })
    } else {
        None
    };

    let weight_grad = cols.map(|cols| {
        let mut dw = vec![0.0; oc * kdim];
        // dW = dOut (oc x npix) . cols^T (npix x kdim)
        gemm(oc, npix, kdim, gout, (npix as isize, 1), &cols, (1, npix as isize), &mut dw, false);
        Tensor {
            shape: weight.shape().to_vec(),
            data: dw,
        }
    });

    let input_grad = if need[0] {
        let mut dcols = vec![0.0; kdim * npix];
        // dCols = W^T (kdim x oc) . dOut (oc x npix)
        gemm(kdim, oc, npix, weight.data(), (1, kdim as isize), gout, (npix as isize, 1), &mut dcols, false);
        let dpadded = if pointwise {
            Tensor {
                shape: vec![g.c, g.ph, g.pw],
                data: dcols,
            }
        } else {
            col2im(&dcols, &g, spec)
        };
        Some(match spec.padding {
            Padding::None | Padding::Zero(0) | Padding::Reflect(0) => dpadded,
            Padding::Zero(p) => crop(&dpadded, [p; 4])?,
            Padding::Reflect(p) => reflect_pad_backward(&dpadded, h, w, [p; 4]),
        })
    } else {
        None
    };

    Ok(ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias,
    })
}
