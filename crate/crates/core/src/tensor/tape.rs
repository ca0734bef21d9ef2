use super::conv::{conv2d_backward, conv2d_forward, ConvSpec};
use super::pool::{max_pool_backward, max_pool_forward, PoolSpec};
use super::resample::{
    crop, reflect_pad_backward, reflect_pad_forward, upsample_backward, upsample_forward, Sides,
};
use super::{Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var, spec: ConvSpec },
    Relu(Var),
    MaxPool { input: Var, argmax: Vec<Option<usize>> },
    Upsample(Var),
    ReflectPad { input: Var, sides: Sides },
    Crop { input: Var, sides: Sides },
    Concat(Vec<Var>),
    Slice { input: Var, start: usize },
    Gather { input: Var, pixels: Vec<usize> },
    Sum(Var),
    Mul(Var, Var),
    BasisContract { coeffs: Var, basis: Tensor, scale: Vec<f64> },
    MeanSquaredError { pred: Var, target: Tensor, pixels: Option<Vec<usize>> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Leaves created with [`Tape::param`] receive gradients. Repeated calls to
/// [`Tape::backward`] accumulate into those gradients until
/// [`Tape::zero_grads`] clears them.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, spec: &ConvSpec) -> Result<Var> {
        let out = conv2d_forward(self.value(input), self.value(weight), self.value(bias), spec)?;
        let rg = self.needs(&[input, weight, bias]);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec: *spec,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let out = Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        };
        let rg = self.needs(&[input]);
        self.push(out, Op::Relu(input), rg)
    }

    pub fn max_pool(&mut self, input: Var, spec: &PoolSpec) -> Result<Var> {
        let (out, argmax) = max_pool_forward(self.value(input), spec)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::MaxPool { input, argmax }, rg))
    }

    /// Align-corners bilinear interpolation to `target_h` x `target_w`.
    pub fn bilinear_upsample(&mut self, input: Var, target_h: usize, target_w: usize) -> Result<Var> {
        let out = upsample_forward(self.value(input), target_h, target_w)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::Upsample(input), rg))
    }

    /// Mirror padding of `amount` on every side (edge pixel not repeated).
    pub fn reflect_pad(&mut self, input: Var, amount: usize) -> Result<Var> {
        self.reflect_pad_sides(input, [amount; 4])
    }

    /// Mirror padding with per-side amounts `[top, bottom, left, right]`.
    pub fn reflect_pad_sides(&mut self, input: Var, sides: [usize; 4]) -> Result<Var> {
        let out = reflect_pad_forward(self.value(input), sides)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::ReflectPad { input, sides }, rg))
    }

    /// Removes `[top, bottom, left, right]` rows/columns.
    pub fn crop(&mut self, input: Var, sides: [usize; 4]) -> Result<Var> {
        let out = crop(self.value(input), sides)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::Crop { input, sides }, rg))
    }

    /// Stacks rank-3 tensors with equal spatial size along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Empty("concat_channels"))?;
        let (_, h, w) = self.value(*first).chw()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            let (c, ph, pw) = self.value(*p).chw()?;
            if ph != h {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    dim: "height".into(),
                    expected: h,
                    actual: ph,
                });
            }
            if pw != w {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    dim: "width".into(),
                    expected: w,
                    actual: pw,
                });
            }
            channels += c;
            data.extend_from_slice(self.value(*p).data());
        }
        let rg = self.needs(parts);
        let out = Tensor::new(vec![channels, h, w], data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec()), rg))
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(input).slice_channels(start, len)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::Slice { input, start }, rg))
    }

    /// Picks pixels (flat `y * w + x` indices) into a `C x 1 x n` map.
    pub fn gather_pixels(&mut self, input: Var, pixels: &[usize]) -> Result<Var> {
        let (c, h, w) = self.value(input).chw()?;
        let plane = h * w;
        if let Some(&bad) = pixels.iter().find(|&&p| p >= plane) {
            return Err(TensorError::OutOfRange {
                op: "gather_pixels",
                index: bad,
                len: plane,
            });
        }
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(c * pixels.len());
        for ch in 0..c {
            data.extend(pixels.iter().map(|&p| src[ch * plane + p]));
        }
        let out = Tensor::new(vec![c, 1, pixels.len()], data)?;
        let rg = self.needs(&[input]);
        Ok(self.push(
            out,
            Op::Gather {
                input,
                pixels: pixels.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).sum();
        let rg = self.needs(&[input]);
        self.push(Tensor::scalar(s), Op::Sum(input), rg)
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape != y.shape {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                dim: "element count".into(),
                expected: x.len(),
                actual: y.len(),
            });
        }
        let out = Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect(),
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Per-pixel matrix-vector product against a constant basis.
    ///
    /// `coeffs` holds `R * K` channels read as a row-major `R x K` matrix per
    /// pixel, each column `k` multiplied by `scale[k]`; `basis` holds `K`
    /// channels. Output channel `r` is `sum_k (coeffs[r*K+k] * scale[k]) * basis[k]`,
    /// accumulated in increasing `k` starting from `0.0`.
    pub fn basis_contract(&mut self, coeffs: Var, basis: &Tensor, scale: &[f64]) -> Result<Var> {
        let (rk, h, w) = self.value(coeffs).chw()?;
        let (k, bh, bw) = basis.chw()?;
        if k != scale.len() {
            return Err(TensorError::ShapeMismatch {
                op: "basis_contract",
                dim: "scale length".into(),
                expected: k,
                actual: scale.len(),
            });
        }
        if (bh, bw) != (h, w) {
            return Err(TensorError::ShapeMismatch {
                op: "basis_contract",
                dim: "basis pixels".into(),
                expected: h * w,
                actual: bh * bw,
            });
        }
        if k == 0 || rk % k != 0 {
            return Err(TensorError::ShapeMismatch {
                op: "basis_contract",
                dim: "coefficient channels".into(),
                expected: k,
                actual: rk,
            });
        }
        let rows = rk / k;
        let plane = h * w;
        let cf = self.value(coeffs).data();
        let bs = basis.data();
        let mut out = vec![0.0; rows * plane];
        for r in 0..rows {
            for p in 0..plane {
                let mut acc = 0.0;
                for (kk, s) in scale.iter().enumerate() {
                    acc += (cf[(r * k + kk) * plane + p] * s) * bs[kk * plane + p];
                }
                out[r * plane + p] = acc;
            }
        }
        let rg = self.needs(&[coeffs]);
        let out = Tensor::new(vec![rows, h, w], out)?;
        Ok(self.push(
            out,
            Op::BasisContract {
                coeffs,
                basis: basis.clone(),
                scale: scale.to_vec(),
            },
            rg,
        ))
    }

    /// Mean over selected pixels of the squared channel-vector error.
    ///
    /// `pixels` are flat `y * w + x` indices; `None` selects every pixel.
    pub fn mean_squared_error(&mut self, pred: Var, target: &Tensor, pixels: Option<&[usize]>) -> Result<Var> {
        let (c, h, w) = self.value(pred).chw()?;
        if target.shape() != [c, h, w] {
            return Err(TensorError::ShapeMismatch {
                op: "mean_squared_error",
                dim: "target element count".into(),
                expected: c * h * w,
                actual: target.len(),
            });
        }
        let plane = h * w;
        if let Some(ps) = pixels {
            if ps.is_empty() {
                return Err(TensorError::Empty("mean_squared_error"));
            }
            if let Some(&bad) = ps.iter().find(|&&p| p >= plane) {
                return Err(TensorError::OutOfRange {
                    op: "mean_squared_error",
                    index: bad,
                    len: plane,
                });
            }
        } else if plane == 0 {
            return Err(TensorError::Empty("mean_squared_error"));
        }
        let x = self.value(pred).data();
        let t = target.data();
        let pixel_err = |p: usize| -> f64 {
            (0..c)
                .map(|ch| {
                    let d = x[ch * plane + p] - t[ch * plane + p];
                    d * d
                })
                .sum()
        };
        let (total, count) = match pixels {
            Some(ps) => (ps.iter().map(|&p| pixel_err(p)).sum::<f64>(), ps.len()),
            None => ((0..plane).map(pixel_err).sum::<f64>(), plane),
        };
        let rg = self.needs(&[pred]);
        Ok(self.push(
            Tensor::scalar(total / count as f64),
            Op::MeanSquaredError {
                pred,
                target: target.clone(),
                pixels: pixels.map(<[usize]>::to_vec),
            },
            rg,
        ))
    }

    /// Back-propagates from a scalar `loss`, adding into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(shape));
        }
        let mut adj: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::full(&shape, 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            if let Op::Leaf = self.nodes[i].op {
                match &mut self.grads[i] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            for (var, contribution) in self.local_grads(i, &g)? {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut adj[var.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` for each of its inputs.
    fn local_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let rg = |v: &Var| self.nodes[v.0].requires_grad;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let grads = conv2d_backward(
                    g,
                    self.value(*input),
                    self.value(*weight),
                    spec,
                    [rg(input), rg(weight), rg(bias)],
                )?;
                [(*input, grads.input), (*weight, grads.weight), (*bias, grads.bias)]
                    .into_iter()
                    .filter_map(|(v, t)| t.map(|t| (v, t)))
                    .collect()
            }
            Op::Relu(input) => {
                let x = self.value(*input);
                let data = x
                    .data
                    .iter()
                    .zip(&g.data)
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                vec![(
                    *input,
                    Tensor {
                        shape: x.shape.clone(),
                        data,
                    },
                )]
            }
            Op::MaxPool { input, argmax } => {
                vec![(*input, max_pool_backward(g, self.value(*input).shape(), argmax))]
            }
            Op::Upsample(input) => {
                let (_, h, w) = self.value(*input).chw()?;
                vec![(*input, upsample_backward(g, h, w))]
            }
            Op::ReflectPad { input, sides } => {
                let (_, h, w) = self.value(*input).chw()?;
                vec![(*input, reflect_pad_backward(g, h, w, *sides))]
            }
            Op::Crop { input, sides } => {
                let (c, h, w) = self.value(*input).chw()?;
                let (_, oh, ow) = g.chw()?;
                let mut out = Tensor::zeros(&[c, h, w]);
                let dst = out.data_mut();
                for ch in 0..c {
                    for y in 0..oh {
                        let d = (ch * h + y + sides[0]) * w + sides[2];
                        dst[d..d + ow].copy_from_slice(&g.data[(ch * oh + y) * ow..(ch * oh + y + 1) * ow]);
                    }
                }
                vec![(*input, out)]
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for p in parts {
                    let n = self.value(*p).len();
                    out.push((
                        *p,
                        Tensor {
                            shape: self.value(*p).shape.clone(),
                            data: g.data[offset..offset + n].to_vec(),
                        },
                    ));
                    offset += n;
                }
                out
            }
            Op::Slice { input, start } => {
                let (_, h, w) = self.value(*input).chw()?;
                let mut out = Tensor::zeros(self.value(*input).shape());
                let at = start * h * w;
                out.data_mut()[at..at + g.len()].copy_from_slice(&g.data);
                vec![(*input, out)]
            }
            Op::Gather { input, pixels } => {
                let (c, h, w) = self.value(*input).chw()?;
                let plane = h * w;
                let n = pixels.len();
                let mut out = Tensor::zeros(&[c, h, w]);
                let dst = out.data_mut();
                for ch in 0..c {
                    for (j, &p) in pixels.iter().enumerate() {
                        dst[ch * plane + p] += g.data[ch * n + j];
                    }
                }
                vec![(*input, out)]
            }
            Op::Sum(input) => {
                vec![(*input, Tensor::full(self.value(*input).shape(), g.data[0]))]
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let ga = Tensor {
                    shape: x.shape.clone(),
                    data: g.data.iter().zip(&y.data).map(|(p, q)| p * q).collect(),
                };
                let gb = Tensor {
                    shape: y.shape.clone(),
                    data: g.data.iter().zip(&x.data).map(|(p, q)| p * q).collect(),
                };
                vec![(*a, ga), (*b, gb)]
            }
            Op::BasisContract { coeffs, basis, scale } => {
                let (rk, h, w) = self.value(*coeffs).chw()?;
                let k = scale.len();
                let plane = h * w;
                let bs = basis.data();
                let mut out = vec![0.0; rk * plane];
                for r in 0..rk / k {
                    for (kk, s) in scale.iter().enumerate() {
                        let dst = &mut out[(r * k + kk) * plane..(r * k + kk + 1) * plane];
                        let src = &g.data[r * plane..(r + 1) * plane];
                        let b = &bs[kk * plane..(kk + 1) * plane];
                        for ((d, &gv), &bv) in dst.iter_mut().zip(src).zip(b) {
                            *d = gv * bv * s;
                        }
                    }
                }
                vec![(*coeffs, Tensor::new(vec![rk, h, w], out)?)]
            }
            Op::MeanSquaredError { pred, target, pixels } => {
                let x = self.value(*pred);
                let (c, h, w) = x.chw()?;
                let plane = h * w;
                let mut out = Tensor::zeros(&[c, h, w]);
                let dst = out.data_mut();
                let count = pixels.as_ref().map_or(plane, Vec::len) as f64;
                let scale = 2.0 * g.data[0] / count;
                let mut add = |p: usize| {
                    for ch in 0..c {
                        let at = ch * plane + p;
                        dst[at] += scale * (x.data[at] - target.data[at]);
                    }
                };
                match pixels {
                    Some(ps) => ps.iter().for_each(|&p| add(p)),
                    None => (0..plane).for_each(add),
                }
                vec![(*pred, out)]
            }
        })
    }
}
