//! Spatial resampling kernels: reflection padding, cropping and
//! align-corners bilinear interpolation.

use super::{Result, Tensor, TensorError};

/// Maps a possibly out-of-range coordinate onto `0..n` by mirroring about the
/// edge pixels without repeating them (`-1 -> 1`, `n -> n - 2`).
///
/// Valid for `-(n - 1) <= i <= 2 * (n - 1)`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    let last = n as isize - 1;
    let r = if i < 0 {
        -i
    } else if i > last {
        2 * last - i
    } else {
        i
    };
    debug_assert!((0..=last).contains(&r), "reflect_index({i}, {n}) out of range");
    r as usize
}

/// Per-side padding amounts: `[top, bottom, left, right]`.
pub(crate) type Sides = [usize; 4];

fn check_reflect(op: &'static str, h: usize, w: usize, pads: Sides) -> Result<()> {
    for (amount, extent) in [(pads[0], h), (pads[1], h), (pads[2], w), (pads[3], w)] {
        if amount > 0 && amount >= extent {
            return Err(TensorError::ReflectTooLarge { op, amount, extent });
        }
    }
    Ok(())
}

pub(crate) fn reflect_pad_forward(input: &Tensor, pads: Sides) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    check_reflect("reflect_pad", h, w, pads)?;
    let oh = h + pads[0] + pads[1];
    let ow = w + pads[2] + pads[3];
    let src = input.data();
    let mut out = vec![0.0; c * oh * ow];
    let cols: Vec<usize> = (0..ow)
        .map(|x| reflect_index(x as isize - pads[2] as isize, w))
        .collect();
    for ch in 0..c {
        for y in 0..oh {
            let sy = reflect_index(y as isize - pads[0] as isize, h);
            let srow = &src[(ch * h + sy) * w..(ch * h + sy + 1) * w];
            let drow = &mut out[(ch * oh + y) * ow..(ch * oh + y + 1) * ow];
            for (d, &sx) in drow.iter_mut().zip(&cols) {
                *d = srow[sx];
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Folds a gradient over the padded map back onto the source map.
pub(crate) fn reflect_pad_backward(grad: &Tensor, h: usize, w: usize, pads: Sides) -> Tensor {
    let (c, oh, ow) = grad.chw().expect("padded gradient is rank 3");
    let g = grad.data();
    let mut out = vec![0.0; c * h * w];
    let cols: Vec<usize> = (0..ow)
        .map(|x| reflect_index(x as isize - pads[2] as isize, w))
        .collect();
    for ch in 0..c {
        for y in 0..oh {
            let sy = reflect_index(y as isize - pads[0] as isize, h);
            let grow = &g[(ch * oh + y) * ow..(ch * oh + y + 1) * ow];
            let base = (ch * h + sy) * w;
            for (&gv, &sx) in grow.iter().zip(&cols) {
                out[base + sx] += gv;
            }
        }
    }
    Tensor { shape: vec![c, h, w], data: out }
}

pub(crate) fn zero_pad(input: &Tensor, pad_h: usize, pad_w: usize) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let oh = h + 2 * pad_h;
    let ow = w + 2 * pad_w;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..h {
            let s = (ch * h + y) * w;
            let d = (ch * oh + y + pad_h) * ow + pad_w;
            out[d..d + w].copy_from_slice(&input.data()[s..s + w]);
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Removes `[top, bottom, left, right]` rows/columns from a rank-3 tensor.
pub(crate) fn crop(input: &Tensor, sides: Sides) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    if sides[0] + sides[1] >= h || sides[2] + sides[3] >= w {
        return Err(TensorError::InvalidSpec {
            op: "crop",
            what: format!("crop {sides:?} exceeds {h}x{w}"),
        });
    }
    let oh = h - sides[0] - sides[1];
    let ow = w - sides[2] - sides[3];
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            let s = (ch * h + y + sides[0]) * w + sides[2];
            out.extend_from_slice(&input.data()[s..s + ow]);
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Crops `amount` pixels from every side of a rank-3 tensor.
pub fn center_crop(input: &Tensor, amount: usize) -> Result<Tensor> {
    crop(input, [amount; 4])
}

/// Source coordinate and blend weight for align-corners interpolation.
fn align_corners_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    (0..dst_len)
        .map(|i| {
            if dst_len == 1 || src_len == 1 {
                return (0, 0, 0.0);
            }
            let pos = (i * (src_len - 1)) as f64 / (dst_len - 1) as f64;
            let lo = (pos.floor() as usize).min(src_len - 1);
            let hi = (lo + 1).min(src_len - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

pub(crate) fn upsample_check(input: &Tensor, th: usize, tw: usize) -> Result<(usize, usize, usize)> {
    let (c, h, w) = input.chw()?;
    if th < h || tw < w {
        return Err(TensorError::UpsampleTarget { h, w, target_h: th, target_w: tw });
    }
    Ok((c, h, w))
}

pub(crate) fn upsample_forward(input: &Tensor, th: usize, tw: usize) -> Result<Tensor> {
    let (c, h, w) = upsample_check(input, th, tw)?;
    let ys = align_corners_taps(h, th);
    let xs = align_corners_taps(w, tw);
    let src = input.data();
    let mut out = vec![0.0; c * th * tw];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
            let r0 = &plane[y0 * w..(y0 + 1) * w];
            let r1 = &plane[y1 * w..(y1 + 1) * w];
            let drow = &mut out[(ch * th + y) * tw..(ch * th + y + 1) * tw];
            for (d, &(x0, x1, fx)) in drow.iter_mut().zip(&xs) {
                let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                let bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                *d = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Tensor::new(vec![c, th, tw], out)
}

pub(crate) fn upsample_backward(grad: &Tensor, h: usize, w: usize) -> Tensor {
    let (c, th, tw) = grad.chw().expect("upsample gradient is rank 3");
    let ys = align_corners_taps(h, th);
    let xs = align_corners_taps(w, tw);
    let g = grad.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
            let grow = &g[(ch * th + y) * tw..(ch * th + y + 1) * tw];
            for (&gv, &(x0, x1, fx)) in grow.iter().zip(&xs) {
                let top = gv * (1.0 - fy);
                let bot = gv * fy;
                plane[y0 * w + x0] += top * (1.0 - fx);
                plane[y0 * w + x1] += top * fx;
                plane[y1 * w + x0] += bot * (1.0 - fx);
                plane[y1 * w + x1] += bot * fx;
            }
        }
    }
    Tensor { shape: vec![c, h, w], data: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_index_mirrors_without_repeat() {
        let got: Vec<usize> = (-2..5).map(|i| reflect_index(i, 3)).collect();
        assert_eq!(got, vec![2, 1, 0, 1, 2, 1, 0]);
    }

    #[test]
    fn reflect_row() {
        let t = Tensor::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let p = reflect_pad_forward(&t, [0, 0, 1, 1]).unwrap();
        assert_eq!(p.data(), &[2.0, 1.0, 2.0, 3.0, 2.0]);
    }

    #[test]
    fn reflect_rejects_amount_at_extent() {
        let t = Tensor::zeros(&[1, 3, 5]);
        assert!(matches!(
            reflect_pad_forward(&t, [3, 3, 1, 1]),
            Err(TensorError::ReflectTooLarge { amount: 3, extent: 3, .. })
        ));
        assert!(reflect_pad_forward(&t, [2, 2, 4, 4]).is_ok());
    }

    #[test]
    fn upsample_taps_hit_corners() {
        let taps = align_corners_taps(2, 3);
        assert_eq!(taps[0], (0, 1, 0.0));
        assert_eq!(taps[1], (0, 1, 0.5));
        assert_eq!(taps[2], (1, 1, 0.0));
    }

    #[test]
    fn crop_then_pad_roundtrip() {
        let t = Tensor::from_fn(&[2, 4, 5], |i| i as f64);
        let p = zero_pad(&t, 2, 1).unwrap();
        assert_eq!(p.shape(), &[2, 8, 7]);
        assert_eq!(crop(&p, [2, 2, 1, 1]).unwrap(), t);
    }
}
