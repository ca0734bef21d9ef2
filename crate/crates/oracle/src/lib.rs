//! Deliberately naive reference implementations.
//!
//! Everything here works on plain slices with explicit index arithmetic and
//! shares no code with `semstyle`, so it can serve as an independent check
//! of the optimized kernels.

/// Boundary handling for [`conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pad {
    None,
    Zero(usize),
    Reflect(usize),
}

/// Result of a naive spatial op: planar `c x h x w` data.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

fn sample(input: &[f64], h: usize, w: usize, ch: usize, y: i64, x: i64, pad: Pad) -> f64 {
    let (h, w) = (h as i64, w as i64);
    let (yy, xx) = match pad {
        Pad::Reflect(_) => {
            let mut yy = y;
            if yy < 0 {
                yy = -yy;
            }
            if yy >= h {
                yy = 2 * (h - 1) - yy;
            }
            let mut xx = x;
            if xx < 0 {
                xx = -xx;
            }
            if xx >= w {
                xx = 2 * (w - 1) - xx;
            }
            (yy, xx)
        }
        _ => {
            if y < 0 || x < 0 || y >= h || x >= w {
                return 0.0;
            }
            (y, x)
        }
    };
    input[(ch as i64 * h * w + yy * w + xx) as usize]
}

/// Direct convolution: one accumulation per (output channel, row, column,
/// input channel, kernel row, kernel column).
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    input: &[f64],
    (c, h, w): (usize, usize, usize),
    weights: &[f64],
    (oc, kh, kw): (usize, usize, usize),
    bias: &[f64],
    (sh, sw): (usize, usize),
    (dh, dw): (usize, usize),
    pad: Pad,
) -> Map {
    let p = match pad {
        Pad::None => 0,
        Pad::Zero(p) | Pad::Reflect(p) => p,
    };
    let oh = (h + 2 * p - dh * (kh - 1) - 1) / sh + 1;
    let ow = (w + 2 * p - dw * (kw - 1) - 1) / sw + 1;
    let mut out = vec![0.0; oc * oh * ow];
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o];
                for i in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let y = (oy * sh + ky * dh) as i64 - p as i64;
                            let x = (ox * sw + kx * dw) as i64 - p as i64;
                            let wv = weights[((o * c + i) * kh + ky) * kw + kx];
                            acc += wv * sample(input, h, w, i, y, x, pad);
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Map { c: oc, h: oh, w: ow, data: out }
}

/// Max pooling over a zero-padded input; padded cells count as `0.0`.
#[allow(clippy::too_many_arguments)]
pub fn max_pool(
    input: &[f64],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    (dh, dw): (usize, usize),
    (ph, pw): (usize, usize),
) -> Map {
    let oh = (h + 2 * ph - dh * (kh - 1) - 1) / sh + 1;
    let ow = (w + 2 * pw - dw * (kw - 1) - 1) / sw + 1;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let y = (oy * sh + ky * dh) as i64 - ph as i64;
                        let x = (ox * sw + kx * dw) as i64 - pw as i64;
                        let v = sample(input, h, w, ch, y, x, Pad::Zero(0));
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(ch * oh + oy) * ow + ox] = best;
            }
        }
    }
    Map { c, h: oh, w: ow, data: out }
}

/// `out[o, p] = bias[o] + sum_i weights[o, i] * input[i, p]`.
pub fn per_pixel_matmul(input: &[f64], c: usize, pixels: usize, weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let oc = bias.len();
    let mut out = vec![0.0; oc * pixels];
    for p in 0..pixels {
        for o in 0..oc {
            let mut acc = bias[o];
            for i in 0..c {
                acc += weights[o * c + i] * input[i * pixels + p];
            }
            out[o * pixels + p] = acc;
        }
    }
    out
}

/// Bilinear interpolation of a single `h x w` grid at fractional `(y, x)`.
pub fn bilinear_at(grid: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = if y0 + 1 < h { y0 + 1 } else { y0 };
    let x1 = if x0 + 1 < w { x0 + 1 } else { x0 };
    let ty = y - y0 as f64;
    let tx = x - x0 as f64;
    let v00 = grid[y0 * w + x0];
    let v01 = grid[y0 * w + x1];
    let v10 = grid[y1 * w + x0];
    let v11 = grid[y1 * w + x1];
    v00 * (1.0 - ty) * (1.0 - tx) + v01 * (1.0 - ty) * tx + v10 * ty * (1.0 - tx) + v11 * ty * tx
}

/// Align-corners resize of each channel by per-pixel scalar interpolation.
pub fn upsample_align_corners(input: &[f64], (c, h, w): (usize, usize, usize), th: usize, tw: usize) -> Map {
    let mut out = Vec::with_capacity(c * th * tw);
    for ch in 0..c {
        let grid = &input[ch * h * w..(ch + 1) * h * w];
        for y in 0..th {
            for x in 0..tw {
                let sy = if th > 1 { y as f64 * (h - 1) as f64 / (th - 1) as f64 } else { 0.0 };
                let sx = if tw > 1 { x as f64 * (w - 1) as f64 / (tw - 1) as f64 } else { 0.0 };
                out.push(bilinear_at(grid, h, w, sy, sx));
            }
        }
    }
    Map { c, h: th, w: tw, data: out }
}

/// sRGB (8-bit) to CIELab using the textbook CIE constants
/// (`0.008856`, `7.787`) and the published D65 white `(0.95047, 1, 1.08883)`.
pub fn srgb_to_lab(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    fn lin(v: u8) -> f64 {
        let c = v as f64 / 255.0;
        if c > 0.04045 {
            ((c + 0.055) / 1.055).powf(2.4)
        } else {
            c / 12.92
        }
    }
    fn f(t: f64) -> f64 {
        if t > 0.008856 {
            t.powf(1.0 / 3.0)
        } else {
            7.787 * t + 16.0 / 116.0
        }
    }
    let (rl, gl, bl) = (lin(r), lin(g), lin(b));
    let x = 0.4124 * rl + 0.3576 * gl + 0.1805 * bl;
    let y = 0.2126 * rl + 0.7152 * gl + 0.0722 * bl;
    let z = 0.0193 * rl + 0.1192 * gl + 0.9505 * bl;
    let (fx, fy, fz) = (f(x / 0.95047), f(y / 1.0), f(z / 1.08883));
    (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

/// One layer of a 1-D sliding-window chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
}

/// Receptive field size and jump (cumulative stride) by the standard
/// layer-by-layer recursion `r += (k_eff - 1) * j; j *= s`.
pub fn receptive_field(chain: &[Window]) -> (usize, usize) {
    let mut r = 1;
    let mut j = 1;
    for l in chain {
        let k_eff = l.dilation * (l.kernel - 1) + 1;
        r += (k_eff - 1) * j;
        j *= l.stride;
    }
    (r, j)
}

/// Brute-force: the set of input positions one output position depends on,
/// found by walking every tap of every layer backwards. Padding positions
/// are kept so the result measures the full window footprint.
pub fn dependency_span(chain: &[Window], out_index: i64) -> (i64, i64) {
    let mut positions = std::collections::BTreeSet::new();
    positions.insert(out_index);
    for l in chain.iter().rev() {
        let mut prev = std::collections::BTreeSet::new();
        for &p in &positions {
            for k in 0..l.kernel {
                prev.insert(p * l.stride as i64 + (k * l.dilation) as i64 - l.pad as i64);
            }
        }
        positions = prev;
    }
    (*positions.first().unwrap(), *positions.last().unwrap())
}

/// Spatial extent after each layer of the chain for an input of `len`.
pub fn shape_trace(chain: &[Window], len: usize) -> Vec<usize> {
    let mut sizes = vec![len];
    let mut n = len as i64;
    for l in chain {
        let k_eff = (l.dilation * (l.kernel - 1) + 1) as i64;
        n = (n + 2 * l.pad as i64 - k_eff).div_euclid(l.stride as i64) + 1;
        sizes.push(n.max(0) as usize);
    }
    sizes
}
