//! CIELab color math, the quadratic color basis and per-pixel color
//! transforms.
//!
//! Conversions use the IEC 61966-2-1 sRGB transfer curve and a D65 white
//! point derived from the sRGB primaries matrix, so that neutral sRGB
//! colors land exactly on the `a = b = 0` axis.

use std::path::Path;
use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A CIELab color (D65).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.l, self.a, self.b]
    }

    pub fn distance(self, other: Lab) -> f64 {
        let (dl, da, db) = (self.l - other.l, self.a - other.a, self.b - other.b);
        (dl * dl + da * da + db * db).sqrt()
    }
}

impl From<[f64; 3]> for Lab {
    fn from(c: [f64; 3]) -> Self {
        Lab::new(c[0], c[1], c[2])
    }
}

/// 8-bit sRGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                what: "RgbImage pixel count",
                expected: (width, height),
                actual: (pixels.len(), 1),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Reads a PNG; any alpha channel is discarded.
    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    /// Writes an 8-bit RGB PNG without alpha.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("pixel count checked at construction");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// CIELab image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    pixels: Vec<Lab>,
}

impl LabImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Lab>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                what: "LabImage pixel count",
                expected: (width, height),
                actual: (pixels.len(), 1),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Lab] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Lab {
        self.pixels[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(Lab) -> Lab) -> LabImage {
        LabImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&c| f(c)).collect(),
        }
    }

    /// Planar `3 x H x W` tensor (L, a, b planes).
    pub fn to_tensor(&self) -> Tensor {
        let n = self.pixels.len();
        let mut data = vec![0.0; 3 * n];
        for (i, c) in self.pixels.iter().enumerate() {
            data[i] = c.l;
            data[n + i] = c.a;
            data[2 * n + i] = c.b;
        }
        Tensor::new(vec![3, self.height, self.width], data).expect("planar layout")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.chw()?;
        if c != 3 {
            return Err(Error::DimensionMismatch {
                what: "Lab tensor channels",
                expected: (3, 1),
                actual: (c, 1),
            });
        }
        let n = h * w;
        let d = t.data();
        let pixels = (0..n).map(|i| Lab::new(d[i], d[n + i], d[2 * n + i])).collect();
        Self::new(w, h, pixels)
    }

    /// True when every pixel lies in the Lab envelope of the 8-bit sRGB
    /// gamut (`L` in [0, 100], `a` in [-87, 99], `b` in [-108, 95]).
    pub fn within_srgb_envelope(&self) -> bool {
        self.pixels.iter().all(|c| {
            (0.0..=100.0).contains(&c.l) && (-87.0..=99.0).contains(&c.a) && (-108.0..=95.0).contains(&c.b)
        })
    }
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

struct Tables {
    white: [f64; 3],
    xyz_to_srgb: [[f64; 3]; 3],
    decode: [f64; 256],
}

static TABLES: LazyLock<Tables> = LazyLock::new(|| {
    let m = SRGB_TO_XYZ;
    let white = [0, 1, 2].map(|r| m[r][0] + m[r][1] + m[r][2]);
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let cof = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let inv = [
        [cof(1, 1, 2, 2), -cof(0, 1, 2, 2), cof(0, 1, 1, 2)],
        [-cof(1, 0, 2, 2), cof(0, 0, 2, 2), -cof(0, 0, 1, 2)],
        [cof(1, 0, 2, 1), -cof(0, 0, 2, 1), cof(0, 0, 1, 1)],
    ]
    .map(|row| row.map(|v| v / det));
    let decode = std::array::from_fn(|i| srgb_decode(i as f64 / 255.0));
    Tables {
        white,
        xyz_to_srgb: inv,
        decode,
    }
});

fn srgb_decode(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let cube = f * f * f;
    if cube > EPSILON {
        cube
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

/// Converts one 8-bit sRGB color to CIELab.
pub fn srgb_pixel_to_lab(rgb: [u8; 3]) -> Lab {
    let t = &*TABLES;
    let lin = rgb.map(|c| t.decode[c as usize]);
    let xyz = SRGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    let [fx, fy, fz] = [0, 1, 2].map(|i| lab_f(xyz[i] / t.white[i]));
    let y = xyz[1] / t.white[1];
    let l = if y > EPSILON { 116.0 * fy - 16.0 } else { KAPPA * y };
    Lab::new(l, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

/// Converts one CIELab color to gamma-encoded sRGB in `[0, 1]` per channel,
/// without clamping.
pub fn lab_to_srgb_unclamped(c: Lab) -> [f64; 3] {
    let t = &*TABLES;
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    let y = if c.l > KAPPA * EPSILON { fy * fy * fy } else { c.l / KAPPA };
    let xyz = [lab_f_inv(fx) * t.white[0], y * t.white[1], lab_f_inv(fz) * t.white[2]];
    t.xyz_to_srgb
        .map(|row| srgb_encode(row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2]))
}

/// Converts one CIELab color to 8-bit sRGB, rounding and clamping
/// out-of-gamut channels.
pub fn lab_pixel_to_srgb(c: Lab) -> [u8; 3] {
    lab_to_srgb_unclamped(c).map(|v| {
        let v = (v * 255.0).round();
        if v.is_nan() {
            0
        } else {
            v.clamp(0.0, 255.0) as u8
        }
    })
}

pub fn srgb_to_lab(img: &RgbImage) -> LabImage {
    LabImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| srgb_pixel_to_lab(p)).collect(),
    }
}

pub fn lab_to_srgb(img: &LabImage) -> RgbImage {
    RgbImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&c| lab_pixel_to_srgb(c)).collect(),
    }
}

/// Number of entries in the quadratic color basis.
pub const BASIS_LEN: usize = 10;

/// `[L², a², b², La, Lb, ab, L, a, b, 1]` for one color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorBasis(pub [f64; BASIS_LEN]);

pub fn quadratic_basis(c: Lab) -> ColorBasis {
    let Lab { l, a, b } = c;
    ColorBasis([l * l, a * a, b * b, l * a, l * b, a * b, l, a, b, 1.0])
}

/// A 3 x 10 matrix mapping the quadratic basis of a color to a new color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorTransform {
    pub m: [[f64; BASIS_LEN]; 3],
}

impl ColorTransform {
    pub fn zero() -> Self {
        Self {
            m: [[0.0; BASIS_LEN]; 3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// Row-major flattening (`row * 10 + column`).
    pub fn to_flat(&self) -> [f64; 3 * BASIS_LEN] {
        std::array::from_fn(|i| self.m[i / BASIS_LEN][i % BASIS_LEN])
    }

    pub fn from_flat(v: &[f64]) -> Self {
        assert_eq!(v.len(), 3 * BASIS_LEN, "a color transform has 30 entries");
        Self {
            m: std::array::from_fn(|r| std::array::from_fn(|k| v[r * BASIS_LEN + k])),
        }
    }

    pub fn max_abs_diff(&self, other: &ColorTransform) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Applies the transform to a color through its quadratic basis.
    pub fn apply_to(&self, c: Lab) -> Lab {
        apply_transform(self, &quadratic_basis(c))
    }
}

/// The transform that returns `(L, a, b)` unchanged.
pub fn identity_transform() -> ColorTransform {
    let mut t = ColorTransform::zero();
    t.m[0][6] = 1.0;
    t.m[1][7] = 1.0;
    t.m[2][8] = 1.0;
    t
}

pub fn apply_transform(t: &ColorTransform, basis: &ColorBasis) -> Lab {
    let row = |r: usize| {
        let mut acc = 0.0;
        for (m, v) in t.m[r].iter().zip(&basis.0) {
            acc += m * v;
        }
        acc
    };
    Lab::new(row(0), row(1), row(2))
}

/// Mean over pixels of the Euclidean Lab distance.
pub fn mean_l2(a: &LabImage, b: &LabImage) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            what: "mean_l2",
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    if a.pixels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = a.pixels.iter().zip(&b.pixels).map(|(p, q)| p.distance(*q)).sum();
    Ok(total / a.pixels.len() as f64)
}
