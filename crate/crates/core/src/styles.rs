//! Synthetic style datasets with known ground truth.
//!
//! Images are seeded compositions of a textured elliptical foreground over a
//! gradient-and-noise background. A style maps every input color through a
//! planted quadratic transform, either one for the whole image (global) or
//! one per region of the generator's mask (local). Targets stay in
//! unquantized Lab; writing them to PNG rounds to 8 bits, which leaves a
//! small quantization floor on any fit made from the files.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::color::{
    identity_transform, lab_to_srgb, lab_to_srgb_unclamped, mean_l2, srgb_to_lab, ColorTransform, LabImage, RgbImage,
};
use crate::error::{Error, Result};
use crate::training::{write_split_names, DatasetPaths, StylePair};

/// Smallest side accepted by [`render_synthetic_image`].
pub const MIN_RENDER_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Background,
    Foreground,
}

/// Binary foreground mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    pub width: usize,
    pub height: usize,
    pub foreground: Vec<bool>,
}

impl RegionMask {
    pub fn region(&self, index: usize) -> Region {
        if self.foreground[index] {
            Region::Foreground
        } else {
            Region::Background
        }
    }

    pub fn coverage(&self) -> f64 {
        self.foreground.iter().filter(|&&f| f).count() as f64 / self.foreground.len() as f64
    }

    /// White foreground on black.
    pub fn to_image(&self) -> RgbImage {
        let px = self.foreground.iter().map(|&f| if f { [255; 3] } else { [0; 3] }).collect();
        RgbImage::new(self.width, self.height, px).expect("mask dims")
    }

    pub fn from_image(img: &RgbImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            foreground: img.pixels().iter().map(|p| p[0] >= 128).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StyleKind {
    Global(ColorTransform),
    /// One transform per region; together the regions cover every pixel.
    Local(Vec<(Region, ColorTransform)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStyle {
    pub kind: StyleKind,
    pub seed: u64,
}

impl SyntheticStyle {
    pub fn identity(seed: u64) -> Self {
        Self {
            kind: StyleKind::Global(identity_transform()),
            seed,
        }
    }

    fn transform_for(&self, region: Region) -> Result<&ColorTransform> {
        match &self.kind {
            StyleKind::Global(t) => Ok(t),
            StyleKind::Local(list) => list
                .iter()
                .find(|(r, _)| *r == region)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Config(format!("local style has no transform for {region:?}"))),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            StyleKind::Global(_) => "global",
            StyleKind::Local(_) => "local",
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    rng.gen_range(-bound..=bound)
}

/// Identity plus uniform noise: `±linear` on the L, a, b columns,
/// `±quadratic` on the second-order columns and `±constant` on the offset.
fn perturbed_identity(rng: &mut ChaCha8Rng, quadratic: f64, linear: f64, constant: f64) -> ColorTransform {
    let mut t = identity_transform();
    for row in &mut t.m {
        for (k, v) in row.iter_mut().enumerate() {
            *v += match k {
                0..=5 => uniform(rng, quadratic),
                6..=8 => uniform(rng, linear),
                _ => uniform(rng, constant),
            };
        }
    }
    t
}

fn probe_pairs(seed: u64) -> Vec<(RgbImage, RegionMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_9b0b35);
    (0..8)
        .map(|_| render_synthetic_image(rng.gen(), 32, 32).expect("probe size"))
        .collect()
}

/// Mean input-vs-target distance over the probes, or `None` when more than
/// one target pixel in a thousand falls outside the sRGB gamut.
fn probe_baseline(style: &SyntheticStyle, probes: &[(RgbImage, RegionMask)]) -> Option<f64> {
    let (mut total, mut outside, mut count) = (0.0, 0usize, 0usize);
    for (img, mask) in probes {
        let pair = apply_style(style, img, mask).expect("probe dims");
        outside += pair
            .target
            .pixels()
            .iter()
            .filter(|&&c| !lab_to_srgb_unclamped(c).iter().all(|v| (0.0..=1.0).contains(v)))
            .count();
        count += pair.target.pixels().len();
        total += mean_l2(&pair.input, &pair.target).expect("same dims");
    }
    (outside * 1000 <= count).then(|| total / probes.len() as f64)
}

/// Probe baseline that planted global styles are scaled to.
const GLOBAL_BASELINE: f64 = 15.5;

/// Random global style: identity plus perturbations of at most 0.15 on the
/// linear block, 0.002 on quadratic terms and 5 on the constant. A drawn
/// perturbation is shrunk until the input-vs-target distance of probe images
/// is about 15.5 Lab units; draws that cannot reach it while staying inside
/// the sRGB gamut are discarded.
pub fn planted_global_style(seed: u64) -> SyntheticStyle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes = probe_pairs(seed);
    let id = identity_transform().to_flat();
    let scaled = |delta: &[f64; 30], s: f64| SyntheticStyle {
        kind: StyleKind::Global(ColorTransform::from_flat(
            &std::array::from_fn::<f64, 30, _>(|i| id[i] + s * delta[i]),
        )),
        seed,
    };
    loop {
        let draw = perturbed_identity(&mut rng, 0.002, 0.15, 5.0).to_flat();
        let delta: [f64; 30] = std::array::from_fn(|i| draw[i] - id[i]);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            match probe_baseline(&scaled(&delta, mid), &probes) {
                Some(b) if b < GLOBAL_BASELINE => lo = mid,
                _ => hi = mid,
            }
        }
        let style = scaled(&delta, lo);
        if probe_baseline(&style, &probes).is_some_and(|b| b > GLOBAL_BASELINE - 0.1) {
            return style;
        }
    }
}

/// Random two-region style: the foreground gains chroma and brightness, the
/// background loses chroma, each with a small random perturbation.
pub fn planted_local_style(seed: u64) -> SyntheticStyle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes = probe_pairs(seed);
    loop {
        let mut fg = perturbed_identity(&mut rng, 0.0005, 0.05, 2.0);
        fg.m[0][9] += 6.0;
        fg.m[1][7] += 0.35;
        fg.m[2][8] += 0.35;
        let mut bg = perturbed_identity(&mut rng, 0.0005, 0.05, 2.0);
        bg.m[0][9] -= 4.0;
        bg.m[1][7] -= 0.4;
        bg.m[2][8] -= 0.4;
        let style = SyntheticStyle {
            kind: StyleKind::Local(vec![(Region::Background, bg), (Region::Foreground, fg)]),
            seed,
        };
        if probe_baseline(&style, &probes).is_some() {
            return style;
        }
    }
}

/// Draws one synthetic photo and its foreground mask.
///
/// The background is a smooth two-color gradient with a slow wave and light
/// noise. The foreground is a rotated ellipse carrying fine stripes (period of
/// 3 to 6 pixels), so the regions differ in texture while their colors are
/// drawn independently.
pub fn render_synthetic_image(seed: u64, width: usize, height: usize) -> Result<(RgbImage, RegionMask)> {
    if width < MIN_RENDER_SIDE || height < MIN_RENDER_SIDE {
        return Err(Error::ImageTooSmall {
            width,
            height,
            min: MIN_RENDER_SIDE,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let color = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        let gray = rng.gen_range(70.0..185.0);
        std::array::from_fn(|_| gray + rng.gen_range(-40.0..40.0))
    };

    let bg0 = color(&mut rng);
    let bg1 = color(&mut rng);
    let angle = rng.gen_range(0.0..2.0 * PI);
    let (gx, gy) = (angle.cos(), angle.sin());
    let wave_freq = rng.gen_range(1.0..3.0) * 2.0 * PI / w.max(h);
    let wave_phase = rng.gen_range(0.0..2.0 * PI);
    let wave_amp: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-20.0..20.0));

    let fg_base = color(&mut rng);
    let stripe_amp = rng.gen_range(15.0..30.0) * if rng.gen() { 1.0 } else { -1.0 };
    let fg_accent: [f64; 3] = std::array::from_fn(|_| stripe_amp + rng.gen_range(-15.0..15.0));
    let area = rng.gen_range(0.15..0.45) * w * h;
    let aspect = rng.gen_range(0.6..1.6);
    let rx = (area * aspect / PI).sqrt();
    let ry = area / (PI * rx);
    let rot = rng.gen_range(0.0..PI);
    let (rc, rs) = (rot.cos(), rot.sin());
    let place = |rng: &mut ChaCha8Rng, extent: f64, r: f64| {
        let margin = (0.6 * r).min(extent / 2.0);
        rng.gen_range(margin..=extent - margin)
    };
    let cx = place(&mut rng, w, rx.max(ry));
    let cy = place(&mut rng, h, rx.max(ry));
    let stripe_freq = rng.gen_range(1.0..2.1);
    let stripe_dir = rng.gen_range(0.0..PI);
    let (sx, sy) = (stripe_dir.cos(), stripe_dir.sin());

    let extent = (gx.abs() * w + gy.abs() * h).max(1.0);
    let offset = gx.min(0.0) * w + gy.min(0.0) * h;
    let mut pixels = Vec::with_capacity(width * height);
    let mut foreground = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
            let (dx, dy) = (xf - cx, yf - cy);
            let u = (dx * rc + dy * rs) / rx;
            let v = (-dx * rs + dy * rc) / ry;
            let inside = u * u + v * v <= 1.0;
            let rgb: [f64; 3] = if inside {
                let s = (stripe_freq * (xf * sx + yf * sy)).sin();
                std::array::from_fn(|c| fg_base[c] + fg_accent[c] * s + rng.gen_range(-10.0..10.0))
            } else {
                let t = (xf * gx + yf * gy - offset) / extent;
                let wave = (wave_freq * (xf * gy - yf * gx) + wave_phase).sin();
                std::array::from_fn(|c| bg0[c] + (bg1[c] - bg0[c]) * t + wave_amp[c] * wave + rng.gen_range(-4.0..4.0))
            };
            pixels.push(rgb.map(|v| v.round().clamp(30.0, 225.0) as u8));
            foreground.push(inside);
        }
    }
    Ok((
        RgbImage::new(width, height, pixels)?,
        RegionMask {
            width,
            height,
            foreground,
        },
    ))
}

/// Styles one image, returning the unquantized Lab pair.
pub fn apply_style(style: &SyntheticStyle, img: &RgbImage, mask: &RegionMask) -> Result<StylePair> {
    if (mask.width, mask.height) != (img.width(), img.height()) {
        return Err(Error::DimensionMismatch {
            what: "region mask",
            expected: (img.width(), img.height()),
            actual: (mask.width, mask.height),
        });
    }
    let input = srgb_to_lab(img);
    let bg = style.transform_for(Region::Background)?;
    let fg = style.transform_for(Region::Foreground)?;
    let styled = input
        .pixels()
        .iter()
        .zip(&mask.foreground)
        .map(|(&c, &f)| if f { fg.apply_to(c) } else { bg.apply_to(c) })
        .collect();
    let target = LabImage::new(img.width(), img.height(), styled)?;
    StylePair::new(input, target, None)
}

/// A generated image with its mask and styled pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub name: String,
    pub image: RgbImage,
    pub mask: RegionMask,
    pub pair: StylePair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub style: SyntheticStyle,
    pub train: Vec<SyntheticSample>,
    pub test: Vec<SyntheticSample>,
}

impl SyntheticDataset {
    pub fn train_pairs(&self) -> Vec<StylePair> {
        self.train.iter().map(|s| s.pair.clone()).collect()
    }

    pub fn test_pairs(&self) -> Vec<StylePair> {
        self.test.iter().map(|s| s.pair.clone()).collect()
    }

    /// Writes the dataset layout read by [`crate::training::load_split`],
    /// plus region masks. Targets are quantized to 8-bit sRGB.
    pub fn save(&self, root: &Path) -> Result<()> {
        let paths = DatasetPaths::new(root);
        for dir in ["input", "target", "mask"] {
            let d = root.join(dir);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        for s in self.train.iter().chain(&self.test) {
            s.image.write_png(paths.input(&s.name))?;
            lab_to_srgb(&s.pair.target).write_png(paths.target(&s.name))?;
            s.mask.to_image().write_png(paths.mask(&s.name))?;
        }
        let names = |v: &[SyntheticSample]| v.iter().map(|s| s.name.clone()).collect::<Vec<_>>();
        write_split_names(&paths.split("train"), &names(&self.train))?;
        write_split_names(&paths.split("test"), &names(&self.test))
    }
}

/// `n_train + n_test` distinct images styled identically. Names are
/// `img000`, `img001`, ...; the first `n_train` form the training split.
pub fn make_dataset(style: &SyntheticStyle, n_train: usize, n_test: usize, width: usize, height: usize) -> Result<SyntheticDataset> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::Config("both splits need at least one image".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(style.seed.wrapping_add(1));
    let seeds: Vec<u64> = (0..n_train + n_test).map(|_| rng.gen()).collect();
    let mut samples = seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| {
            let (image, mask) = render_synthetic_image(seed, width, height)?;
            let name = format!("img{i:03}");
            let mut pair = apply_style(style, &image, &mask)?;
            pair.name = Some(name.clone());
            Ok(SyntheticSample { name, image, mask, pair })
        })
        .collect::<Result<Vec<_>>>()?;
    let test = samples.split_off(n_train);
    Ok(SyntheticDataset {
        style: style.clone(),
        train: samples,
        test,
    })
}
