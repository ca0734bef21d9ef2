//! The stylization network.
//!
//! A small fully convolutional backbone extracts context features from the
//! reflection-padded image at two scales (original and 2x upsampled, shared
//! weights). Both context maps are interpolated back to the image size and
//! concatenated with the pixel's own Lab color. Three 1x1 convolutions map
//! that per-pixel feature to 30 numbers, read as a 3x10 color transform,
//! which the enhancement layer multiplies with the pixel's quadratic color
//! basis.
//!
//! The backbone keeps an output stride of 8: its first three stages pool with
//! stride 2, the last two pool with stride 1, and dilation (2 after the
//! fourth pooling layer, 4 after the fifth) keeps the receptive field equal
//! to that of the all-stride-2 chain.

mod checkpoint;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::color::{identity_transform, quadratic_basis, ColorTransform, Lab, LabImage, BASIS_LEN};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, PoolSpec, Tape, Tensor, Var};

/// Number of head output channels: one 3x10 transform per pixel.
pub const TRANSFORM_CHANNELS: usize = 3 * BASIS_LEN;

/// Smallest supported image side, in pixels.
pub const MIN_SIDE: usize = 8;

/// Fixed per-column factors turning head outputs into transform entries.
///
/// The head predicts transforms in units where Lab is divided by 100, so one
/// unit of head output moves the result by a comparable amount whichever
/// basis column it multiplies. The identity transform is unchanged by this
/// scaling because the linear columns have factor 1.
pub const TRANSFORM_SCALE: [f64; BASIS_LEN] = [1e-2, 1e-2, 1e-2, 1e-2, 1e-2, 1e-2, 1.0, 1.0, 1.0, 100.0];

/// Widths and seed of the network.
///
/// Defaults: stages `16, 16, 32, 32, 32`, context `64`, head `32, 32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneConfig {
    pub stage_channels: [usize; 5],
    pub context_channels: usize,
    pub head_hidden: [usize; 2],
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            stage_channels: [16, 16, 32, 32, 32],
            context_channels: 64,
            head_hidden: [32, 32],
            seed: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = self
            .stage_channels
            .iter()
            .chain(std::iter::once(&self.context_channels))
            .chain(&self.head_hidden);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("all network widths must be at least 1: {self:?}")));
        }
        Ok(())
    }

    /// Channels of the concatenated per-pixel feature fed to the head.
    pub fn head_input_channels(&self) -> usize {
        3 + 2 * self.context_channels
    }

    /// Shapes of every parameter tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for layer in backbone_layers(self, Layout::Dilated) {
            if let Layer::Conv(spec) = layer {
                shapes.push(spec.weight_shape().to_vec());
                shapes.push(vec![spec.out_channels]);
            }
        }
        for spec in self.head_specs() {
            shapes.push(spec.weight_shape().to_vec());
            shapes.push(vec![spec.out_channels]);
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    fn head_specs(&self) -> [ConvSpec; 3] {
        let [h1, h2] = self.head_hidden;
        [
            ConvSpec::new(self.head_input_channels(), h1, 1),
            ConvSpec::new(h1, h2, 1),
            ConvSpec::new(h2, TRANSFORM_CHANNELS, 1),
        ]
    }
}

/// One layer of the backbone chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Unpadded convolution followed by ReLU.
    Conv(ConvSpec),
    /// Max pooling with symmetric zero padding.
    Pool(PoolSpec),
}

impl Layer {
    fn kernel(&self) -> usize {
        match self {
            Layer::Conv(s) => s.kernel.0,
            Layer::Pool(p) => p.kernel.0,
        }
    }

    fn stride(&self) -> usize {
        match self {
            Layer::Conv(s) => s.stride.0,
            Layer::Pool(p) => p.stride.0,
        }
    }

    fn dilation(&self) -> usize {
        match self {
            Layer::Conv(s) => s.dilation.0,
            Layer::Pool(p) => p.dilation.0,
        }
    }

    fn pad(&self) -> usize {
        match self {
            Layer::Conv(_) => 0,
            Layer::Pool(p) => p.padding.0,
        }
    }

    fn extent(&self) -> usize {
        self.dilation() * (self.kernel() - 1) + 1
    }
}

/// Which variant of the chain to describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// The network as built: stride-1 pooling in stages 4-5, dilated tail.
    Dilated,
    /// The undilated reference where every stage pools with stride 2.
    Strided,
}

/// The backbone as a flat layer list.
pub fn backbone_layers(config: &BackboneConfig, layout: Layout) -> Vec<Layer> {
    let c = config.stage_channels;
    let halving = PoolSpec::new(3, 2).with_padding(1);
    let (pool4, conv5_dilation, pool5, context_dilation) = match layout {
        Layout::Dilated => (
            PoolSpec::new(3, 1).with_padding(1),
            2,
            PoolSpec::new(3, 1).with_dilation(2).with_padding(2),
            4,
        ),
        Layout::Strided => (halving, 1, halving, 1),
    };
    vec![
        Layer::Conv(ConvSpec::new(3, c[0], 3)),
        Layer::Pool(halving),
        Layer::Conv(ConvSpec::new(c[0], c[1], 3)),
        Layer::Pool(halving),
        Layer::Conv(ConvSpec::new(c[1], c[2], 3)),
        Layer::Pool(halving),
        Layer::Conv(ConvSpec::new(c[2], c[3], 3)),
        Layer::Pool(pool4),
        Layer::Conv(ConvSpec::new(c[3], c[4], 3).with_dilation(conv5_dilation)),
        Layer::Pool(pool5),
        Layer::Conv(ConvSpec::new(c[4], config.context_channels, 3).with_dilation(context_dilation)),
    ]
}

/// Cumulative stride of the chain.
pub fn output_stride(layers: &[Layer]) -> usize {
    layers.iter().map(Layer::stride).product()
}

/// Spatial extent of the chain's output for an input of `len`, or `None`
/// when some window does not fit.
pub fn output_extent(layers: &[Layer], len: usize) -> Option<usize> {
    layers.iter().try_fold(len, |n, l| {
        let padded = n + 2 * l.pad();
        (padded >= l.extent()).then(|| (padded - l.extent()) / l.stride() + 1)
    })
}

/// Smallest input extent producing `out` cells.
pub fn input_extent(layers: &[Layer], out: usize) -> usize {
    layers.iter().rev().fold(out, |n, l| {
        ((n - 1) * l.stride() + l.extent()).saturating_sub(2 * l.pad()).max(1)
    })
}

/// Reflection padding `(before, after)` applied along one image axis of
/// length `len` so the backbone emits exactly `ceil(len / stride)` cells.
pub fn boundary_padding(layers: &[Layer], len: usize) -> (usize, usize) {
    let cells = len.div_ceil(output_stride(layers));
    let total = input_extent(layers, cells) - len;
    if total % 2 == 1 && output_extent(layers, len + total + 1) == Some(cells) {
        let half = (total + 1) / 2;
        return (half, half);
    }
    (total / 2, total - total / 2)
}

/// Receptive field of one context cell, in original-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptiveField {
    pub size: f64,
    pub stride: f64,
}

/// Receptive field of a context cell for the given layer chain.
pub fn receptive_field_of(layers: &[Layer]) -> (usize, usize) {
    let mut jump = 1;
    let mut size = 1;
    for l in layers {
        size += (l.extent() - 1) * jump;
        jump *= l.stride();
    }
    (size, jump)
}

/// Receptive field of the scale-1 (`scale == 1`) or 2x-upsampled
/// (`scale == 2`) context path, measured in original-image pixels.
pub fn receptive_field(config: &BackboneConfig, scale: usize) -> Result<ReceptiveField> {
    if scale != 1 && scale != 2 {
        return Err(Error::Config(format!("scale must be 1 or 2, got {scale}")));
    }
    let (size, stride) = receptive_field_of(&backbone_layers(config, Layout::Dilated));
    Ok(ReceptiveField {
        size: size as f64 / scale as f64,
        stride: stride as f64 / scale as f64,
    })
}

/// What a feature map represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureRole {
    Pixel,
    ContextScale1,
    ContextScale2,
    Concat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub tensor: Tensor,
    pub role: FeatureRole,
}

/// Per-pixel color transforms, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMap {
    pub width: usize,
    pub height: usize,
    pub transforms: Vec<ColorTransform>,
}

impl TransformMap {
    pub fn get(&self, x: usize, y: usize) -> &ColorTransform {
        &self.transforms[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stylized {
    pub transforms: TransformMap,
    pub enhanced: LabImage,
}

/// Normalized Lab planes used as the network's color input.
pub fn pixel_feature(img: &LabImage) -> Tensor {
    let mut t = img.to_tensor();
    let n = img.width() * img.height();
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        *v = if i < n { (*v - 50.0) / 50.0 } else { *v / 50.0 };
    }
    t
}

/// Planar `10 x H x W` quadratic basis of every pixel.
pub fn basis_tensor(img: &LabImage) -> Tensor {
    let n = img.width() * img.height();
    let mut data = vec![0.0; BASIS_LEN * n];
    for (p, &c) in img.pixels().iter().enumerate() {
        for (k, v) in quadratic_basis(c).0.iter().enumerate() {
            data[k * n + p] = *v;
        }
    }
    Tensor::new(vec![BASIS_LEN, img.height(), img.width()], data).expect("planar basis")
}

/// Variables produced by recording a forward pass on a tape.
pub struct ForwardGraph {
    pub params: Vec<Var>,
    /// Concatenated pixel + context feature, `(3 + 2C) x H x W`.
    pub features: Var,
    /// Raw head output, `30 x H x W` (or `30 x 1 x n` when pixels were
    /// selected).
    pub head: Var,
    /// Enhanced Lab colors, `3 x H x W` (or `3 x 1 x n`).
    pub enhanced: Var,
}

/// Network parameters together with the configuration that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct StylizeNet {
    config: BackboneConfig,
    params: Vec<Tensor>,
}

impl StylizeNet {
    /// Builds the network and initializes it from `config.seed`.
    pub fn new(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let params = config.param_shapes().iter().map(|s| Tensor::zeros(s)).collect();
        let mut net = Self { config, params };
        net.init_params(config.seed);
        Ok(net)
    }

    pub(crate) fn from_parts(config: BackboneConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        if shapes.len() != params.len() || shapes.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape()) {
            return Err(Error::Config("parameter shapes do not match the configuration".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Number of parameter tensors that belong to the backbone.
    pub fn backbone_param_tensors(&self) -> usize {
        self.params.len() - 6
    }

    /// Seeded initialization.
    ///
    /// Convolution weights are drawn uniformly from `±sqrt(6 / fan_in)` and
    /// biases start at zero, except the head's output layer: its weights are
    /// zero and its bias encodes the identity transform, so a fresh network
    /// returns every image unchanged.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = self.params.len() - 2;
        for (i, p) in self.params.iter_mut().enumerate() {
            let shape = p.shape().to_vec();
            let data = p.data_mut();
            if i == last {
                data.fill(0.0);
            } else if i == last + 1 {
                let id = identity_transform().to_flat();
                for (k, v) in data.iter_mut().enumerate() {
                    *v = id[k] / TRANSFORM_SCALE[k % BASIS_LEN];
                }
            } else if shape.len() == 4 {
                let fan_in = shape[1] * shape[2] * shape[3];
                let bound = (6.0 / fan_in as f64).sqrt();
                data.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
            } else {
                data.fill(0.0);
            }
        }
    }

    fn check_size(img: &LabImage) -> Result<()> {
        if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
            return Err(Error::ImageTooSmall {
                width: img.width(),
                height: img.height(),
                min: MIN_SIDE,
            });
        }
        Ok(())
    }

    fn layers(&self) -> Vec<Layer> {
        backbone_layers(&self.config, Layout::Dilated)
    }

    /// Runs the backbone on an already padded `3 x H x W` input.
    fn record_backbone(&self, tape: &mut Tape, params: &[Var], input: Var) -> Result<Var> {
        let mut x = input;
        let mut p = 0;
        for layer in self.layers() {
            x = match layer {
                Layer::Conv(spec) => {
                    let y = tape.conv2d(x, params[p], params[p + 1], &spec)?;
                    p += 2;
                    tape.relu(y)
                }
                Layer::Pool(spec) => tape.max_pool(x, &spec)?,
            };
        }
        Ok(x)
    }

    /// Reflection-pads `input` so the backbone yields `ceil(side / 8)` cells
    /// per axis. Padding wider than the image is realised by reflecting
    /// repeatedly.
    fn record_boundary_pad(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let (_, h, w) = tape.value(input).chw()?;
        let layers = self.layers();
        let (top, bottom) = boundary_padding(&layers, h);
        let (left, right) = boundary_padding(&layers, w);
        let mut remaining = [top, bottom, left, right];
        let mut x = input;
        while remaining.iter().any(|&r| r > 0) {
            let (_, ch, cw) = tape.value(x).chw()?;
            let step = [
                remaining[0].min(ch - 1),
                remaining[1].min(ch - 1),
                remaining[2].min(cw - 1),
                remaining[3].min(cw - 1),
            ];
            x = tape.reflect_pad_sides(x, step)?;
            for (r, s) in remaining.iter_mut().zip(step) {
                *r -= s;
            }
        }
        Ok(x)
    }

    /// Context maps of both scales before interpolation.
    fn record_context(&self, tape: &mut Tape, params: &[Var], pixels: Var) -> Result<[Var; 2]> {
        let (_, h, w) = tape.value(pixels).chw()?;
        let padded = self.record_boundary_pad(tape, pixels)?;
        let scale1 = self.record_backbone(tape, params, padded)?;
        let up = tape.bilinear_upsample(pixels, 2 * h, 2 * w)?;
        let padded_up = self.record_boundary_pad(tape, up)?;
        let scale2 = self.record_backbone(tape, params, padded_up)?;
        Ok([scale1, scale2])
    }

    /// Records the full forward pass. With `pixels`, the head and the
    /// enhancement layer run only at those flat pixel indices.
    pub fn record(&self, tape: &mut Tape, img: &LabImage, pixels: Option<&[usize]>, trainable: bool) -> Result<ForwardGraph> {
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| if trainable { tape.param(p.clone()) } else { tape.constant(p.clone()) })
            .collect();
        self.record_with(tape, params, img, pixels)
    }

    /// [`StylizeNet::record`] with caller-supplied parameter variables, one
    /// per entry of [`BackboneConfig::param_shapes`]. Stored parameters are
    /// ignored.
    pub fn record_with(&self, tape: &mut Tape, params: Vec<Var>, img: &LabImage, pixels: Option<&[usize]>) -> Result<ForwardGraph> {
        Self::check_size(img)?;
        let shapes = self.config.param_shapes();
        if params.len() != shapes.len() || params.iter().zip(&shapes).any(|(&v, s)| tape.value(v).shape() != s.as_slice()) {
            return Err(Error::Config("parameter variables do not match the network configuration".into()));
        }
        let (w, h) = img.dims();
        let pixel = tape.constant(pixel_feature(img));
        let [c1, c2] = self.record_context(tape, &params, pixel)?;
        let c1 = tape.bilinear_upsample(c1, h, w)?;
        let c2 = tape.bilinear_upsample(c2, h, w)?;
        let features = tape.concat_channels(&[pixel, c1, c2])?;

        let mut basis = basis_tensor(img);
        let mut x = features;
        if let Some(ps) = pixels {
            x = tape.gather_pixels(features, ps)?;
            basis = gather_planes(&basis, ps)?;
        }
        let head_params = &params[self.backbone_param_tensors()..];
        let specs = self.config.head_specs();
        for (i, spec) in specs.iter().enumerate() {
            x = tape.conv2d(x, head_params[2 * i], head_params[2 * i + 1], spec)?;
            if i + 1 < specs.len() {
                x = tape.relu(x);
            }
        }
        let enhanced = tape.basis_contract(x, &basis, &TRANSFORM_SCALE)?;
        Ok(ForwardGraph {
            params,
            features,
            head: x,
            enhanced,
        })
    }

    /// Single forward pass: per-pixel transforms and the enhanced image.
    pub fn forward(&self, img: &LabImage) -> Result<Stylized> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, img, None, false)?;
        let enhanced = LabImage::from_tensor(tape.value(g.enhanced))?;
        let head = tape.value(g.head);
        let n = img.width() * img.height();
        let transforms = (0..n)
            .map(|p| {
                let flat: Vec<f64> = (0..TRANSFORM_CHANNELS)
                    .map(|c| head.data()[c * n + p] * TRANSFORM_SCALE[c % BASIS_LEN])
                    .collect();
                ColorTransform::from_flat(&flat)
            })
            .collect();
        Ok(Stylized {
            transforms: TransformMap {
                width: img.width(),
                height: img.height(),
                transforms,
            },
            enhanced,
        })
    }

    pub fn stylize(&self, img: &LabImage) -> Result<LabImage> {
        Ok(self.forward(img)?.enhanced)
    }

    /// Concatenated two-scale context feature interpolated to the image size.
    pub fn two_scale_context(&self, img: &LabImage) -> Result<FeatureMap> {
        Self::check_size(img)?;
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let pixel = tape.constant(pixel_feature(img));
        let [c1, c2] = self.record_context(&mut tape, &params, pixel)?;
        let c1 = tape.bilinear_upsample(c1, img.height(), img.width())?;
        let c2 = tape.bilinear_upsample(c2, img.height(), img.width())?;
        let both = tape.concat_channels(&[c1, c2])?;
        Ok(FeatureMap {
            tensor: tape.value(both).clone(),
            role: FeatureRole::Concat,
        })
    }

    /// The scale-1 and scale-2 context maps before interpolation.
    pub fn context_maps(&self, img: &LabImage) -> Result<[FeatureMap; 2]> {
        Self::check_size(img)?;
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let pixel = tape.constant(pixel_feature(img));
        let [c1, c2] = self.record_context(&mut tape, &params, pixel)?;
        Ok([
            FeatureMap {
                tensor: tape.value(c1).clone(),
                role: FeatureRole::ContextScale1,
            },
            FeatureMap {
                tensor: tape.value(c2).clone(),
                role: FeatureRole::ContextScale2,
            },
        ])
    }

    /// Runs the backbone alone on a `3 x H x W` tensor, without boundary
    /// padding.
    pub fn backbone_map(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let x = tape.constant(input.clone());
        let out = self.record_backbone(&mut tape, &params, x)?;
        Ok(tape.value(out).clone())
    }
}

/// Selects pixel columns of every plane into a `C x 1 x n` tensor.
pub(crate) fn gather_planes(t: &Tensor, pixels: &[usize]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.constant(t.clone());
    let g = tape.gather_pixels(v, pixels)?;
    Ok(tape.value(g).clone())
}

/// Convenience: applies one transform to every pixel of an image.
pub fn apply_global(t: &ColorTransform, img: &LabImage) -> LabImage {
    img.map(|c: Lab| t.apply_to(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> BackboneConfig {
        BackboneConfig {
            stage_channels: [2, 2, 3, 3, 3],
            context_channels: 4,
            head_hidden: [5, 4],
            seed: 3,
        }
    }

    fn gradient_image(w: usize, h: usize) -> LabImage {
        let px = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                Lab::new(20.0 + 2.0 * x, 30.0 - y, 3.0 * (x - y))
            })
            .collect();
        LabImage::new(w, h, px).unwrap()
    }

    #[test]
    fn default_widths() {
        let c = BackboneConfig::default();
        assert_eq!(c.stage_channels, [16, 16, 32, 32, 32]);
        assert_eq!(c.context_channels, 64);
        assert_eq!(c.head_hidden, [32, 32]);
    }

    #[test]
    fn zero_width_rejected() {
        let mut c = toy();
        c.head_hidden[1] = 0;
        assert!(StylizeNet::new(c).is_err());
    }

    #[test]
    fn head_emits_thirty_channels() {
        let shapes = toy().param_shapes();
        assert_eq!(shapes[shapes.len() - 2], vec![30, 4, 1, 1]);
        assert_eq!(shapes[shapes.len() - 1], vec![30]);
    }

    #[test]
    fn output_stride_is_eight() {
        assert_eq!(output_stride(&backbone_layers(&toy(), Layout::Dilated)), 8);
        assert_eq!(output_stride(&backbone_layers(&toy(), Layout::Strided)), 32);
    }

    #[test]
    fn boundary_padding_yields_ceil_cells() {
        let layers = backbone_layers(&toy(), Layout::Dilated);
        for len in 1..200 {
            let (a, b) = boundary_padding(&layers, len);
            assert_eq!(output_extent(&layers, len + a + b), Some(len.div_ceil(8)), "len {len}");
            assert!(b - a <= 1);
        }
    }

    #[test]
    fn small_images_are_rejected() {
        let net = StylizeNet::new(toy()).unwrap();
        let img = gradient_image(7, 12);
        assert!(matches!(net.forward(&img), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn fresh_network_is_identity() {
        let net = StylizeNet::new(toy()).unwrap();
        let img = gradient_image(9, 8);
        let out = net.forward(&img).unwrap();
        assert_eq!(out.enhanced, img);
        assert!(out.transforms.transforms.iter().all(|t| *t == identity_transform()));
    }

    #[test]
    fn scale_two_receptive_field_is_half() {
        let c = BackboneConfig::default();
        let r1 = receptive_field(&c, 1).unwrap();
        let r2 = receptive_field(&c, 2).unwrap();
        assert_eq!(r2.size * 2.0, r1.size);
        assert_eq!(r1.stride, 8.0);
        assert!(receptive_field(&c, 3).is_err());
    }
}
