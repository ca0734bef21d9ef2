//! Training objective, optimizers, closed-form global fitting and evaluation.

mod dataset;
mod fit;

pub use dataset::{load_split, read_split_names, write_split_names, DatasetPaths};
pub use fit::{fit_global_transform, fit_transform};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::color::{mean_l2, LabImage};
use crate::error::{Error, Result};
use crate::network::{gather_planes, BackboneConfig, StylizeNet};
use crate::tensor::{Tape, Tensor};

/// An input photo and its stylized counterpart, both in Lab.
#[derive(Debug, Clone, PartialEq)]
pub struct StylePair {
    pub input: LabImage,
    pub target: LabImage,
    pub name: Option<String>,
}

impl StylePair {
    pub fn new(input: LabImage, target: LabImage, name: Option<String>) -> Result<Self> {
        if input.dims() != target.dims() {
            return Err(Error::DimensionMismatch {
                what: "style pair",
                expected: input.dims(),
                actual: target.dims(),
            });
        }
        Ok(Self { input, target, name })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Training hyperparameters.
///
/// Defaults: 100 epochs, Adam with learning rate `2e-3`, 1024 sampled pixels
/// per step, seed 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Pixels sampled (without replacement) for each step's loss. Values at
    /// or above the image's pixel count use the whole image.
    pub pixels_per_step: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 2e-3,
            pixels_per_step: 1024,
            optimizer: Optimizer::adam(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if self.pixels_per_step == 0 {
            return Err(Error::Config("pixels_per_step must be at least 1".into()));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            let ok = (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0;
            if !ok {
                return Err(Error::Config(format!("invalid Adam parameters {:?}", self.optimizer)));
            }
        }
        Ok(())
    }
}

/// Moment buffers and step count of an optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(net: &StylizeNet, optimizer: Optimizer) -> Self {
        let zeros = || net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        match optimizer {
            Optimizer::Sgd => Self {
                step: 0,
                first: Vec::new(),
                second: Vec::new(),
            },
            Optimizer::Adam { .. } => Self {
                step: 0,
                first: zeros(),
                second: zeros(),
            },
        }
    }

    fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor], optimizer: Optimizer, lr: f64) {
        self.step += 1;
        match optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (v, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *v -= lr * d;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = self.first[i].data_mut();
                    let s = self.second[i].data_mut();
                    for (j, (v, d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * d;
                        s[j] = beta2 * s[j] + (1.0 - beta2) * d * d;
                        *v -= lr * (m[j] / c1) / ((s[j] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Mean squared Lab distance between `enhanced` and `target`, over every
/// pixel or over those where `mask` is true.
pub fn loss(enhanced: &LabImage, target: &LabImage, mask: Option<&[bool]>) -> Result<f64> {
    if enhanced.dims() != target.dims() {
        return Err(Error::DimensionMismatch {
            what: "loss",
            expected: enhanced.dims(),
            actual: target.dims(),
        });
    }
    let n = enhanced.pixels().len();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::DimensionMismatch {
                what: "loss mask",
                expected: enhanced.dims(),
                actual: (m.len(), 1),
            });
        }
    }
    let (mut total, mut count) = (0.0, 0usize);
    for (i, (p, t)) in enhanced.pixels().iter().zip(target.pixels()).enumerate() {
        if mask.is_none_or(|m| m[i]) {
            let d = p.distance(*t);
            total += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("loss"));
    }
    Ok(total / count as f64)
}

/// One optimization step on `pair`; returns the loss before the update.
pub fn train_step(
    net: &mut StylizeNet,
    pair: &StylePair,
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = pair.input.pixels().len();
    let picked = (cfg.pixels_per_step < n).then(|| sample(rng, n, cfg.pixels_per_step).into_vec());
    let mut target = pair.target.to_tensor();
    if let Some(ps) = &picked {
        target = gather_planes(&target, ps)?;
    }

    let mut tape = Tape::new();
    let graph = net.record(&mut tape, &pair.input, picked.as_deref(), true)?;
    let loss = tape.mean_squared_error(graph.enhanced, &target, None)?;
    let value = tape.value(loss).data()[0];
    tape.backward(loss)?;
    let grads: Vec<Tensor> = graph
        .params
        .iter()
        .zip(net.params())
        .map(|(v, p)| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    opt.apply(net.params_mut(), &grads, cfg.optimizer, cfg.learning_rate);
    Ok(value)
}

/// The trained network and the mean step loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: StylizeNet,
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    /// Tab-separated `epoch<TAB>mean_loss` rows, epochs counted from 1.
    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for (i, l) in self.epoch_losses.iter().enumerate() {
            let _ = writeln!(s, "{}\t{l}", i + 1);
        }
        s
    }

    pub fn write(&self, checkpoint: &Path, log: &Path) -> Result<()> {
        self.net.save(checkpoint)?;
        std::fs::write(log, self.log_text()).map_err(|e| Error::io(log, e))
    }
}

/// Trains a freshly initialized network over `pairs` for `cfg.epochs`
/// epochs, visiting pairs in a seeded shuffled order.
pub fn train(pairs: &[StylePair], backbone: BackboneConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(pairs, backbone, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, mean_loss)` after each epoch.
pub fn train_with(
    pairs: &[StylePair],
    backbone: BackboneConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut net = StylizeNet::new(backbone)?;
    let mut opt = OptimizerState::new(&net, cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            total += train_step(&mut net, &pairs[i], cfg, &mut opt, &mut rng)?;
        }
        let mean = total / pairs.len() as f64;
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome { net, epoch_losses })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub name: String,
    /// Input vs target.
    pub baseline: f64,
    /// Stylized vs target.
    pub method: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_image: Vec<ImageScore>,
    pub mean_l2: f64,
    pub baseline_mean_l2: f64,
}

impl EvalReport {
    /// Tab-separated `name, baseline, method` rows with a header and a final
    /// `mean` row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("name\tbaseline\tmethod\n");
        for r in &self.per_image {
            let _ = writeln!(s, "{}\t{}\t{}", r.name, r.baseline, r.method);
        }
        let _ = writeln!(s, "mean\t{}\t{}", self.baseline_mean_l2, self.mean_l2);
        s
    }
}

/// Mean per-pixel L2 of the stylized images and of the unmodified inputs
/// against their targets. Images are processed in parallel.
pub fn evaluate(net: &StylizeNet, pairs: &[StylePair]) -> Result<EvalReport> {
    evaluate_with(pairs, |img| net.stylize(img))
}

/// [`evaluate`] for any stylizer.
pub fn evaluate_with<F>(pairs: &[StylePair], stylize: F) -> Result<EvalReport>
where
    F: Fn(&LabImage) -> Result<LabImage> + Sync,
{
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let per_image = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let out = stylize(&p.input)?;
            Ok(ImageScore {
                name: p.name.clone().unwrap_or_else(|| format!("#{i}")),
                baseline: mean_l2(&p.input, &p.target)?,
                method: mean_l2(&out, &p.target)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_image.len() as f64;
    Ok(EvalReport {
        mean_l2: per_image.iter().map(|r| r.method).sum::<f64>() / n,
        baseline_mean_l2: per_image.iter().map(|r| r.baseline).sum::<f64>() / n,
        per_image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::Lab;

    fn image(w: usize, h: usize, shift: f64) -> LabImage {
        let px = (0..w * h)
            .map(|i| Lab::new(40.0 + (i % w) as f64 + shift, (i / w) as f64 - 4.0, 2.0 * shift))
            .collect();
        LabImage::new(w, h, px).unwrap()
    }

    #[test]
    fn loss_of_unit_offset_is_one() {
        let a = image(5, 4, 0.0);
        let b = a.map(|c| Lab::new(c.l + 1.0, c.a, c.b));
        assert_eq!(loss(&a, &a, None).unwrap(), 0.0);
        assert!((loss(&a, &b, None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_empty_mask_and_mismatch() {
        let a = image(3, 3, 0.0);
        assert!(matches!(loss(&a, &a, Some(&[false; 9])), Err(Error::Empty(_))));
        assert!(loss(&a, &image(3, 4, 0.0), None).is_err());
    }

    #[test]
    fn pair_dimensions_must_agree() {
        assert!(StylePair::new(image(4, 4, 0.0), image(4, 5, 0.0), None).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let zero_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(zero_lr.validate().is_ok());
        let bad = TrainConfig {
            pixels_per_step: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let negative = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn sgd_moves_against_the_gradient() {
        let mut params = vec![Tensor::new(vec![2], vec![1.0, -1.0]).unwrap()];
        let grads = vec![Tensor::new(vec![2], vec![0.5, -2.0]).unwrap()];
        let mut st = OptimizerState {
            step: 0,
            first: vec![],
            second: vec![],
        };
        st.apply(&mut params, &grads, Optimizer::Sgd, 0.1);
        assert_eq!(params[0].data(), &[0.95, -0.8]);
    }

    #[test]
    fn first_adam_step_has_size_lr() {
        let mut params = vec![Tensor::new(vec![2], vec![0.0, 0.0]).unwrap()];
        let grads = vec![Tensor::new(vec![2], vec![3.0, -0.02]).unwrap()];
        let mut st = OptimizerState {
            step: 0,
            first: vec![Tensor::zeros(&[2])],
            second: vec![Tensor::zeros(&[2])],
        };
        st.apply(&mut params, &grads, Optimizer::adam(), 0.01);
        assert!((params[0].data()[0] + 0.01).abs() < 1e-8);
        assert!((params[0].data()[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn tsv_has_three_columns() {
        let r = EvalReport {
            per_image: vec![ImageScore {
                name: "a".into(),
                baseline: 2.0,
                method: 1.0,
            }],
            mean_l2: 1.0,
            baseline_mean_l2: 2.0,
        };
        assert!(r.to_tsv().lines().all(|l| l.split('\t').count() == 3));
    }
}
