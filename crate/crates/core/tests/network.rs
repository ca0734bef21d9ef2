use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semstyle::color::{apply_transform, mean_l2, quadratic_basis, Lab, LabImage};
use semstyle::network::{
    backbone_layers, output_extent, receptive_field, BackboneConfig, FeatureRole, Layer, Layout, StylizeNet,
    CHECKPOINT_VERSION, MIN_SIDE,
};
use semstyle::tensor::Tensor;
use semstyle::Error;
use semstyle_oracle as oracle;

fn small() -> BackboneConfig {
    BackboneConfig {
        stage_channels: [3, 4, 4, 5, 5],
        context_channels: 6,
        head_hidden: [5, 4],
        seed: 7,
    }
}

fn random_image(seed: u64, w: usize, h: usize) -> LabImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..w * h)
        .map(|_| Lab::new(rng.gen_range(5.0..95.0), rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)))
        .collect();
    LabImage::new(w, h, px).unwrap()
}

/// Perturbs the head's output layer so the network is no longer the identity.
fn scramble_head(net: &mut StylizeNet, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.params().len();
    for p in &mut net.params_mut()[n - 2..] {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
}

fn windows(layers: &[Layer]) -> Vec<oracle::Window> {
    layers
        .iter()
        .map(|l| match l {
            Layer::Conv(s) => oracle::Window {
                kernel: s.kernel.0,
                stride: s.stride.0,
                dilation: s.dilation.0,
                pad: 0,
            },
            Layer::Pool(p) => oracle::Window {
                kernel: p.kernel.0,
                stride: p.stride.0,
                dilation: p.dilation.0,
                pad: p.padding.0,
            },
        })
        .collect()
}

#[test]
fn backbone_structure() {
    let layers = backbone_layers(&BackboneConfig::default(), Layout::Dilated);
    let pools: Vec<_> = layers.iter().filter_map(|l| if let Layer::Pool(p) = l { Some(*p) } else { None }).collect();
    let convs: Vec<_> = layers.iter().filter_map(|l| if let Layer::Conv(c) = l { Some(*c) } else { None }).collect();
    assert_eq!(pools.iter().map(|p| p.stride.0).collect::<Vec<_>>(), [2, 2, 2, 1, 1]);
    assert_eq!(convs.iter().map(|c| c.dilation.0).collect::<Vec<_>>(), [1, 1, 1, 1, 2, 4]);
    assert_eq!(convs.last().unwrap().out_channels, 64);
}

#[test]
fn context_map_sizes() {
    let net = StylizeNet::new(small()).unwrap();
    for (side, cells) in [(32, 4), (33, 5)] {
        let [c1, c2] = net.context_maps(&random_image(1, side, side)).unwrap();
        assert_eq!(c1.tensor.shape(), [6, cells, cells]);
        assert_eq!(c1.role, FeatureRole::ContextScale1);
        assert_eq!(c2.tensor.shape(), [6, (2 * side).div_ceil(8), (2 * side).div_ceil(8)]);
        assert_eq!(c2.role, FeatureRole::ContextScale2);
    }
}

#[test]
fn shape_arithmetic_agrees_with_independent_trace() {
    for layout in [Layout::Dilated, Layout::Strided] {
        let layers = backbone_layers(&BackboneConfig::default(), layout);
        let chain = windows(&layers);
        for len in 150..420 {
            let trace = oracle::shape_trace(&chain, len);
            let last = *trace.last().unwrap();
            let ok = trace.iter().all(|&n| n > 0);
            assert_eq!(output_extent(&layers, len), ok.then_some(last), "{layout:?} {len}");
        }
    }
}

#[test]
fn receptive_field_matches_recursion_and_brute_force() {
    let c = BackboneConfig::default();
    let dilated = windows(&backbone_layers(&c, Layout::Dilated));
    let strided = windows(&backbone_layers(&c, Layout::Strided));
    let (r, j) = oracle::receptive_field(&dilated);
    assert_eq!(oracle::receptive_field(&strided).0, r);
    let (lo, hi) = oracle::dependency_span(&dilated, 3);
    assert_eq!((hi - lo + 1) as usize, r);
    let (slo, shi) = oracle::dependency_span(&strided, 0);
    assert_eq!((shi - slo + 1) as usize, r);

    let rf1 = receptive_field(&c, 1).unwrap();
    assert_eq!(rf1.size, r as f64);
    assert_eq!(rf1.stride, j as f64);
    assert_eq!(rf1.stride, 8.0);
    assert_eq!(receptive_field(&c, 2).unwrap().size, r as f64 / 2.0);
}

#[test]
fn two_scale_context_shape() {
    let net = StylizeNet::new(small()).unwrap();
    let img = random_image(2, 21, 18);
    let f = net.two_scale_context(&img).unwrap();
    assert_eq!(f.tensor.shape(), [12, 18, 21]);
    assert_eq!(f.role, FeatureRole::Concat);
}

#[test]
fn constant_image_gives_constant_context() {
    let mut net = StylizeNet::new(small()).unwrap();
    net.init_params(99);
    let img = LabImage::new(24, 19, vec![Lab::new(61.0, -12.0, 30.0); 24 * 19]).unwrap();
    let f = net.two_scale_context(&img).unwrap();
    let (c, h, w) = f.tensor.chw().unwrap();
    for ch in 0..c {
        let plane = &f.tensor.data()[ch * h * w..(ch + 1) * h * w];
        let spread = plane.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - plane.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        assert!(spread <= 1e-8, "channel {ch}: {spread}");
    }
}

#[test]
fn enhanced_pixel_is_transform_times_basis() {
    let mut net = StylizeNet::new(small()).unwrap();
    scramble_head(&mut net, 3);
    let img = random_image(4, 17, 16);
    let out = net.forward(&img).unwrap();
    assert_eq!(out.enhanced.dims(), img.dims());
    assert_eq!((out.transforms.width, out.transforms.height), img.dims());
    for (x, y) in [(0, 0), (16, 15), (5, 9)] {
        let want = apply_transform(out.transforms.get(x, y), &quadratic_basis(img.get(x, y)));
        assert_eq!(out.enhanced.get(x, y), want);
    }
}

#[test]
fn identity_at_init_for_many_seeds() {
    for seed in 0..6 {
        let net = StylizeNet::new(BackboneConfig { seed, ..small() }).unwrap();
        let img = random_image(seed + 10, 16 + seed as usize, 20);
        let out = net.stylize(&img).unwrap();
        assert_eq!(mean_l2(&out, &img).unwrap(), 0.0);
        assert_eq!(out, img);
    }
}

#[test]
fn seeding() {
    let a = StylizeNet::new(small()).unwrap();
    let b = StylizeNet::new(small()).unwrap();
    let c = StylizeNet::new(BackboneConfig { seed: 8, ..small() }).unwrap();
    assert_eq!(a, b);
    let k = a.backbone_param_tensors();
    assert_ne!(a.params()[..k], c.params()[..k]);
    assert_eq!(a.params().len(), small().param_shapes().len());
    assert_eq!(small().param_count(), a.params().iter().map(Tensor::len).sum::<usize>());
}

#[test]
fn shared_backbone_feeds_both_scales() {
    let mut net = StylizeNet::new(small()).unwrap();
    let img = random_image(5, 24, 24);
    let before = net.context_maps(&img).unwrap();
    let last = net.backbone_param_tensors() - 1;
    net.params_mut()[last].data_mut()[0] += 0.5;
    let after = net.context_maps(&img).unwrap();
    for s in 0..2 {
        assert!(before[s].tensor.max_abs_diff(&after[s].tensor) > 1e-3, "scale {}", s + 1);
    }
}

#[test]
fn backbone_is_translation_covariant() {
    let net = StylizeNet::new(small()).unwrap();
    let (c, n) = (3, 232);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let big = Tensor::from_fn(&[c, n + 8, n + 8], |_| rng.gen_range(-1.0..1.0));
    let window = |dy: usize, dx: usize| {
        Tensor::from_fn(&[c, n, n], |i| {
            let (ch, y, x) = (i / (n * n), (i / n) % n, i % n);
            big.data()[(ch * (n + 8) + y + dy) * (n + 8) + x + dx]
        })
    };
    let a = net.backbone_map(&window(0, 0)).unwrap();
    let b = net.backbone_map(&window(8, 8)).unwrap();
    let (ch, h, w) = a.chw().unwrap();

    let chain = windows(&backbone_layers(&small(), Layout::Dilated));
    let inside = |j: usize| {
        let (lo, hi) = oracle::dependency_span(&chain, j as i64);
        lo >= 0 && hi < n as i64
    };
    let interior: Vec<usize> = (0..h - 1).filter(|&j| inside(j) && inside(j + 1)).collect();
    assert!(interior.len() >= 2, "no interior cells");
    for k in 0..ch {
        for &y in &interior {
            for &x in &interior {
                let va = a.data()[(k * h + y + 1) * w + x + 1];
                let vb = b.data()[(k * h + y) * w + x];
                assert!((va - vb).abs() <= 1e-8, "cell ({y},{x}) channel {k}");
            }
        }
    }
}

#[test]
fn image_size_limits() {
    let net = StylizeNet::new(small()).unwrap();
    assert!(net.forward(&random_image(1, MIN_SIDE, MIN_SIDE)).is_ok());
    assert!(matches!(net.forward(&random_image(1, MIN_SIDE - 1, 30)), Err(Error::ImageTooSmall { .. })));
}

#[test]
fn checkpoint_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let mut net = StylizeNet::new(small()).unwrap();
    scramble_head(&mut net, 1);
    net.save(&path).unwrap();
    let back = StylizeNet::load(&path).unwrap();
    assert_eq!(back, net);
    let img = random_image(3, 16, 16);
    assert_eq!(back.stylize(&img).unwrap(), net.stylize(&img).unwrap());

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(StylizeNet::load(&path), Err(Error::Checkpoint { .. })));
    assert!(matches!(StylizeNet::load(dir.path().join("none")), Err(Error::Io { .. })));
}

#[test]
fn concurrent_forwards_agree() {
    let mut net = StylizeNet::new(small()).unwrap();
    scramble_head(&mut net, 2);
    let img = random_image(8, 20, 20);
    let want = net.stylize(&img).unwrap();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..3).map(|_| s.spawn(|| net.stylize(&img).unwrap())).collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), want);
        }
    });
}
