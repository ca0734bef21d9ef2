//! Fast invariant checks against the naive reference implementations.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semstyle::color::{
    apply_transform, identity_transform, lab_pixel_to_srgb, quadratic_basis, srgb_pixel_to_lab, ColorTransform, Lab,
    LabImage,
};
use semstyle::network::{BackboneConfig, StylizeNet};
use semstyle::tensor::{ConvSpec, GradCheck, Padding, PoolSpec, Tape, Tensor, Var};
use semstyle_oracle as oracle;

use crate::CliError;

type Check = Result<(), String>;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn conv_oracle(rng: &mut ChaCha8Rng) -> Check {
    for (k, stride, dilation, padding) in [
        (1, 1, 1, Padding::None),
        (3, 1, 1, Padding::Zero(1)),
        (3, 2, 1, Padding::Reflect(1)),
        (3, 1, 2, Padding::None),
        (3, 1, 4, Padding::Zero(4)),
        (2, 2, 2, Padding::Reflect(2)),
    ] {
        let spec = ConvSpec::new(2, 3, k)
            .with_stride(stride)
            .with_dilation(dilation)
            .with_padding(padding);
        let (x, w, b) = (random(rng, &[2, 13, 12]), random(rng, &spec.weight_shape()), random(rng, &[3]));
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
        let y = tape.conv2d(xv, wv, bv, &spec).map_err(|e| e.to_string())?;
        let pad = match padding {
            Padding::None => oracle::Pad::None,
            Padding::Zero(p) => oracle::Pad::Zero(p),
            Padding::Reflect(p) => oracle::Pad::Reflect(p),
        };
        let want = oracle::conv2d(x.data(), (2, 13, 12), w.data(), (3, k, k), b.data(), (stride, stride), (dilation, dilation), pad);
        let d = max_diff(tape.value(y).data(), &want.data);
        if d > 1e-12 {
            return Err(format!("{spec:?}: max difference {d:e}"));
        }
    }
    Ok(())
}

fn pool_oracle(rng: &mut ChaCha8Rng) -> Check {
    for (k, stride, dilation, pad) in [(2, 2, 1, 0), (3, 2, 1, 1), (3, 1, 1, 1), (3, 1, 2, 2)] {
        let spec = PoolSpec::new(k, stride).with_dilation(dilation).with_padding(pad);
        let x = random(rng, &[2, 11, 9]);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = tape.max_pool(xv, &spec).map_err(|e| e.to_string())?;
        let want = oracle::max_pool(x.data(), (2, 11, 9), (k, k), (stride, stride), (dilation, dilation), (pad, pad));
        let d = max_diff(tape.value(y).data(), &want.data);
        if d > 1e-12 {
            return Err(format!("{spec:?}: max difference {d:e}"));
        }
    }
    Ok(())
}

fn upsample_oracle(rng: &mut ChaCha8Rng) -> Check {
    let x = random(rng, &[2, 5, 4]);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let y = tape.bilinear_upsample(xv, 9, 11).map_err(|e| e.to_string())?;
    let want = oracle::upsample_align_corners(x.data(), (2, 5, 4), 9, 11);
    let d = max_diff(tape.value(y).data(), &want.data);
    if d > 1e-12 {
        return Err(format!("max difference {d:e}"));
    }
    Ok(())
}

type Graph = Box<dyn Fn(&mut Tape, &[Var]) -> semstyle::tensor::Result<Var>>;

fn gradients(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let conv = ConvSpec::new(2, 2, 3).with_dilation(2).with_padding(Padding::Reflect(1));
    let pool = PoolSpec::new(3, 2).with_padding(1);
    let basis = random(rng, &[10, 3, 3]);
    let target = random(rng, &[3, 3, 3]);
    let cases: Vec<(&str, Vec<Tensor>, Graph)> = vec![
        (
            "conv2d",
            vec![random(rng, &[2, 7, 7]), random(rng, &conv.weight_shape()), random(rng, &[2])],
            Box::new(move |t, v| {
                let y = t.conv2d(v[0], v[1], v[2], &conv)?;
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "max_pool",
            vec![random(rng, &[2, 6, 5])],
            Box::new(move |t, v| {
                let y = t.max_pool(v[0], &pool)?;
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "bilinear_upsample",
            vec![random(rng, &[1, 3, 4])],
            Box::new(|t, v| {
                let y = t.bilinear_upsample(v[0], 7, 5)?;
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "reflect_pad+crop",
            vec![random(rng, &[1, 4, 5])],
            Box::new(|t, v| {
                let y = t.reflect_pad_sides(v[0], [2, 1, 3, 1])?;
                let y = t.crop(y, [1, 0, 0, 2])?;
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "concat+gather",
            vec![random(rng, &[1, 3, 3]), random(rng, &[2, 3, 3])],
            Box::new(|t, v| {
                let y = t.concat_channels(&[v[0], v[1]])?;
                let y = t.gather_pixels(y, &[8, 0, 4, 4])?;
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "basis_contract+mse",
            vec![random(rng, &[30, 3, 3])],
            Box::new(move |t, v| {
                let y = t.basis_contract(v[0], &basis, &[0.5; 10])?;
                t.mean_squared_error(y, &target, None)
            }),
        ),
    ];
    let gc = GradCheck {
        seed,
        max_coords: 16,
        ..GradCheck::default()
    };
    for (name, inputs, f) in cases {
        let err = gc.run(f, &inputs).map_err(|e| format!("{name}: {e}"))?;
        if !(err < 1e-4) {
            return Err(format!("{name}: relative error {err:e}"));
        }
    }
    Ok(())
}

fn lab_round_trip() -> Check {
    let grays = (0..=255u8).map(|g| [g, g, g]);
    let steps: [u8; 17] = std::array::from_fn(|i| (i * 255 / 16) as u8);
    let lattice = steps
        .into_iter()
        .flat_map(move |r| steps.into_iter().flat_map(move |g| steps.into_iter().map(move |b| [r, g, b])));
    for rgb in grays.chain(lattice) {
        let back = lab_pixel_to_srgb(srgb_pixel_to_lab(rgb));
        if back != rgb {
            return Err(format!("{rgb:?} came back as {back:?}"));
        }
    }
    Ok(())
}

fn red_reference() -> Check {
    let got = srgb_pixel_to_lab([255, 0, 0]);
    let (l, a, b) = oracle::srgb_to_lab(255, 0, 0);
    let d = [got.l - l, got.a - a, got.b - b].map(f64::abs);
    if d.iter().any(|&x| x > 0.1) {
        return Err(format!("{got:?} vs reference ({l}, {a}, {b})"));
    }
    Ok(())
}

fn basis_identities(rng: &mut ChaCha8Rng) -> Check {
    for _ in 0..100 {
        let c = Lab::new(rng.gen_range(0.0..100.0), rng.gen_range(-80.0..80.0), rng.gen_range(-80.0..80.0));
        let basis = quadratic_basis(c);
        if apply_transform(&identity_transform(), &basis) != c {
            return Err(format!("identity changed {c:?}"));
        }
        if apply_transform(&ColorTransform::zero(), &basis) != Lab::new(0.0, 0.0, 0.0) {
            return Err(format!("zero transform did not zero {c:?}"));
        }
    }
    Ok(())
}

fn network_contracts(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let net = StylizeNet::new(BackboneConfig {
        seed,
        stage_channels: [4, 4, 4, 4, 4],
        context_channels: 4,
        head_hidden: [4, 4],
    })
    .map_err(|e| e.to_string())?;
    for (w, h) in [(16, 16), (17, 23), (33, 20)] {
        let px = (0..w * h)
            .map(|_| Lab::new(rng.gen_range(10.0..90.0), rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0)))
            .collect();
        let img = LabImage::new(w, h, px).map_err(|e| e.to_string())?;
        let out = net.forward(&img).map_err(|e| e.to_string())?;
        if out.enhanced != img {
            return Err(format!("fresh network changed a {w}x{h} image"));
        }
        let [c1, c2] = net.context_maps(&img).map_err(|e| e.to_string())?;
        let want = [vec![4, h.div_ceil(8), w.div_ceil(8)], vec![4, (2 * h).div_ceil(8), (2 * w).div_ceil(8)]];
        if c1.tensor.shape() != want[0] || c2.tensor.shape() != want[1] {
            return Err(format!(
                "{w}x{h}: context maps {:?} and {:?}",
                c1.tensor.shape(),
                c2.tensor.shape()
            ));
        }
    }
    Ok(())
}

pub fn run(seed: u64) -> Result<(), CliError> {
    println!("command = selfcheck");
    println!("seed = {seed}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let results: Vec<(&str, Check)> = vec![
        ("conv2d matches naive reference", conv_oracle(&mut rng)),
        ("max_pool matches naive reference", pool_oracle(&mut rng)),
        ("bilinear upsampling matches naive reference", upsample_oracle(&mut rng)),
        ("analytic gradients match finite differences", gradients(&mut rng, seed)),
        ("sRGB -> Lab -> sRGB is exact on grays and a 17^3 lattice", lab_round_trip()),
        ("pure red matches the reference Lab value", red_reference()),
        ("quadratic basis identities", basis_identities(&mut rng)),
        ("fresh network is the identity with stride-8 context", network_contracts(&mut rng, seed)),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    println!(
        "{} of {} checks passed in {:.2}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        return Err(CliError::Check(format!("{failed} check(s) failed")));
    }
    Ok(())
}
