use std::collections::HashSet;

use semstyle::color::mean_l2;
use semstyle::styles::{
    apply_style, make_dataset, planted_global_style, planted_local_style, render_synthetic_image, Region, StyleKind,
    SyntheticStyle,
};
use semstyle::training::{fit_global_transform, fit_transform, StylePair};

fn residual(t: &semstyle::color::ColorTransform, pairs: &[StylePair]) -> f64 {
    pairs
        .iter()
        .map(|p| mean_l2(&p.input.map(|c| t.apply_to(c)), &p.target).unwrap())
        .sum::<f64>()
        / pairs.len() as f64
}

#[test]
fn mask_coverage_and_color_diversity_over_many_seeds() {
    for seed in 0..100 {
        let (img, mask) = render_synthetic_image(seed, 64, 64).unwrap();
        let cov = mask.coverage();
        assert!((0.10..=0.60).contains(&cov), "seed {seed}: coverage {cov}");
        for c in 0..3 {
            let distinct: HashSet<u8> = img.pixels().iter().map(|p| p[c]).collect();
            assert!(distinct.len() >= 32, "seed {seed} channel {c}: {}", distinct.len());
        }
    }
}

#[test]
fn planted_styles_are_deterministic() {
    assert_eq!(planted_global_style(4), planted_global_style(4));
    assert_eq!(planted_local_style(4), planted_local_style(4));
    assert_ne!(planted_global_style(4), planted_global_style(5));
}

#[test]
fn planted_global_stays_within_perturbation_bounds() {
    for seed in 0..5 {
        let StyleKind::Global(t) = planted_global_style(seed).kind else { unreachable!() };
        let id = semstyle::color::identity_transform();
        for r in 0..3 {
            for k in 0..10 {
                let d = (t.m[r][k] - id.m[r][k]).abs();
                let bound = match k {
                    0..=5 => 0.002,
                    6..=8 => 0.15,
                    _ => 5.0,
                };
                assert!(d <= bound, "seed {seed} entry ({r},{k}) = {d}");
            }
        }
    }
}

#[test]
fn local_style_is_not_globally_representable() {
    let style = planted_local_style(0);
    let StyleKind::Local(regions) = &style.kind else { unreachable!() };
    let ds = make_dataset(&style, 4, 1, 48, 48).unwrap();
    let pairs = ds.train_pairs();
    let global = fit_global_transform(&pairs).unwrap();
    assert!(residual(&global, &pairs) >= 1.0);

    for (region, planted) in regions {
        let samples = ds.train.iter().flat_map(|s| {
            let fg = *region == Region::Foreground;
            s.pair
                .input
                .pixels()
                .iter()
                .zip(s.pair.target.pixels())
                .zip(&s.mask.foreground)
                .filter(move |(_, &f)| f == fg)
                .map(|((&x, &y), _)| (x, y))
        });
        let fit = fit_transform(samples).unwrap();
        assert!(fit.max_abs_diff(planted) < 1e-6);
        for s in &ds.train {
            let errs: Vec<f64> = s
                .pair
                .input
                .pixels()
                .iter()
                .zip(s.pair.target.pixels())
                .enumerate()
                .filter(|(i, _)| s.mask.region(*i) == *region)
                .map(|(_, (&x, &y))| fit.apply_to(x).distance(y))
                .collect();
            assert!(errs.iter().sum::<f64>() / errs.len() as f64 <= 1e-6);
        }
    }
}

#[test]
fn dataset_split_is_disjoint_and_distinct() {
    let style = planted_global_style(0);
    let ds = make_dataset(&style, 20, 10, 32, 32).unwrap();
    assert_eq!(ds.train.len() + ds.test.len(), 30);
    let train: HashSet<&str> = ds.train.iter().map(|s| s.name.as_str()).collect();
    let test: HashSet<&str> = ds.test.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(train.len(), 20);
    assert!(train.is_disjoint(&test));
    let images: HashSet<Vec<[u8; 3]>> = ds.train.iter().chain(&ds.test).map(|s| s.image.pixels().to_vec()).collect();
    assert_eq!(images.len(), 30);
    assert_eq!(make_dataset(&style, 20, 10, 32, 32).unwrap(), ds);
    assert!(make_dataset(&style, 0, 1, 32, 32).is_err());
}

#[test]
fn fit_on_train_generalizes_to_test() {
    let ds = make_dataset(&planted_global_style(2), 5, 5, 32, 32).unwrap();
    let fit = fit_global_transform(&ds.train_pairs()).unwrap();
    assert!(residual(&fit, &ds.test_pairs()) < 1e-6);
}

#[test]
fn identity_style_copies_input() {
    let (img, mask) = render_synthetic_image(11, 40, 30).unwrap();
    let pair = apply_style(&SyntheticStyle::identity(0), &img, &mask).unwrap();
    assert_eq!(pair.target, pair.input);
}
