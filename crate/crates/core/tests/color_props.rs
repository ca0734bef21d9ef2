use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semstyle::color::{
    apply_transform, identity_transform, lab_pixel_to_srgb, lab_to_srgb, mean_l2, quadratic_basis, srgb_pixel_to_lab,
    srgb_to_lab, ColorTransform, Lab, LabImage, RgbImage,
};
use semstyle_oracle as oracle;

fn lab() -> impl Strategy<Value = Lab> {
    (0.0f64..100.0, -90.0f64..90.0, -90.0f64..90.0).prop_map(|(l, a, b)| Lab::new(l, a, b))
}

fn transform() -> impl Strategy<Value = ColorTransform> {
    prop::collection::vec(-2.0f64..2.0, 30).prop_map(|v| ColorTransform::from_flat(&v))
}

#[test]
fn white_black_and_red() {
    let w = srgb_pixel_to_lab([255, 255, 255]);
    assert!((w.l - 100.0).abs() < 1e-2 && w.a.abs() < 1e-2 && w.b.abs() < 1e-2);
    assert_eq!(srgb_pixel_to_lab([0, 0, 0]), Lab::new(0.0, 0.0, 0.0));

    let red = srgb_pixel_to_lab([255, 0, 0]);
    let (l, a, b) = oracle::srgb_to_lab(255, 0, 0);
    assert!((red.l - l).abs() < 0.1 && (red.a - a).abs() < 0.1 && (red.b - b).abs() < 0.1);
    assert!((red.l - 53.24).abs() < 0.1 && (red.a - 80.09).abs() < 0.1 && (red.b - 67.20).abs() < 0.1);
}

#[test]
fn conversion_agrees_with_textbook_formulas() {
    let mut worst: f64 = 0.0;
    for r in (0..=255).step_by(15) {
        for g in (0..=255).step_by(15) {
            for b in (0..=255).step_by(15) {
                let got = srgb_pixel_to_lab([r, g, b]);
                let (l, a, bb) = oracle::srgb_to_lab(r, g, b);
                worst = worst.max((got.l - l).abs()).max((got.a - a).abs()).max((got.b - bb).abs());
            }
        }
    }
    // The reference uses rounded matrix and white constants.
    assert!(worst < 0.05, "{worst}");
}

#[test]
fn over_bright_lab_is_neutral_white() {
    let px = lab_pixel_to_srgb(Lab::new(200.0, 0.0, 0.0));
    assert!(px[0] == px[1] && px[1] == px[2]);
    assert_eq!(px, [255, 255, 255]);
}

#[test]
fn grays_and_lattice_round_trip_exactly() {
    let steps: Vec<u8> = (0..17).map(|i| (i * 255 / 16) as u8).collect();
    let mut px: Vec<[u8; 3]> = (0..=255).map(|g| [g, g, g]).collect();
    for &r in &steps {
        for &g in &steps {
            for &b in &steps {
                px.push([r, g, b]);
            }
        }
    }
    let img = RgbImage::new(px.len(), 1, px).unwrap();
    let lab = srgb_to_lab(&img);
    assert!(lab.within_srgb_envelope());
    assert_eq!(lab_to_srgb(&lab), img);
}

#[test]
fn basis_invariants_on_many_random_colors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100_000 {
        let c = Lab::new(rng.gen_range(0.0..100.0), rng.gen_range(-100.0..100.0), rng.gen_range(-110.0..100.0));
        let v = quadratic_basis(c).0;
        assert_eq!(v[9], 1.0);
        assert_eq!(v[0], v[6] * v[6]);
        assert_eq!(v[1], v[7] * v[7]);
        assert_eq!(v[2], v[8] * v[8]);
        assert_eq!(v[3], v[6] * v[7]);
        assert_eq!(v[4], v[6] * v[8]);
        assert_eq!(v[5], v[7] * v[8]);
    }
}

#[test]
fn basis_examples() {
    assert_eq!(quadratic_basis(Lab::new(0.0, 0.0, 0.0)).0, [0., 0., 0., 0., 0., 0., 0., 0., 0., 1.]);
    assert_eq!(quadratic_basis(Lab::new(1.0, 1.0, 1.0)).0, [1.0; 10]);
    assert_eq!(quadratic_basis(Lab::new(2.0, 3.0, -1.0)).0, [4., 9., 1., 6., -2., -3., 2., 3., -1., 1.]);
}

#[test]
fn identity_transform_examples() {
    let id = identity_transform();
    assert_eq!(id.to_flat().iter().filter(|&&v| v != 0.0).count(), 3);
    let c = Lab::new(50.0, 10.0, -10.0);
    assert_eq!(apply_transform(&id, &quadratic_basis(c)), c);
    let img = LabImage::new(2, 1, vec![c, Lab::new(3.0, -4.0, 5.0)]).unwrap();
    assert_eq!(mean_l2(&img.map(|p| id.apply_to(p)), &img).unwrap(), 0.0);
}

#[test]
fn mean_l2_examples() {
    let a = LabImage::new(3, 2, (0..6).map(|i| Lab::new(i as f64, 1.0, -2.0)).collect()).unwrap();
    let b = a.map(|c| Lab::new(c.l + 3.0, c.a, c.b + 4.0));
    assert_eq!(mean_l2(&a, &a).unwrap(), 0.0);
    assert!((mean_l2(&a, &b).unwrap() - 5.0).abs() < 1e-12);
    let c = LabImage::new(2, 3, a.pixels().to_vec()).unwrap();
    assert!(mean_l2(&a, &c).is_err());
}

#[test]
fn png_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    let img = RgbImage::new(3, 2, vec![[1, 2, 3], [4, 5, 6], [7, 8, 9], [250, 0, 128], [0, 0, 0], [255, 255, 255]]).unwrap();
    img.write_png(&path).unwrap();
    assert_eq!(RgbImage::read_png(&path).unwrap(), img);
    assert!(RgbImage::read_png(dir.path().join("missing.png")).is_err());
}

proptest! {
    #[test]
    fn apply_matches_dot_product_loop(t in transform(), c in lab()) {
        let v = quadratic_basis(c).0;
        let got = apply_transform(&t, &quadratic_basis(c)).to_array();
        for r in 0..3 {
            let mut acc = 0.0;
            for k in 0..10 {
                acc += t.m[r][k] * v[k];
            }
            prop_assert!((got[r] - acc).abs() <= 1e-12 * acc.abs().max(1.0));
        }
        prop_assert_eq!(apply_transform(&ColorTransform::zero(), &quadratic_basis(c)), Lab::new(0.0, 0.0, 0.0));
        prop_assert_eq!(identity_transform().apply_to(c), c);
    }

    #[test]
    fn apply_is_linear_in_the_transform(m1 in transform(), m2 in transform(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, c in lab()) {
        let (f1, f2) = (m1.to_flat(), m2.to_flat());
        let mix: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = ColorTransform::from_flat(&mix).apply_to(c).to_array();
        let (a1, a2) = (m1.apply_to(c).to_array(), m2.apply_to(c).to_array());
        for r in 0..3 {
            let rhs = alpha * a1[r] + beta * a2[r];
            prop_assert!((lhs[r] - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "{} vs {}", lhs[r], rhs);
        }
    }

    #[test]
    fn mean_l2_is_a_symmetric_nonnegative_distance(
        a in prop::collection::vec(lab(), 6),
        b in prop::collection::vec(lab(), 6),
    ) {
        let (a, b) = (LabImage::new(3, 2, a).unwrap(), LabImage::new(3, 2, b).unwrap());
        let (ab, ba) = (mean_l2(&a, &b).unwrap(), mean_l2(&b, &a).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab == 0.0, a == b);
    }

    #[test]
    fn every_srgb_triple_lands_in_the_envelope(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
        let img = RgbImage::new(1, 1, vec![[r, g, b]]).unwrap();
        prop_assert!(srgb_to_lab(&img).within_srgb_envelope());
        prop_assert_eq!(lab_pixel_to_srgb(srgb_pixel_to_lab([r, g, b])), [r, g, b]);
    }
}
