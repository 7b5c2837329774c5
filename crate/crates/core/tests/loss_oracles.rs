mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use splatfit::loss::{d_ssim_loss, l1_loss, pearson_depth_loss, ssim, total_loss_masked, LossWeights};
use splatfit::Image;

/// SSIM evaluated pixel by pixel with an explicit 2D window.
fn brute_force_ssim(x: &Image, y: &Image) -> f64 {
    let sigma: f64 = 1.5;
    let half = 5isize;
    let mut weights = Vec::new();
    for j in -half..=half {
        for i in -half..=half {
            weights.push((i, j, (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let z: f64 = weights.iter().map(|w| w.2).sum();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for c in 0..x.channels {
        for py in 0..x.height as isize {
            for px in 0..x.width as isize {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for &(i, j, w) in &weights {
                    let (qx, qy) = (px + i, py + j);
                    if qx < 0 || qy < 0 || qx >= x.width as isize || qy >= x.height as isize {
                        continue;
                    }
                    let a = x.get(qx as usize, qy as usize, c);
                    let b = y.get(qx as usize, qy as usize, c);
                    let w = w / z;
                    mx += w * a;
                    my += w * b;
                    sxx += w * a * a;
                    syy += w * b * b;
                    sxy += w * a * b;
                }
                let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
    }
    total / (x.width * x.height * x.channels) as f64
}

#[test]
fn ssim_matches_brute_force() {
    let mut rng = rng(31);
    for (w, h) in [(16, 16), (23, 9), (5, 4)] {
        let a = random_image(&mut rng, w, h, 3);
        let b = random_image(&mut rng, w, h, 3);
        assert!((ssim(&a, &b).unwrap() - brute_force_ssim(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn noise_against_constant() {
    let mut rng = rng(32);
    let noise = random_image(&mut rng, 24, 24, 3);
    let flat = Image::filled(24, 24, 3, 0.5);
    let (loss, _) = d_ssim_loss(&noise, &flat).unwrap();
    assert!(loss > 0.0 && loss <= 0.5);
    assert!((loss - (1.0 - brute_force_ssim(&noise, &flat)) / 2.0).abs() < 1e-12);
}

#[test]
fn d_ssim_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let mut rng = rng(40 + seed);
        let a = random_image(&mut rng, 16, 16, 3);
        let b = random_image(&mut rng, 16, 16, 3);
        let (_, grad) = d_ssim_loss(&a, &b).unwrap();
        let h = 1e-4;
        for i in 0..a.data.len() {
            let mut p = a.clone();
            p.data[i] += h;
            let mut m = a.clone();
            m.data[i] -= h;
            let fd = (d_ssim_loss(&p, &b).unwrap().0 - d_ssim_loss(&m, &b).unwrap().0) / (2.0 * h);
            assert!(close(grad.data[i], fd, 1e-4, 1e-9), "seed {seed} index {i}: {} vs {fd}", grad.data[i]);
        }
    }
}

#[test]
fn l1_gradient_matches_finite_differences() {
    let mut rng = rng(50);
    let a = random_image(&mut rng, 8, 8, 3);
    let b = offset_target(&mut rng, &a);
    let (_, grad) = l1_loss(&a, &b).unwrap();
    for i in 0..a.data.len() {
        let h = 1e-4;
        let mut p = a.clone();
        p.data[i] += h;
        let mut m = a.clone();
        m.data[i] -= h;
        let fd = (l1_loss(&p, &b).unwrap().0 - l1_loss(&m, &b).unwrap().0) / (2.0 * h);
        assert!(close(grad.data[i], fd, 1e-4, 1e-9));
    }
}

#[test]
fn pearson_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let mut rng = rng(60 + seed);
        let d = random_image(&mut rng, 12, 12, 1);
        let e = random_image(&mut rng, 12, 12, 1);
        let mask: Vec<bool> = (0..144).map(|_| rng.random_bool(0.7)).collect();
        let (_, grad) = pearson_depth_loss(&d, &e, &mask).unwrap();
        for i in 0..144 {
            let h = 1e-5;
            let mut p = d.clone();
            p.data[i] += h;
            let mut m = d.clone();
            m.data[i] -= h;
            let fd = (pearson_depth_loss(&p, &e, &mask).unwrap().0 - pearson_depth_loss(&m, &e, &mask).unwrap().0)
                / (2.0 * h);
            assert!(close(grad.data[i], fd, 1e-4, 1e-9), "{i}: {} vs {fd}", grad.data[i]);
            if !mask[i] {
                assert_eq!(grad.data[i], 0.0);
            }
        }
    }
}

#[test]
fn total_loss_is_the_weighted_sum_of_its_terms() {
    let mut rng = rng(70);
    let color = random_image(&mut rng, 16, 16, 3);
    let target = random_image(&mut rng, 16, 16, 3);
    let depth = random_image(&mut rng, 16, 16, 1);
    let d_est = random_image(&mut rng, 16, 16, 1);
    let mask: Vec<bool> = (0..256).map(|_| rng.random_bool(0.8)).collect();
    let weights = LossWeights { lambda: 0.2, w_depth: 0.05 };
    let t = total_loss_masked(&color, &depth, &target, &d_est, &mask, &weights).unwrap();
    let l1 = l1_loss(&color, &target).unwrap().0;
    let ds = d_ssim_loss(&color, &target).unwrap().0;
    let dp = pearson_depth_loss(&depth, &d_est, &mask).unwrap().0;
    assert!((t.breakdown.total - (0.8 * l1 + 0.2 * ds + 0.05 * dp)).abs() < 1e-12);
    assert_eq!(t.breakdown.l1, l1);
    assert_eq!(t.breakdown.d_ssim, ds);
    assert_eq!(t.breakdown.depth, Some(dp));
}

fn depth_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (4usize..64).prop_flat_map(|n| {
        (
            prop::collection::vec(0.5f64..5.0, n),
            prop::collection::vec(0.5f64..5.0, n),
        )
    })
}

proptest! {
    #[test]
    fn pearson_is_bounded((d, e) in depth_strategy()) {
        let n = d.len();
        let d = Image::from_data(n, 1, 1, d).unwrap();
        let e = Image::from_data(n, 1, 1, e).unwrap();
        let (v, _) = pearson_depth_loss(&d, &e, &vec![true; n]).unwrap();
        prop_assert!((0.0..=2.0 + 1e-6).contains(&v));
    }

    #[test]
    fn pearson_is_affine_invariant((d, e) in depth_strategy(), a in 0.1f64..10.0, b in -10.0f64..10.0) {
        let n = d.len();
        let di = Image::from_data(n, 1, 1, d.clone()).unwrap();
        let scaled = Image::from_data(n, 1, 1, d.iter().map(|v| a * v + b).collect()).unwrap();
        let e = Image::from_data(n, 1, 1, e).unwrap();
        let mask = vec![true; n];
        let (v0, _) = pearson_depth_loss(&di, &e, &mask).unwrap();
        let (v1, _) = pearson_depth_loss(&scaled, &e, &mask).unwrap();
        prop_assume!(v0.is_finite());
        prop_assert!((v0 - v1).abs() < 1e-9);
    }
}
