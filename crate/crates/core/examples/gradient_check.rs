//! Compares the analytic backward pass with central finite differences of
//! the full objective on a small random scene.
//!
//! cargo run --release --example gradient_check -- [seed]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatfit::loss::{depth_mask, total_loss_masked, LossWeights};
use splatfit::render::{render_backward_with, render_with, RenderSettings};
use splatfit::{Camera, GaussianCloud, Image};

fn main() -> splatfit::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = Camera::look_at([0.3, -0.2, -3.0], [0.0; 3], [0.0, -1.0, 0.0], 22.0, 16, 16)?;
    let mut cloud = GaussianCloud::new();
    for _ in 0..6 {
        cloud.push_raw(
            [rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(-0.3..0.3)],
            [rng.random_range(-2.6..-1.4), rng.random_range(-2.6..-1.4), rng.random_range(-2.6..-1.4)],
            [1.0, rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.2],
            rng.random_range(-1.0..1.5),
            [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
        );
    }
    // Skipping faint alphas is a step; finite differences need it off.
    let settings = RenderSettings {
        alpha_skip: 0.0,
        ..RenderSettings::default()
    };
    let bg = [0.1, 0.1, 0.1];
    let target = Image::from_data(16, 16, 3, (0..768).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let d_est = Image::from_data(16, 16, 1, (0..256).map(|_| rng.random_range(1.0..4.0)).collect())?;
    let weights = LossWeights::default();
    let first = render_with(&cloud, &camera, bg, &settings);
    let mask = depth_mask(&first.accum_alpha);

    let loss = |c: &GaussianCloud| -> splatfit::Result<f64> {
        let r = render_with(c, &camera, bg, &settings);
        Ok(total_loss_masked(&r.color, &r.depth, &target, &d_est, &mask, &weights)?.breakdown.total)
    };
    let t = total_loss_masked(&first.color, &first.depth, &target, &d_est, &mask, &weights)?;
    let grads = render_backward_with(&cloud, &camera, bg, &t.d_color, &t.d_depth, &settings)?.grads;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    println!("{:<16} {:>14} {:>14}", "parameter", "analytic", "numeric");
    for i in 0..cloud.len() {
        let probes: [(&str, fn(&mut GaussianCloud, usize) -> &mut f64, f64); 4] = [
            ("position.x", |c, i| &mut c.positions[i][0], grads.positions[i][0]),
            ("log_scale.y", |c, i| &mut c.log_scales[i][1], grads.log_scales[i][1]),
            ("rotation.x", |c, i| &mut c.rotations[i][1], grads.rotations[i][1]),
            ("opacity", |c, i| &mut c.opacity_logits[i], grads.opacity_logits[i]),
        ];
        for (name, field, analytic) in probes {
            let mut plus = cloud.clone();
            *field(&mut plus, i) += h;
            let mut minus = cloud.clone();
            *field(&mut minus, i) -= h;
            let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
            println!("{:<16} {analytic:>14.6e} {numeric:>14.6e}", format!("{name}[{i}]"));
        }
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
