//! Image quality and depth metrics on a rendered view: PSNR, SSIM and the
//! depth-correlation loss, including its invariance to affine rescaling.
//!
//! cargo run --release --example metrics

use splatfit::io::{generate_synthetic, SyntheticSpec};
use splatfit::loss::{depth_mask, pearson_depth_loss, ssim};
use splatfit::render::render;
use splatfit::trainer::psnr;
use splatfit::Image;

fn main() -> splatfit::Result<()> {
    let syn = generate_synthetic(&SyntheticSpec::named("cluster")?, 0)?;
    let view = &syn.scene.test[0];
    let out = render(&syn.ground_truth, &view.camera, [0.0; 3]);
    println!("ground truth vs stored view: psnr {:.2} dB ssim {:.4}", psnr(&out.color, &view.image)?, ssim(&out.color, &view.image)?);

    let mut dimmed = out.color.clone();
    dimmed.data.iter_mut().for_each(|v| *v *= 0.8);
    println!("20% dimmer:                  psnr {:.2} dB ssim {:.4}", psnr(&dimmed, &view.image)?, ssim(&dimmed, &view.image)?);

    let mask = depth_mask(&out.accum_alpha);
    let d = &out.depth;
    let rescaled = Image::from_data(d.width, d.height, 1, d.data.iter().map(|v| 0.25 * v + 7.0).collect())?;
    let flipped = Image::from_data(d.width, d.height, 1, d.data.iter().map(|v| -v).collect())?;
    println!("depth loss vs itself {:.2e}", pearson_depth_loss(d, d, &mask)?.0);
    println!("depth loss vs 0.25 d + 7 {:.2e}", pearson_depth_loss(&rescaled, d, &mask)?.0);
    println!("depth loss vs -d {:.6}", pearson_depth_loss(&flipped, d, &mask)?.0);
    Ok(())
}
