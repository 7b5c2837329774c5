use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gaussian::GaussianCloud;
use crate::image::Image;
use crate::loss::ssim;
use crate::render::{render_with, RenderSettings};

use super::View;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

/// `10·log10(1 / MSE)` for images in [0, 1], capped at [`PSNR_CAP`].
pub fn psnr(rendered: &Image, target: &Image) -> Result<f64> {
    rendered.check_shape(target, "psnr")?;
    let n = rendered.data.len().max(1) as f64;
    let mse = rendered
        .data
        .iter()
        .zip(&target.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Renders every view and scores it against its image.
pub fn evaluate(
    cloud: &GaussianCloud,
    views: &[View],
    background: [f64; 3],
    settings: &RenderSettings,
) -> Result<EvalReport> {
    let per_view: Vec<ViewMetrics> = views
        .par_iter()
        .map(|v| {
            let out = render_with(cloud, &v.camera, background, settings);
            Ok(ViewMetrics {
                psnr: psnr(&out.color, &v.image)?,
                ssim: ssim(&out.color, &v.image)?,
            })
        })
        .collect::<Result<_>>()?;
    let n = per_view.len().max(1) as f64;
    Ok(EvalReport {
        mean_psnr: per_view.iter().map(|m| m.psnr).sum::<f64>() / n,
        mean_ssim: per_view.iter().map(|m| m.ssim).sum::<f64>() / n,
        views: per_view,
    })
}
