//! Photometric and depth-correlation objectives with gradients w.r.t. the
//! rendered images.

mod pearson;
pub mod ssim;

pub use pearson::{pearson_depth_loss, PEARSON_EPS};
pub use ssim::ssim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::RenderOutput;

/// Pixels whose accumulated alpha is at least this enter the depth loss.
pub const DEPTH_MASK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// D-SSIM share of the photometric term.
    pub lambda: f64,
    pub w_depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            w_depth: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::validation(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.w_depth >= 0.0) {
            return Err(Error::validation(format!("w_depth {} must be >= 0", self.w_depth)));
        }
        Ok(())
    }
}

/// Mean absolute error and its gradient w.r.t. `rendered`.
pub fn l1_loss(rendered: &Image, target: &Image) -> Result<(f64, Image)> {
    rendered.check_shape(target, "l1_loss")?;
    let count = rendered.data.len().max(1) as f64;
    let mut grad = Image::new(rendered.width, rendered.height, rendered.channels);
    let mut sum = 0.0;
    for ((g, r), t) in grad.data.iter_mut().zip(&rendered.data).zip(&target.data) {
        let d = r - t;
        sum += d.abs();
        *g = if d > 0.0 {
            1.0 / count
        } else if d < 0.0 {
            -1.0 / count
        } else {
            0.0
        };
    }
    Ok((sum / count, grad))
}

/// `(1 - SSIM) / 2` and its gradient w.r.t. `rendered`.
pub fn d_ssim_loss(rendered: &Image, target: &Image) -> Result<(f64, Image)> {
    let (s, grad) = ssim::ssim_with_grad(rendered, target, true)?;
    let mut grad = grad.expect("gradient requested");
    grad.data.iter_mut().for_each(|g| *g *= -0.5);
    Ok(((1.0 - s) / 2.0, grad))
}

/// Value of each term of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l1: f64,
    pub d_ssim: f64,
    /// `None` when the mask held fewer than two pixels.
    pub depth: Option<f64>,
}

/// Loss value plus upstream gradients for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub breakdown: LossBreakdown,
    pub d_color: Image,
    pub d_depth: Image,
}

/// Depth-loss mask: pixels with accumulated alpha at or above
/// [`DEPTH_MASK_THRESHOLD`].
pub fn depth_mask(accum_alpha: &Image) -> Vec<bool> {
    accum_alpha.data.iter().map(|&a| a >= DEPTH_MASK_THRESHOLD).collect()
}

/// `(1-λ)·L1 + λ·D-SSIM + w_depth·L_depth` on one rendered view.
pub fn total_loss(
    rendered: &RenderOutput,
    target: &Image,
    d_est: &Image,
    weights: &LossWeights,
) -> Result<TotalLoss> {
    let mask = depth_mask(&rendered.accum_alpha);
    total_loss_masked(&rendered.color, &rendered.depth, target, d_est, &mask, weights)
}

/// [`total_loss`] with an explicit depth mask, which is treated as a
/// constant. If fewer than two pixels are masked in, the depth term is
/// dropped for this view.
pub fn total_loss_masked(
    color: &Image,
    depth: &Image,
    target: &Image,
    d_est: &Image,
    mask: &[bool],
    weights: &LossWeights,
) -> Result<TotalLoss> {
    weights.validate()?;
    let (l1, g_l1) = l1_loss(color, target)?;
    let mut d_color = Image::new(color.width, color.height, color.channels);
    let mut d_ssim = 0.0;
    if weights.lambda > 0.0 {
        let (v, g_ssim) = d_ssim_loss(color, target)?;
        d_ssim = v;
        for ((d, a), b) in d_color.data.iter_mut().zip(&g_l1.data).zip(&g_ssim.data) {
            *d = (1.0 - weights.lambda) * a + weights.lambda * b;
        }
    } else {
        d_color = g_l1;
    }

    let mut d_depth = Image::new(depth.width, depth.height, 1);
    let mut depth_term = None;
    if weights.w_depth > 0.0 {
        depth.check_shape(d_est, "depth loss")?;
        if mask.iter().filter(|&&m| m).count() >= 2 {
            let (v, g) = pearson_depth_loss(depth, d_est, mask)?;
            depth_term = Some(v);
            for (d, gv) in d_depth.data.iter_mut().zip(&g.data) {
                *d = weights.w_depth * gv;
            }
        }
    }
    let total = (1.0 - weights.lambda) * l1
        + weights.lambda * d_ssim
        + weights.w_depth * depth_term.unwrap_or(0.0);
    Ok(TotalLoss {
        breakdown: LossBreakdown {
            total,
            l1,
            d_ssim,
            depth: depth_term,
        },
        d_color,
        d_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, c: usize, f: impl Fn(usize) -> f64) -> Image {
        Image::from_data(w, h, c, (0..w * h * c).map(f).collect()).unwrap()
    }

    #[test]
    fn l1_examples() {
        let a = img(4, 3, 3, |i| (i % 7) as f64 / 7.0);
        assert_eq!(l1_loss(&a, &a).unwrap().0, 0.0);
        let zeros = Image::new(4, 3, 3);
        let ones = Image::filled(4, 3, 3, 1.0);
        assert_eq!(l1_loss(&zeros, &ones).unwrap().0, 1.0);
        let r = Image::filled(1, 1, 1, 0.5);
        let t = Image::filled(1, 1, 1, 0.25);
        let (v, g) = l1_loss(&r, &t).unwrap();
        assert_eq!(v, 0.25);
        assert_eq!(g.data, vec![1.0]);
        assert!(l1_loss(&zeros, &Image::new(4, 3, 1)).is_err());
    }

    #[test]
    fn d_ssim_identical_is_zero() {
        let a = img(16, 16, 3, |i| ((i * 13) % 17) as f64 / 17.0);
        assert!(d_ssim_loss(&a, &a).unwrap().0.abs() < 1e-12);
    }

    #[test]
    fn pure_l1_and_pure_dssim() {
        let a = img(8, 8, 3, |i| ((i * 5) % 11) as f64 / 11.0);
        let b = img(8, 8, 3, |i| ((i * 3) % 7) as f64 / 7.0);
        let depth = img(8, 8, 1, |i| i as f64);
        let mask = vec![true; 64];
        let w = LossWeights { lambda: 0.0, w_depth: 0.0 };
        let t = total_loss_masked(&a, &depth, &b, &depth, &mask, &w).unwrap();
        assert_eq!(t.breakdown.total, l1_loss(&a, &b).unwrap().0);
        let w = LossWeights { lambda: 1.0, w_depth: 0.0 };
        let t = total_loss_masked(&a, &depth, &b, &depth, &mask, &w).unwrap();
        assert_eq!(t.breakdown.total, d_ssim_loss(&a, &b).unwrap().0);
        assert!(t.d_depth.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sparse_mask_drops_depth_term() {
        let a = img(4, 4, 3, |i| (i % 3) as f64 / 3.0);
        let depth = img(4, 4, 1, |i| i as f64);
        let mut mask = vec![false; 16];
        mask[3] = true;
        let t = total_loss_masked(&a, &depth, &a, &depth, &mask, &LossWeights::default()).unwrap();
        assert_eq!(t.breakdown.depth, None);
    }

    #[test]
    fn weights_are_validated() {
        assert!(LossWeights { lambda: 1.5, w_depth: 0.0 }.validate().is_err());
        assert!(LossWeights { lambda: 0.5, w_depth: -1.0 }.validate().is_err());
    }
}
