//! Gaussian-windowed SSIM with an exact gradient.
//!
//! Local statistics use an 11×11 Gaussian window (σ = 1.5) applied as a
//! "same"-size correlation with zero padding, channel by channel. The
//! reported SSIM is the mean of the SSIM map over all pixels and channels.

use crate::error::Result;
use crate::image::Image;

pub const WINDOW_SIZE: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW_SIZE] {
    let half = (WINDOW_SIZE / 2) as f64;
    let mut taps = [0.0; WINDOW_SIZE];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Separable zero-padded blur of a single-channel plane.
fn blur(plane: &[f64], w: usize, h: usize, taps: &[f64; WINDOW_SIZE]) -> Vec<f64> {
    let half = (WINDOW_SIZE / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let sx = x as isize + k as isize - half;
                if sx >= 0 && (sx as usize) < w {
                    acc += t * plane[y * w + sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let sy = y as isize + k as isize - half;
                if sy >= 0 && (sy as usize) < h {
                    acc += t * tmp[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

struct ChannelStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    e_xx: Vec<f64>,
    e_yy: Vec<f64>,
    e_xy: Vec<f64>,
}

fn channel_stats(x: &[f64], y: &[f64], w: usize, h: usize, taps: &[f64; WINDOW_SIZE]) -> ChannelStats {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    ChannelStats {
        mu_x: blur(x, w, h, taps),
        mu_y: blur(y, w, h, taps),
        e_xx: blur(&xx, w, h, taps),
        e_yy: blur(&yy, w, h, taps),
        e_xy: blur(&xy, w, h, taps),
    }
}

fn planes(img: &Image) -> Vec<Vec<f64>> {
    (0..img.channels).map(|c| img.channel(c).data).collect()
}

/// Mean SSIM between `x` and `y`.
pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    Ok(ssim_with_grad(x, y, false)?.0)
}

/// Mean SSIM and, if requested, its gradient w.r.t. `x`.
pub(crate) fn ssim_with_grad(x: &Image, y: &Image, want_grad: bool) -> Result<(f64, Option<Image>)> {
    x.check_shape(y, "ssim")?;
    let (w, h, ch) = (x.width, x.height, x.channels);
    let count = (w * h * ch) as f64;
    let taps = gaussian_taps();
    let xs = planes(x);
    let ys = planes(y);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::new(w, h, ch));

    for c in 0..ch {
        let s = channel_stats(&xs[c], &ys[c], w, h, &taps);
        let n = w * h;
        // Partials of the SSIM map w.r.t. (mu_x, E[x²], E[xy]) per pixel.
        let mut d_mu = vec![0.0; n];
        let mut d_exx = vec![0.0; n];
        let mut d_exy = vec![0.0; n];
        for p in 0..n {
            let (mx, my) = (s.mu_x[p], s.mu_y[p]);
            let var_x = s.e_xx[p] - mx * mx;
            let var_y = s.e_yy[p] - my * my;
            let cov = s.e_xy[p] - mx * my;
            let n1 = 2.0 * mx * my + C1;
            let n2 = 2.0 * cov + C2;
            let d1 = mx * mx + my * my + C1;
            let d2 = var_x + var_y + C2;
            let map = n1 * n2 / (d1 * d2);
            total += map;
            if grad.is_some() {
                d_mu[p] = (2.0 * my * n2 - 2.0 * my * n1) / (d1 * d2) - map * (2.0 * mx / d1 - 2.0 * mx / d2);
                d_exx[p] = -map / d2;
                d_exy[p] = 2.0 * n1 / (d1 * d2);
            }
        }
        if let Some(g) = grad.as_mut() {
            // The window is symmetric, so the adjoint of the blur is the blur.
            let b_mu = blur(&d_mu, w, h, &taps);
            let b_exx = blur(&d_exx, w, h, &taps);
            let b_exy = blur(&d_exy, w, h, &taps);
            for p in 0..n {
                let v = (b_mu[p] + 2.0 * xs[c][p] * b_exx[p] + ys[c][p] * b_exy[p]) / count;
                g.data[p * ch + c] = v;
            }
        }
    }
    Ok((total / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..WINDOW_SIZE {
            assert_eq!(t[i], t[WINDOW_SIZE - 1 - i]);
        }
    }

    #[test]
    fn identical_images_have_unit_ssim() {
        let data: Vec<f64> = (0..12 * 9 * 3).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let img = Image::from_data(12, 9, 3, data).unwrap();
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(ssim(&Image::new(4, 4, 3), &Image::new(4, 5, 3)).is_err());
    }
}
