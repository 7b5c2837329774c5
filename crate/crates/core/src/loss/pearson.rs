use crate::error::{Error, Result};
use crate::image::Image;

/// Floor on `Var(d_render) * Var(d_est)` under the square root.
pub const PEARSON_EPS: f64 = 1e-8;

/// `1 - corr(d_render, d_est)` over the masked pixels, with its gradient
/// w.r.t. `d_render` (zero outside the mask).
///
/// The denominator is `sqrt(max(Var_r * Var_e, PEARSON_EPS))`, so the loss
/// is exactly invariant to positive affine rescaling whenever the variance
/// product clears the floor.
pub fn pearson_depth_loss(d_render: &Image, d_est: &Image, mask: &[bool]) -> Result<(f64, Image)> {
    d_render.check_shape(d_est, "pearson_depth_loss")?;
    if d_render.channels != 1 {
        return Err(Error::validation("depth images must have one channel"));
    }
    if mask.len() != d_render.data.len() {
        return Err(Error::validation(format!(
            "mask has {} entries, depth has {}",
            mask.len(),
            d_render.data.len()
        )));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "depth loss needs at least 2 masked pixels, got {n}"
        )));
    }
    let nf = n as f64;
    let masked = || {
        d_render
            .data
            .iter()
            .zip(&d_est.data)
            .zip(mask)
            .filter_map(|((r, e), &m)| m.then_some((*r, *e)))
    };
    let (sum_r, sum_e) = masked().fold((0.0, 0.0), |(a, b), (r, e)| (a + r, b + e));
    let (mean_r, mean_e) = (sum_r / nf, sum_e / nf);
    let (mut var_r, mut var_e, mut cov) = (0.0, 0.0, 0.0);
    for (r, e) in masked() {
        let (dr, de) = (r - mean_r, e - mean_e);
        var_r += dr * dr;
        var_e += de * de;
        cov += dr * de;
    }
    var_r /= nf;
    var_e /= nf;
    cov /= nf;
    if var_e == 0.0 {
        log::warn!("estimated depth is constant over the {n} masked pixels");
    }
    let product = var_r * var_e;
    let guarded = product < PEARSON_EPS;
    let denom = product.max(PEARSON_EPS).sqrt();
    let corr = cov / denom;

    let mut grad = Image::new(d_render.width, d_render.height, 1);
    for (k, g) in grad.data.iter_mut().enumerate() {
        if !mask[k] {
            continue;
        }
        let dr = d_render.data[k] - mean_r;
        let de = d_est.data[k] - mean_e;
        let mut d_corr = de / (nf * denom);
        if !guarded {
            d_corr -= corr * dr / (nf * var_r);
        }
        *g = -d_corr;
    }
    // Rounding can push |corr| a few ulps past 1; the gradient there is
    // already zero.
    Ok((1.0 - corr.clamp(-1.0, 1.0), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depth(values: &[f64]) -> Image {
        Image::from_data(values.len(), 1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn perfect_and_affine_correlation() {
        let d = depth(&[1.0, 2.5, 0.3, 4.0, 2.2]);
        let mask = vec![true; 5];
        assert!(pearson_depth_loss(&d, &d, &mask).unwrap().0.abs() < 1e-12);
        let e = depth(&d.data.iter().map(|v| 2.0 * v + 3.0).collect::<Vec<_>>());
        assert!(pearson_depth_loss(&d, &e, &mask).unwrap().0.abs() < 1e-12);
        let neg = depth(&d.data.iter().map(|v| -v).collect::<Vec<_>>());
        assert!((pearson_depth_loss(&neg, &d, &mask).unwrap().0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_masked_pixels() {
        let d = depth(&[1.0, 2.0, 3.0]);
        let err = pearson_depth_loss(&d, &d, &[false, true, false]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn constant_estimate_is_guarded() {
        let d = depth(&[1.0, 2.0, 3.0]);
        let e = depth(&[5.0, 5.0, 5.0]);
        let (v, g) = pearson_depth_loss(&d, &e, &[true; 3]).unwrap();
        assert_eq!(v, 1.0);
        assert!(g.data.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn gradient_is_zero_outside_mask() {
        let d = depth(&[1.0, 2.0, 3.0, 7.0]);
        let e = depth(&[0.5, 2.0, 2.5, 1.0]);
        let (_, g) = pearson_depth_loss(&d, &e, &[true, true, false, true]).unwrap();
        assert_eq!(g.data[2], 0.0);
    }
}
