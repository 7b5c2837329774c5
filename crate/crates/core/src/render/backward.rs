use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;

use super::project::projection_jacobian;
use super::{bin_rows, project_with, trace_pixel, RenderSettings, Splat, ROWS_PER_CHUNK};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{covariance_unchecked, normalize_quat, quat_norm, rotation_matrix, GaussianCloud, GradientBuffer};
use crate::image::Image;

/// Result of the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardOutput {
    /// dL/d(raw parameter) for every primitive.
    pub grads: GradientBuffer,
    /// dL/dα w.r.t. activated opacity, one per primitive.
    pub alpha_grads: Vec<f64>,
    /// Norm of dL/d(mean2d) in normalized device coordinates, the
    /// view-space positional gradient of the standard densifier.
    pub mean2d_grad_norms: Vec<f64>,
    /// Whether the primitive's footprint touched the image.
    pub visible: Vec<bool>,
}

// Per-splat accumulators in pixel space.
const G_MX: usize = 0;
const G_MY: usize = 1;
const G_CA: usize = 2;
const G_CB: usize = 3;
const G_CC: usize = 4;
const G_ALPHA: usize = 5;
const G_COLOR: usize = 6;
const G_DEPTH: usize = 9;
const G_LEN: usize = 10;

pub fn render_backward(
    cloud: &GaussianCloud,
    camera: &Camera,
    background: [f64; 3],
    d_color: &Image,
    d_depth: &Image,
) -> Result<BackwardOutput> {
    render_backward_with(cloud, camera, background, d_color, d_depth, &RenderSettings::default())
}

/// Exact gradients of the rendered color and depth images w.r.t. all raw
/// parameters, given upstream gradients `d_color` (H×W×3) and `d_depth`
/// (H×W).
pub fn render_backward_with(
    cloud: &GaussianCloud,
    camera: &Camera,
    background: [f64; 3],
    d_color: &Image,
    d_depth: &Image,
    settings: &RenderSettings,
) -> Result<BackwardOutput> {
    let (w, h) = (camera.width, camera.height);
    if (d_color.width, d_color.height, d_color.channels) != (w, h, 3) {
        return Err(Error::validation(format!(
            "color gradient is {}x{}x{}, camera expects {w}x{h}x3",
            d_color.width, d_color.height, d_color.channels
        )));
    }
    if (d_depth.width, d_depth.height, d_depth.channels) != (w, h, 1) {
        return Err(Error::validation(format!(
            "depth gradient is {}x{}x{}, camera expects {w}x{h}x1",
            d_depth.width, d_depth.height, d_depth.channels
        )));
    }

    let projected = project_with(cloud, camera, settings);
    let splats: Vec<Splat> = projected.iter().map(|p| p.splat()).collect();
    let bins = bin_rows(&projected, h);
    let n_slots = projected.len();

    // Accumulate pixel-space gradients per fixed chunk of rows, then reduce
    // chunks in order so the sum is independent of scheduling.
    let chunks: Vec<Vec<[f64; G_LEN]>> = (0..h.div_ceil(ROWS_PER_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![[0.0; G_LEN]; n_slots];
            let mut candidates = Vec::new();
            let mut trace = Vec::new();
            let y_end = ((chunk + 1) * ROWS_PER_CHUNK).min(h);
            for y in chunk * ROWS_PER_CHUNK..y_end {
                let py = y as f64 + 0.5;
                for x in 0..w {
                    candidates.clear();
                    candidates.extend(bins.rows[y].iter().copied().filter(|&s| {
                        let (x0, x1) = bins.x_range[s];
                        x0 <= x && x <= x1
                    }));
                    if candidates.is_empty() {
                        continue;
                    }
                    let g_rgb = [d_color.get(x, y, 0), d_color.get(x, y, 1), d_color.get(x, y, 2)];
                    let g_d = d_depth.get(x, y, 0);
                    if g_rgb == [0.0; 3] && g_d == 0.0 {
                        continue;
                    }
                    let t_final = trace_pixel(&splats, &candidates, x as f64 + 0.5, py, settings, &mut trace);
                    // Suffix sums of everything composited behind the current entry.
                    let mut behind_color = background.map(|b| b * t_final);
                    let mut behind_depth = 0.0;
                    for e in trace.iter().rev() {
                        let sp = &splats[e.slot];
                        let g = &mut acc[e.slot];
                        let weight = e.alpha * e.transmittance;
                        for k in 0..3 {
                            g[G_COLOR + k] += weight * g_rgb[k];
                        }
                        g[G_DEPTH] += weight * g_d;

                        let mut d_alpha = e.transmittance
                            * (sp.color[0] * g_rgb[0] + sp.color[1] * g_rgb[1] + sp.color[2] * g_rgb[2] + sp.depth * g_d);
                        d_alpha -= (behind_color[0] * g_rgb[0]
                            + behind_color[1] * g_rgb[1]
                            + behind_color[2] * g_rgb[2]
                            + behind_depth * g_d)
                            / (1.0 - e.alpha);
                        for k in 0..3 {
                            behind_color[k] += sp.color[k] * weight;
                        }
                        behind_depth += sp.depth * weight;

                        if e.clamped {
                            continue;
                        }
                        g[G_ALPHA] += d_alpha * e.falloff;
                        // d(power) where falloff = exp(power)
                        let d_power = d_alpha * sp.opacity * e.falloff;
                        let [ca, cb, cc] = sp.conic;
                        g[G_MX] += d_power * (ca * e.dx + cb * e.dy);
                        g[G_MY] += d_power * (cb * e.dx + cc * e.dy);
                        g[G_CA] += -0.5 * d_power * e.dx * e.dx;
                        g[G_CB] += -d_power * e.dx * e.dy;
                        g[G_CC] += -0.5 * d_power * e.dy * e.dy;
                    }
                }
            }
            acc
        })
        .collect();

    let mut pixel_grads = vec![[0.0; G_LEN]; n_slots];
    for chunk in &chunks {
        for (dst, src) in pixel_grads.iter_mut().zip(chunk) {
            for k in 0..G_LEN {
                dst[k] += src[k];
            }
        }
    }

    let n = cloud.len();
    let mut out = BackwardOutput {
        grads: GradientBuffer::zeros(n),
        alpha_grads: vec![0.0; n],
        mean2d_grad_norms: vec![0.0; n],
        visible: vec![false; n],
    };
    let cam_rot = camera.rotation_matrix();
    for (p, g) in projected.iter().zip(&pixel_grads) {
        let i = p.index;
        out.visible[i] = p.bbox.is_some();
        out.alpha_grads[i] = g[G_ALPHA];
        out.mean2d_grad_norms[i] = (g[G_MX] * w as f64 * 0.5).hypot(g[G_MY] * h as f64 * 0.5);

        let alpha = p.opacity;
        out.grads.opacity_logits[i] = g[G_ALPHA] * alpha * (1.0 - alpha);
        for k in 0..3 {
            out.grads.colors_raw[i][k] = g[G_COLOR + k] * p.color[k] * (1.0 - p.color[k]);
        }

        // conic -> 2D covariance: dL/dS = -K G K for K = S^-1.
        let [ka, kb, kc] = p.conic();
        let conic = Matrix2::new(ka, kb, kb, kc);
        let g_conic = Matrix2::new(g[G_CA], 0.5 * g[G_CB], 0.5 * g[G_CB], g[G_CC]);
        let g_cov2d = -(conic * g_conic * conic);

        let t = Vector3::from(p.cam_point);
        let jac = projection_jacobian(camera, &t);
        let jw = jac * cam_rot;
        let q_raw = cloud.rotations[i];
        let q = normalize_quat(q_raw);
        let scale = cloud.scale(i);
        let sigma = covariance_unchecked(&scale, &q);

        let g_sigma: Matrix3<f64> = jw.transpose() * g_cov2d * jw;
        let g_jw = 2.0 * g_cov2d * jw * sigma;
        let g_jac = g_jw * cam_rot.transpose();

        let (fx, fy) = (camera.fx, camera.fy);
        let iz = 1.0 / t.z;
        let iz2 = iz * iz;
        let iz3 = iz2 * iz;
        let g_t = Vector3::new(
            g_jac[(0, 2)] * (-fx * iz2) + g[G_MX] * fx * iz,
            g_jac[(1, 2)] * (-fy * iz2) + g[G_MY] * fy * iz,
            g_jac[(0, 0)] * (-fx * iz2)
                + g_jac[(0, 2)] * (2.0 * fx * t.x * iz3)
                + g_jac[(1, 1)] * (-fy * iz2)
                + g_jac[(1, 2)] * (2.0 * fy * t.y * iz3)
                - g[G_MX] * fx * t.x * iz2
                - g[G_MY] * fy * t.y * iz2
                + g[G_DEPTH],
        );
        let g_mu = cam_rot.transpose() * g_t;
        out.grads.positions[i] = [g_mu.x, g_mu.y, g_mu.z];

        // Sigma = M M^T with M = R diag(s).
        let r = rotation_matrix(&q);
        let m = r * Matrix3::from_diagonal(&Vector3::from(scale));
        let g_m = 2.0 * g_sigma * m;
        let mut g_r = Matrix3::zeros();
        for col in 0..3 {
            let mut g_s = 0.0;
            for row in 0..3 {
                g_s += g_m[(row, col)] * r[(row, col)];
                g_r[(row, col)] = g_m[(row, col)] * scale[col];
            }
            out.grads.log_scales[i][col] = g_s * scale[col];
        }
        let g_qn = rotation_vjp(&q, &g_r);
        let dot: f64 = (0..4).map(|k| q[k] * g_qn[k]).sum();
        let norm = quat_norm(&q_raw);
        for k in 0..4 {
            out.grads.rotations[i][k] = (g_qn[k] - q[k] * dot) / norm;
        }
    }
    Ok(out)
}

/// Pulls a gradient on the rotation matrix back onto the unit quaternion.
fn rotation_vjp(q: &[f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = *q;
    let g = |r: usize, c: usize| g[(r, c)];
    let dw = -2.0 * z * g(0, 1) + 2.0 * y * g(0, 2) + 2.0 * z * g(1, 0) - 2.0 * x * g(1, 2)
        - 2.0 * y * g(2, 0)
        + 2.0 * x * g(2, 1);
    let dx = 2.0 * y * g(0, 1) + 2.0 * z * g(0, 2) + 2.0 * y * g(1, 0) - 4.0 * x * g(1, 1)
        - 2.0 * w * g(1, 2)
        + 2.0 * z * g(2, 0)
        + 2.0 * w * g(2, 1)
        - 4.0 * x * g(2, 2);
    let dy = -4.0 * y * g(0, 0) + 2.0 * x * g(0, 1) + 2.0 * w * g(0, 2) + 2.0 * x * g(1, 0)
        + 2.0 * z * g(1, 2)
        - 2.0 * w * g(2, 0)
        + 2.0 * z * g(2, 1)
        - 4.0 * y * g(2, 2);
    let dz = -4.0 * z * g(0, 0) - 2.0 * w * g(0, 1) + 2.0 * x * g(0, 2) + 2.0 * w * g(1, 0)
        - 4.0 * z * g(1, 1)
        + 2.0 * y * g(1, 2)
        + 2.0 * x * g(2, 0)
        + 2.0 * y * g(2, 1);
    [dw, dx, dy, dz]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera(w: usize, h: usize) -> Camera {
        Camera {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            fx: 20.0,
            fy: 20.0,
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            width: w,
            height: h,
        }
    }

    #[test]
    fn rotation_vjp_matches_finite_differences() {
        let q = normalize_quat([0.8, -0.3, 0.4, 0.2]);
        let g = Matrix3::new(0.3, -1.2, 0.5, 0.7, 0.1, -0.4, 0.9, 0.2, -0.6);
        let analytic = rotation_vjp(&q, &g);
        let h = 1e-6;
        for k in 0..4 {
            let (mut qp, mut qm) = (q, q);
            qp[k] += h;
            qm[k] -= h;
            let fp = rotation_matrix(&qp).component_mul(&g).sum();
            let fm = rotation_matrix(&qm).component_mul(&g).sum();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - analytic[k]).abs() < 1e-7, "{k}: {fd} vs {}", analytic[k]);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut cloud = GaussianCloud::new();
        cloud.push_raw([0.1, 0.0, 2.0], [-2.0; 3], [1.0, 0.0, 0.0, 0.0], 0.5, [0.2, 0.1, 0.0]);
        cloud.push_raw([-0.1, 0.05, 2.5], [-1.5; 3], [0.9, 0.1, 0.0, 0.0], -0.5, [0.0; 3]);
        let cam = camera(8, 8);
        let out = render_backward(&cloud, &cam, [0.0; 3], &Image::new(8, 8, 3), &Image::new(8, 8, 1)).unwrap();
        assert_eq!(out.grads, GradientBuffer::zeros(2));
        assert_eq!(out.alpha_grads, vec![0.0; 2]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cam = camera(8, 8);
        let err = render_backward(&GaussianCloud::new(), &cam, [0.0; 3], &Image::new(8, 7, 3), &Image::new(8, 8, 1));
        assert!(err.is_err());
        let err = render_backward(&GaussianCloud::new(), &cam, [0.0; 3], &Image::new(8, 8, 3), &Image::new(8, 8, 3));
        assert!(err.is_err());
    }

    #[test]
    fn single_primitive_alpha_gradient_is_falloff_times_red() {
        let mut cloud = GaussianCloud::new();
        cloud
            .push_activated([0.02, -0.01, 2.0], [0.15; 3], [1.0, 0.0, 0.0, 0.0], 0.6, [0.8, 0.3, 0.1])
            .unwrap();
        let cam = camera(8, 8);
        let (px, py) = (3usize, 4usize);
        let mut d_color = Image::new(8, 8, 3);
        d_color.set(px, py, 0, 1.0);
        let out = render_backward(&cloud, &cam, [0.0; 3], &d_color, &Image::new(8, 8, 1)).unwrap();

        let settings = RenderSettings::default();
        let p = &project_with(&cloud, &cam, &settings)[0];
        let (_, falloff, _, _, _) = p.splat().evaluate(px as f64 + 0.5, py as f64 + 0.5, &settings).unwrap();
        let expected = falloff * cloud.color(0)[0];
        assert!((out.alpha_grads[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn clamped_alpha_has_no_opacity_gradient() {
        let mut cloud = GaussianCloud::new();
        cloud.push_raw([0.0, 0.0, 2.0], [0.0; 3], [1.0, 0.0, 0.0, 0.0], 12.0, [0.0; 3]);
        let cam = camera(8, 8);
        let settings = RenderSettings::default();
        let p = &project_with(&cloud, &cam, &settings)[0];
        // pixels (3,3) and (4,4) are half a pixel from the center on both axes
        let (a, _, clamped, _, _) = p.splat().evaluate(3.5, 3.5, &settings).unwrap();
        assert!(clamped && a == 0.99);
        let mut d_color = Image::new(8, 8, 3);
        d_color.set(3, 3, 0, 1.0);
        d_color.set(4, 4, 0, 1.0);
        let out = render_backward_with(&cloud, &cam, [0.0; 3], &d_color, &Image::new(8, 8, 1), &settings).unwrap();
        assert_eq!(out.alpha_grads[0], 0.0);
        assert_eq!(out.grads.positions[0], [0.0; 3]);
        // color still receives gradient through the clamped alpha
        assert!(out.grads.colors_raw[0][0] > 0.0);
    }
}
