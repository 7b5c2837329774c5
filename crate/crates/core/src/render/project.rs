use nalgebra::{Matrix2, Matrix2x3, Vector3};

use super::{RenderSettings, Splat};
use crate::camera::Camera;
use crate::gaussian::{covariance_unchecked, normalize_quat, sigmoid, GaussianCloud};

/// Inclusive pixel bounds of a splat footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

/// A primitive after the perspective (EWA) projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    /// Row of the source primitive in the cloud.
    pub index: usize,
    pub mean2d: [f64; 2],
    /// Regularized 2D covariance in pixels².
    pub cov2d: [[f64; 2]; 2],
    /// Camera-space depth.
    pub depth: f64,
    pub cam_point: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    /// Pixels where the splat can exceed the skip threshold, `None` when
    /// there are none inside the image.
    pub bbox: Option<PixelBox>,
}

impl ProjectedGaussian {
    pub fn conic(&self) -> [f64; 3] {
        let [[a, b], [_, c]] = self.cov2d;
        let det = a * c - b * b;
        [c / det, -b / det, a / det]
    }

    pub(crate) fn splat(&self) -> Splat {
        Splat {
            mean: self.mean2d,
            conic: self.conic(),
            opacity: self.opacity,
            color: self.color,
            depth: self.depth,
        }
    }
}

/// Jacobian of the perspective projection at camera point `t`.
pub(crate) fn projection_jacobian(camera: &Camera, t: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / t.z;
    Matrix2x3::new(
        camera.fx * iz,
        0.0,
        -camera.fx * t.x * iz * iz,
        0.0,
        camera.fy * iz,
        -camera.fy * t.y * iz * iz,
    )
}

/// Projects every primitive in front of the near plane, sorted by
/// increasing depth with ties broken by primitive index.
pub fn project(cloud: &GaussianCloud, camera: &Camera) -> Vec<ProjectedGaussian> {
    project_with(cloud, camera, &RenderSettings::default())
}

pub fn project_with(
    cloud: &GaussianCloud,
    camera: &Camera,
    settings: &RenderSettings,
) -> Vec<ProjectedGaussian> {
    let w = camera.rotation_matrix();
    let tr = camera.translation_vector();
    let mut out: Vec<ProjectedGaussian> = (0..cloud.len())
        .filter_map(|i| {
            let t = w * Vector3::from(cloud.positions[i]) + tr;
            if t.z <= settings.near {
                return None;
            }
            let q = normalize_quat(cloud.rotations[i]);
            let sigma = covariance_unchecked(&cloud.scale(i), &q);
            let jw = projection_jacobian(camera, &t) * w;
            let cov = jw * sigma * jw.transpose()
                + Matrix2::identity() * settings.cov2d_regularization;
            let mean2d = [
                camera.fx * t.x / t.z + camera.cx,
                camera.fy * t.y / t.z + camera.cy,
            ];
            let opacity = sigmoid(cloud.opacity_logits[i]);
            let cov2d = [[cov[(0, 0)], cov[(0, 1)]], [cov[(0, 1)], cov[(1, 1)]]];
            let bbox = footprint(mean2d, &cov2d, opacity, camera, settings);
            Some(ProjectedGaussian {
                index: i,
                mean2d,
                cov2d,
                depth: t.z,
                cam_point: [t.x, t.y, t.z],
                opacity,
                color: cloud.color(i),
                bbox,
            })
        })
        .collect();
    out.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    out
}

/// Pixel rectangle enclosing the ellipse where `opacity * falloff` reaches
/// the skip threshold. Every pixel outside it would be skipped anyway.
fn footprint(
    mean: [f64; 2],
    cov: &[[f64; 2]; 2],
    opacity: f64,
    camera: &Camera,
    settings: &RenderSettings,
) -> Option<PixelBox> {
    let (w, h) = (camera.width, camera.height);
    if settings.alpha_skip <= 0.0 {
        return Some(PixelBox {
            x0: 0,
            x1: w - 1,
            y0: 0,
            y1: h - 1,
        });
    }
    if opacity < settings.alpha_skip {
        return None;
    }
    // Mahalanobis radius² at which opacity * exp(-r²/2) == alpha_skip.
    let r2 = 2.0 * (opacity / settings.alpha_skip).ln() * (1.0 + 1e-9) + 1e-9;
    let hx = (r2 * cov[0][0]).sqrt();
    let hy = (r2 * cov[1][1]).sqrt();
    // Pixel x is sampled at x + 0.5.
    let lo_x = (mean[0] - hx - 0.5).ceil();
    let hi_x = (mean[0] + hx - 0.5).floor();
    let lo_y = (mean[1] - hy - 0.5).ceil();
    let hi_y = (mean[1] + hy - 0.5).floor();
    if !(lo_x.is_finite() && hi_x.is_finite() && lo_y.is_finite() && hi_y.is_finite()) {
        return None;
    }
    if hi_x < 0.0 || hi_y < 0.0 || lo_x > (w - 1) as f64 || lo_y > (h - 1) as f64 || lo_x > hi_x || lo_y > hi_y {
        return None;
    }
    Some(PixelBox {
        x0: lo_x.max(0.0) as usize,
        x1: hi_x.min((w - 1) as f64) as usize,
        y0: lo_y.max(0.0) as usize,
        y1: hi_y.min((h - 1) as f64) as usize,
    })
}
