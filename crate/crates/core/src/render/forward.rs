use rayon::prelude::*;

use super::{bin_rows, project_with, trace_pixel, RenderSettings, Splat};
use crate::camera::Camera;
use crate::gaussian::GaussianCloud;
use crate::image::Image;

/// Images produced by one render.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// H×W×3 composited color.
    pub color: Image,
    /// H×W alpha-weighted expected depth `sum z_i a_i T_i`, not normalized.
    pub depth: Image,
    /// H×W accumulated alpha `1 - T_final`.
    pub accum_alpha: Image,
}

impl RenderOutput {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }
}

pub fn render(cloud: &GaussianCloud, camera: &Camera, background: [f64; 3]) -> RenderOutput {
    render_with(cloud, camera, background, &RenderSettings::default())
}

/// Renders color, expected depth and accumulated alpha by compositing the
/// depth-sorted splats front to back at every pixel center.
pub fn render_with(
    cloud: &GaussianCloud,
    camera: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
) -> RenderOutput {
    let (w, h) = (camera.width, camera.height);
    let projected = project_with(cloud, camera, settings);
    let splats: Vec<Splat> = projected.iter().map(|p| p.splat()).collect();
    let bins = bin_rows(&projected, h);

    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut color = vec![0.0; w * 3];
            let mut depth = vec![0.0; w];
            let mut accum = vec![0.0; w];
            let mut candidates = Vec::new();
            let mut trace = Vec::new();
            let py = y as f64 + 0.5;
            for x in 0..w {
                candidates.clear();
                candidates.extend(bins.rows[y].iter().copied().filter(|&s| {
                    let (x0, x1) = bins.x_range[s];
                    x0 <= x && x <= x1
                }));
                let t_final = trace_pixel(&splats, &candidates, x as f64 + 0.5, py, settings, &mut trace);
                let mut c = [0.0; 3];
                let mut d = 0.0;
                for e in &trace {
                    let sp = &splats[e.slot];
                    let weight = e.alpha * e.transmittance;
                    for k in 0..3 {
                        c[k] += sp.color[k] * weight;
                    }
                    d += sp.depth * weight;
                }
                for k in 0..3 {
                    color[x * 3 + k] = c[k] + t_final * background[k];
                }
                depth[x] = d;
                accum[x] = 1.0 - t_final;
            }
            (color, depth, accum)
        })
        .collect();

    let mut color = Vec::with_capacity(w * h * 3);
    let mut depth = Vec::with_capacity(w * h);
    let mut accum = Vec::with_capacity(w * h);
    for (c, d, a) in rows {
        color.extend(c);
        depth.extend(d);
        accum.extend(a);
    }
    RenderOutput {
        color: Image { width: w, height: h, channels: 3, data: color },
        depth: Image { width: w, height: h, channels: 1, data: depth },
        accum_alpha: Image { width: w, height: h, channels: 1, data: accum },
    }
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
    fn empty_cloud_renders_background() {
        let out = render(&GaussianCloud::new(), &camera(5, 4), [0.2, 0.4, 0.6]);
        for px in out.color.data.chunks(3) {
            assert_eq!(px, [0.2, 0.4, 0.6]);
        }
        assert!(out.depth.data.iter().all(|&d| d == 0.0));
        assert!(out.accum_alpha.data.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn single_red_primitive() {
        let mut cloud = GaussianCloud::new();
        cloud
            .push_activated([0.05, -0.03, 2.0], [0.1; 3], [1.0, 0.0, 0.0, 0.0], 0.7, [0.999_999, 1e-6, 1e-6])
            .unwrap();
        let cam = camera(9, 9);
        let out = render(&cloud, &cam, [0.0; 3]);
        let p = &project_with(&cloud, &cam, &RenderSettings::default())[0];
        let red = cloud.color(0)[0];
        let [ca, cb, cc] = p.conic();
        for y in 0..9 {
            for x in 0..9 {
                let dx = x as f64 + 0.5 - p.mean2d[0];
                let dy = y as f64 + 0.5 - p.mean2d[1];
                let mut a = 0.7 * (-0.5 * (ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy)).exp();
                if a < 1.0 / 255.0 {
                    a = 0.0;
                }
                assert!((out.color.get(x, y, 0) - a * red).abs() < 1e-12);
                assert!((out.accum_alpha.get(x, y, 0) - a).abs() < 1e-12);
                assert!((out.depth.get(x, y, 0) - a * 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clamp_caps_alpha() {
        let mut cloud = GaussianCloud::new();
        cloud.push_raw([0.0, 0.0, 2.0], [0.0; 3], [1.0, 0.0, 0.0, 0.0], 30.0, [0.0; 3]);
        let out = render(&cloud, &camera(4, 4), [0.0; 3]);
        for &a in &out.accum_alpha.data {
            assert!(a <= 0.99 + 1e-15);
        }
    }
}
