#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatfit::loss::{depth_mask, total_loss_masked, LossWeights};
use splatfit::render::{render_backward_with, render_with, RenderSettings};
use splatfit::{Camera, GaussianCloud, Image};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn front_camera(w: usize, h: usize, focal: f64) -> Camera {
    Camera {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: [0.0, 0.0, 0.0],
        fx: focal,
        fy: focal,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
        width: w,
        height: h,
    }
}

/// A tilted camera looking at the origin from roughly -z.
pub fn oblique_camera(rng: &mut impl Rng, w: usize, h: usize, focal: f64) -> Camera {
    let eye = [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), -3.0];
    Camera::look_at(eye, [0.0; 3], [0.0, -1.0, 0.0], focal, w, h).unwrap()
}

/// Random primitives clustered around the origin, opacities kept below the
/// alpha clamp.
pub fn random_cloud(rng: &mut impl Rng, n: usize) -> GaussianCloud {
    let mut cloud = GaussianCloud::new();
    for _ in 0..n {
        let pos = [
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.4..0.4),
        ];
        let log_scale = [
            rng.random_range(-2.5..-1.2),
            rng.random_range(-2.5..-1.2),
            rng.random_range(-2.5..-1.2),
        ];
        let rot = [
            rng.random_range(0.2..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let logit = rng.random_range(-1.5..2.0);
        let color = [
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ];
        cloud.push_raw(pos, log_scale, rot, logit, color);
    }
    cloud
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize, c: usize) -> Image {
    Image::from_data(w, h, c, (0..w * h * c).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

/// Passes when `|a - b| <= max(rel * max(|a|, |b|), abs_floor)`.
pub fn close(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs_floor)
}

/// Raw parameter addressed as (row, field, component).
#[derive(Debug, Clone, Copy)]
pub enum Param {
    Position(usize, usize),
    LogScale(usize, usize),
    Rotation(usize, usize),
    OpacityLogit(usize),
    ColorRaw(usize, usize),
}

impl Param {
    pub fn all(n: usize) -> Vec<Param> {
        let mut out = Vec::new();
        for i in 0..n {
            out.extend((0..3).map(|k| Param::Position(i, k)));
            out.extend((0..3).map(|k| Param::LogScale(i, k)));
            out.extend((0..4).map(|k| Param::Rotation(i, k)));
            out.push(Param::OpacityLogit(i));
            out.extend((0..3).map(|k| Param::ColorRaw(i, k)));
        }
        out
    }

    pub fn get_mut<'a>(&self, c: &'a mut GaussianCloud) -> &'a mut f64 {
        match *self {
            Param::Position(i, k) => &mut c.positions[i][k],
            Param::LogScale(i, k) => &mut c.log_scales[i][k],
            Param::Rotation(i, k) => &mut c.rotations[i][k],
            Param::OpacityLogit(i) => &mut c.opacity_logits[i],
            Param::ColorRaw(i, k) => &mut c.colors_raw[i][k],
        }
    }

    pub fn read(&self, g: &splatfit::GradientBuffer) -> f64 {
        match *self {
            Param::Position(i, k) => g.positions[i][k],
            Param::LogScale(i, k) => g.log_scales[i][k],
            Param::Rotation(i, k) => g.rotations[i][k],
            Param::OpacityLogit(i) => g.opacity_logits[i],
            Param::ColorRaw(i, k) => g.colors_raw[i][k],
        }
    }
}

/// Central difference of `f` at `cloud` along `param`.
pub fn central_difference(
    cloud: &GaussianCloud,
    param: Param,
    h: f64,
    f: impl Fn(&GaussianCloud) -> f64,
) -> f64 {
    let mut plus = cloud.clone();
    *param.get_mut(&mut plus) += h;
    let mut minus = cloud.clone();
    *param.get_mut(&mut minus) -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// A target in [0, 1] whose residual against `rendered` is at least 0.05 in
/// every channel, keeping L1 away from its kink at zero.
pub fn offset_target(rng: &mut impl Rng, rendered: &Image) -> Image {
    let data = rendered
        .data
        .iter()
        .map(|&r| {
            let delta = rng.random_range(0.05..0.4);
            let up = r + delta;
            let down = r - delta;
            if rng.random_bool(0.5) {
                if up <= 1.0 { up } else { down }
            } else if down >= 0.0 {
                down
            } else {
                up
            }
        })
        .collect();
    Image::from_data(rendered.width, rendered.height, rendered.channels, data).unwrap()
}

/// Direct per-pixel evaluation of the ordered compositing sum over every
/// projected primitive, without footprint culling. Returns (color, depth,
/// accumulated alpha) for every pixel in row-major order.
pub fn naive_render(
    cloud: &GaussianCloud,
    camera: &Camera,
    background: [f64; 3],
    settings: &splatfit::render::RenderSettings,
) -> Vec<([f64; 3], f64, f64)> {
    let mut prims = splatfit::render::project_with(cloud, camera, settings);
    prims.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap().then(a.index.cmp(&b.index)));
    let mut out = Vec::with_capacity(camera.width * camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut color = [0.0; 3];
            let mut depth = 0.0;
            let mut transmittance = 1.0;
            for p in &prims {
                let [[a, b], [_, c]] = p.cov2d;
                let det = a * c - b * b;
                let (dx, dy) = (px - p.mean2d[0], py - p.mean2d[1]);
                let maha = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
                let mut alpha = p.opacity * (-0.5 * maha).exp();
                if alpha < settings.alpha_skip || alpha <= 0.0 {
                    continue;
                }
                alpha = alpha.min(settings.alpha_clamp);
                for k in 0..3 {
                    color[k] += p.color[k] * alpha * transmittance;
                }
                depth += p.depth * alpha * transmittance;
                transmittance *= 1.0 - alpha;
            }
            for k in 0..3 {
                color[k] += background[k] * transmittance;
            }
            out.push((color, depth, 1.0 - transmittance));
        }
    }
    out
}

/// Random 8-primitive, 16×16 problem for checking gradients of the full
/// objective against finite differences.
pub struct GradProblem {
    pub cloud: GaussianCloud,
    pub camera: Camera,
    pub target: Image,
    pub d_est: Image,
    pub mask: Vec<bool>,
    pub weights: LossWeights,
    pub settings: RenderSettings,
    pub background: [f64; 3],
}

impl GradProblem {
    pub fn random(seed: u64) -> Self {
        let mut rng = rng(seed);
        let camera = oblique_camera(&mut rng, 16, 16, 22.0);
        let cloud = random_cloud(&mut rng, 8);
        let d_est = random_image(&mut rng, 16, 16, 1);
        // Skipping tiny alphas is a step discontinuity; turn it off so
        // central differences see a smooth function.
        let settings = RenderSettings { alpha_skip: 0.0, ..RenderSettings::default() };
        let background = [0.1, 0.2, 0.3];
        let rendered = render_with(&cloud, &camera, background, &settings);
        let target = offset_target(&mut rng, &rendered.color);
        let mut mask = depth_mask(&rendered.accum_alpha);
        if mask.iter().filter(|&&m| m).count() < 2 {
            mask = vec![true; 256];
        }
        GradProblem {
            cloud,
            camera,
            target,
            d_est,
            mask,
            weights: LossWeights { lambda: 0.2, w_depth: 0.05 },
            settings,
            background,
        }
    }

    pub fn loss(&self, cloud: &GaussianCloud) -> f64 {
        let r = render_with(cloud, &self.camera, self.background, &self.settings);
        total_loss_masked(&r.color, &r.depth, &self.target, &self.d_est, &self.mask, &self.weights)
            .unwrap()
            .breakdown
            .total
    }

    pub fn analytic(&self) -> splatfit::GradientBuffer {
        let r = render_with(&self.cloud, &self.camera, self.background, &self.settings);
        let t = total_loss_masked(&r.color, &r.depth, &self.target, &self.d_est, &self.mask, &self.weights)
            .unwrap();
        render_backward_with(&self.cloud, &self.camera, self.background, &t.d_color, &t.d_depth, &self.settings)
            .unwrap()
            .grads
    }

    /// Worst parameter whose analytic and central-difference derivatives
    /// differ by more than 1e-4 relative (1e-6 absolute floor), if any.
    pub fn worst_mismatch(&self) -> Option<String> {
        let g = self.analytic();
        if !g.is_finite() {
            return Some("non-finite analytic gradient".into());
        }
        let mut worst: Option<(f64, String)> = None;
        for param in Param::all(self.cloud.len()) {
            let a = param.read(&g);
            let fd = central_difference(&self.cloud, param, 1e-4, |c| self.loss(c));
            if close(a, fd, 1e-4, 1e-6) {
                continue;
            }
            let err = (a - fd).abs() / a.abs().max(fd.abs());
            if worst.as_ref().is_none_or(|w| err > w.0) {
                worst = Some((err, format!("{param:?}: analytic {a:e} fd {fd:e}")));
            }
        }
        worst.map(|w| w.1)
    }
}
