//! Built-in synthetic scenes rendered from a known ground-truth cloud.
//!
//! Each scene provides posed training and held-out views, the exact rendered
//! depth of every view, and a sparse noisy subset of the ground-truth means
//! as the initial point cloud.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{normalize_quat, GaussianCloud};
use crate::image::Image;
use crate::render::render;
use crate::trainer::{Scene, View};

use super::manifest::{SceneManifest, Split, ViewEntry};
use super::{save_checkpoint, save_pfm, save_png, save_points};

/// Fraction of ground-truth primitives kept as initial points.
pub const INIT_FRACTION: f64 = 0.05;
/// Initial-point noise as a fraction of the scene's bounding-box diagonal.
pub const INIT_NOISE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// 400 primitives in a 20×20 grid on a checkered plane.
    TexturedPlane,
    /// 200 primitives in three blobs.
    Cluster,
}

impl SyntheticKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "textured-plane" => Ok(SyntheticKind::TexturedPlane),
            "cluster" => Ok(SyntheticKind::Cluster),
            other => Err(Error::UnknownScene(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::TexturedPlane => "textured-plane",
            SyntheticKind::Cluster => "cluster",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub train_views: usize,
    pub test_views: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Camera distance from the origin.
    pub radius: f64,
}

impl SyntheticSpec {
    /// 3 training and 2 held-out 64×64 views.
    pub fn new(kind: SyntheticKind) -> Self {
        Self {
            kind,
            train_views: 3,
            test_views: 2,
            width: 64,
            height: 64,
            focal: 70.0,
            radius: 3.0,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        Ok(Self::new(SyntheticKind::parse(name)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub ground_truth: GaussianCloud,
    pub scene: Scene,
}

fn textured_plane(rng: &mut ChaCha8Rng) -> Result<GaussianCloud> {
    const GRID: usize = 20;
    const TILE: usize = 4;
    const SPACING: f64 = 0.1;
    let light = [0.9, 0.75, 0.2];
    let dark = [0.15, 0.3, 0.7];
    let jitter = Normal::new(0.0, 0.04).unwrap();
    let mut cloud = GaussianCloud::with_capacity(GRID * GRID);
    for i in 0..GRID {
        for j in 0..GRID {
            let x = (i as f64 - (GRID - 1) as f64 / 2.0) * SPACING;
            let y = (j as f64 - (GRID - 1) as f64 / 2.0) * SPACING;
            let base = if (i / TILE + j / TILE).is_multiple_of(2) { light } else { dark };
            let color = base.map(|c: f64| (c + jitter.sample(rng)).clamp(0.02, 0.98));
            cloud.push_activated([x, y, 0.0], [0.06, 0.06, 0.005], [1.0, 0.0, 0.0, 0.0], 0.95, color)?;
        }
    }
    Ok(cloud)
}

fn cluster(rng: &mut ChaCha8Rng) -> Result<GaussianCloud> {
    const COUNT: usize = 200;
    let centers = [[-0.55, 0.05, 0.0], [0.45, 0.35, 0.2], [0.15, -0.45, -0.25]];
    let bases: [[f64; 3]; 3] = [[0.85, 0.25, 0.2], [0.2, 0.75, 0.3], [0.25, 0.35, 0.85]];
    let spread = Normal::new(0.0, 0.17).unwrap();
    let log_scale = Normal::new(0.05f64.ln(), 0.3).unwrap();
    let unit = Normal::new(0.0, 1.0).unwrap();
    let jitter = Normal::new(0.0, 0.06).unwrap();
    let mut cloud = GaussianCloud::with_capacity(COUNT);
    for k in 0..COUNT {
        let b = k % centers.len();
        let pos = centers[b].map(|c| c + spread.sample(rng));
        let scale: [f64; 3] = std::array::from_fn(|_| log_scale.sample(rng).exp());
        let q = normalize_quat(std::array::from_fn(|_| unit.sample(rng)));
        let color = bases[b].map(|c| (c + jitter.sample(rng)).clamp(0.02, 0.98));
        let opacity = rng.random_range(0.6..0.95);
        cloud.push_activated(pos, scale, q, opacity, color)?;
    }
    Ok(cloud)
}

/// Cameras on a sphere around the origin, looking at it. Training views
/// span the outer angles, held-out views lie between them.
fn cameras(spec: &SyntheticSpec) -> Result<(Vec<Camera>, Vec<Camera>)> {
    let make = |azimuth_deg: f64, elevation_deg: f64| {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let eye = [
            spec.radius * el.cos() * az.sin(),
            spec.radius * el.sin(),
            spec.radius * el.cos() * az.cos(),
        ];
        Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], spec.focal, spec.width, spec.height)
    };
    let spread = |count: usize, half_width: f64| -> Vec<f64> {
        if count == 1 {
            return vec![0.0];
        }
        (0..count)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (count - 1) as f64)
            .collect()
    };
    let train = spread(spec.train_views, 30.0)
        .into_iter()
        .enumerate()
        .map(|(i, az)| make(az, if i % 2 == 0 { 15.0 } else { 25.0 }))
        .collect::<Result<_>>()?;
    let test = spread(spec.test_views, 15.0)
        .into_iter()
        .map(|az| make(az, 8.0))
        .collect::<Result<_>>()?;
    Ok((train, test))
}

fn quantize_u8(img: &mut Image) {
    img.data.iter_mut().for_each(|v| *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
}

fn quantize_f32(img: &mut Image) {
    img.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Builds the scene in memory. Images and depths are quantized exactly as
/// they are stored on disk, so this equals loading the written manifest.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticScene> {
    if spec.train_views == 0 {
        return Err(Error::validation("synthetic scene needs at least one training view"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = match spec.kind {
        SyntheticKind::TexturedPlane => textured_plane(&mut rng)?,
        SyntheticKind::Cluster => cluster(&mut rng)?,
    };
    let (train_cams, test_cams) = cameras(spec)?;
    let render_view = |prefix: &str, i: usize, camera: Camera| {
        let out = render(&gt, &camera, [0.0; 3]);
        let mut image = out.color;
        let mut depth = out.depth;
        quantize_u8(&mut image);
        quantize_f32(&mut depth);
        View {
            name: format!("{prefix}_{i:03}"),
            image,
            camera,
            depth: Some(depth),
        }
    };
    let train = train_cams
        .into_iter()
        .enumerate()
        .map(|(i, c)| render_view("train", i, c))
        .collect();
    let test = test_cams
        .into_iter()
        .enumerate()
        .map(|(i, c)| render_view("test", i, c))
        .collect();

    let n = gt.len();
    let keep = ((n as f64 * INIT_FRACTION).round() as usize).clamp(1, n);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &gt.positions {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt();
    let noise = Normal::new(0.0, INIT_NOISE_FRACTION * extent).unwrap();
    let mut picked: Vec<usize> = sample(&mut rng, n, keep).into_vec();
    picked.sort_unstable();
    let mut points = Vec::with_capacity(keep);
    let mut colors = Vec::with_capacity(keep);
    for i in picked {
        points.push(gt.positions[i].map(|c| c + noise.sample(&mut rng)));
        // Stored as 8-bit in the point-cloud file.
        colors.push(gt.color(i).map(|c| (c * 255.0).round() / 255.0));
    }
    Ok(SyntheticScene {
        ground_truth: gt,
        scene: Scene {
            train,
            test,
            points,
            colors,
        },
    })
}

/// Generates the scene and writes images (PNG), depths (PFM), the initial
/// points and ground truth (PLY) and `manifest.json` into `out_dir`.
/// Returns the manifest path.
pub fn make_synthetic(spec: &SyntheticSpec, out_dir: impl AsRef<Path>, seed: u64) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let syn = generate_synthetic(spec, seed)?;
    let mut views = Vec::new();
    for (split, list) in [(Split::Train, &syn.scene.train), (Split::Test, &syn.scene.test)] {
        for v in list {
            let image = PathBuf::from(format!("{}.png", v.name));
            let depth = PathBuf::from(format!("{}_depth.pfm", v.name));
            save_png(&v.image, out_dir.join(&image))?;
            save_pfm(v.depth.as_ref().expect("synthetic views carry depth"), out_dir.join(&depth))?;
            views.push(ViewEntry {
                name: v.name.clone(),
                split,
                image,
                depth: Some(depth),
                camera: v.camera.clone(),
            });
        }
    }
    save_points(&syn.scene.points, &syn.scene.colors, out_dir.join("points.ply"))?;
    save_checkpoint(&syn.ground_truth, out_dir.join("ground_truth.ply"))?;
    let manifest = SceneManifest {
        views,
        points: PathBuf::from("points.ply"),
    };
    let path = out_dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name() {
        assert!(matches!(SyntheticSpec::named("teapot"), Err(Error::UnknownScene(_))));
    }

    #[test]
    fn plane_contract() {
        let s = generate_synthetic(&SyntheticSpec::named("textured-plane").unwrap(), 1).unwrap();
        assert_eq!(s.ground_truth.len(), 400);
        assert_eq!(s.scene.train.len(), 3);
        assert!(s.scene.train.iter().all(|v| v.depth.is_some()));
        assert_eq!(s.scene.points.len(), 20);
        s.scene.validate().unwrap();
    }

    #[test]
    fn cluster_contract() {
        let s = generate_synthetic(&SyntheticSpec::named("cluster").unwrap(), 1).unwrap();
        assert_eq!(s.ground_truth.len(), 200);
        assert_eq!(s.scene.points.len(), 10);
    }
}
