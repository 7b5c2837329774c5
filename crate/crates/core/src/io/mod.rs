//! Scenes, checkpoints, synthetic data and configuration on disk.

mod config;
mod manifest;
mod pfm;
mod ply;
mod synthetic;

pub use config::{config_to_toml, parse_config, parse_config_str};
pub use manifest::{load_scene, SceneManifest, Split, ViewEntry};
pub use pfm::{load_pfm, read_pfm, save_pfm, write_pfm};
pub use ply::{
    load_checkpoint, load_points, read_checkpoint, read_vertices, save_checkpoint, save_points, write_checkpoint,
    VertexTable,
};
pub use synthetic::{
    generate_synthetic, make_synthetic, SyntheticKind, SyntheticScene, SyntheticSpec, INIT_FRACTION,
    INIT_NOISE_FRACTION,
};

use std::fs;
use std::path::Path;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;

/// Writes an RGB image in [0, 1] as 8-bit PNG.
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    if img.channels != 3 {
        return Err(Error::validation(format!("PNG export expects 3 channels, got {}", img.channels)));
    }
    let bytes: Vec<u8> = img.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| Error::validation("image buffer size mismatch"))?;
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

/// Decodes a PNG to an RGB image in [0, 1].
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| Error::load(path, e.to_string()))?.to_rgb8();
    let (w, h) = decoded.dimensions();
    let data = decoded.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Image::from_data(w as usize, h as usize, 3, data)
}

/// Reads a camera from a JSON file and validates it.
pub fn load_camera(path: impl AsRef<Path>) -> Result<Camera> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let camera: Camera =
        serde_json::from_str(&text).map_err(|e| Error::load(path, format!("malformed camera: {e}")))?;
    camera.validate()?;
    Ok(camera)
}

pub fn save_camera(camera: &Camera, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(camera)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
