use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::trainer::{Scene, View};

use super::{load_pfm, load_png, load_points};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One view of a manifest. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub name: String,
    pub split: Split,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    pub camera: Camera,
}

/// JSON description of a scene on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub views: Vec<ViewEntry>,
    /// Initial point cloud (PLY with `x y z` and optional colors).
    pub points: PathBuf,
}

impl SceneManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::load(path, format!("malformed manifest: {e}")))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.views.iter().filter(|v| v.split == split).count()
    }
}

fn resolve(base: &Path, p: &Path) -> Result<PathBuf> {
    let full = base.join(p);
    if !full.is_file() {
        return Err(Error::load(&full, "file not found"));
    }
    Ok(full)
}

/// Reads a manifest and everything it references. Images are decoded to
/// [0, 1]; cameras and image sizes are validated.
pub fn load_scene(manifest_path: impl AsRef<Path>) -> Result<Scene> {
    let manifest_path = manifest_path.as_ref();
    let manifest = SceneManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut names = HashSet::new();
    let mut scene = Scene::default();
    for entry in &manifest.views {
        if !names.insert(entry.name.as_str()) {
            return Err(Error::load(manifest_path, format!("view `{}` listed twice", entry.name)));
        }
        entry
            .camera
            .validate()
            .map_err(|e| Error::validation(format!("view `{}`: {e}", entry.name)))?;
        let image = load_png(resolve(base, &entry.image)?)?;
        let depth = match &entry.depth {
            Some(p) => Some(load_pfm(resolve(base, p)?)?),
            None => None,
        };
        let view = View {
            name: entry.name.clone(),
            image,
            camera: entry.camera.clone(),
            depth,
        };
        view.validate().map_err(|e| Error::load(manifest_path, e.to_string()))?;
        match entry.split {
            Split::Train => scene.train.push(view),
            Split::Test => scene.test.push(view),
        }
    }
    let (points, colors) = load_points(resolve(base, &manifest.points)?)?;
    scene.points = points;
    scene.colors = colors;
    if scene.train.is_empty() {
        return Err(Error::load(manifest_path, "manifest has no training views"));
    }
    Ok(scene)
}
