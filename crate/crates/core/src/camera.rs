use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// Pinhole camera with a world-to-camera rigid transform.
///
/// Pixel `(x, y)` covers `[x, x+1) x [y, y+1)`; its center is sampled at
/// `(x + 0.5, y + 0.5)`. Camera space looks down `+z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Row-major world-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Builds a camera at `eye` looking at `target`, with `up` roughly the
    /// image-up direction. Image y grows downward.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let eye_v = Vector3::from(eye);
        let forward = (Vector3::from(target) - eye_v).try_normalize(1e-12).ok_or_else(|| {
            Error::validation("camera eye and target coincide")
        })?;
        let right = forward
            .cross(&Vector3::from(up))
            .try_normalize(1e-12)
            .ok_or_else(|| Error::validation("camera up vector is parallel to view direction"))?;
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye_v);
        let cam = Camera {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.x, t.y, t.z],
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation_vector()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation_matrix().transpose() * self.translation_vector())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("camera image size must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::validation(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        let finite = self.rotation.iter().flatten().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && self.cx.is_finite()
            && self.cy.is_finite();
        if !finite {
            return Err(Error::validation("camera holds non-finite values"));
        }
        let r = self.rotation_matrix();
        let dev = (r * r.transpose() - Matrix3::identity()).abs().max();
        if dev > ORTHONORMAL_TOLERANCE {
            return Err(Error::validation(format!(
                "camera rotation is not orthonormal (max deviation {dev:.3e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(Error::validation(format!("camera rotation has determinant {det}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam() -> Camera {
        Camera {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            fx: 10.0,
            fy: 10.0,
            cx: 4.0,
            cy: 4.0,
            width: 8,
            height: 8,
        }
    }

    #[test]
    fn identity_is_valid() {
        identity_cam().validate().unwrap();
    }

    #[test]
    fn rejects_scaled_rotation() {
        let mut cam = identity_cam();
        cam.rotation[0] = [1.1, 0.0, 0.0];
        assert!(cam.validate().is_err());
    }

    #[test]
    fn rejects_reflection() {
        let mut cam = identity_cam();
        cam.rotation[2] = [0.0, 0.0, -1.0];
        assert!(cam.validate().is_err());
    }

    #[test]
    fn rejects_bad_focal() {
        let mut cam = identity_cam();
        cam.fy = 0.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn look_at_puts_target_on_axis() {
        let cam = Camera::look_at([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], 50.0, 32, 24)
            .unwrap();
        let p = cam.world_to_camera(&Vector3::zeros());
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12);
        assert!((p.z - 14f64.sqrt()).abs() < 1e-12);
        assert!((cam.center() - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-12);
    }
}
