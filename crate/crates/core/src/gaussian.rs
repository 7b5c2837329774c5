//! Gaussian primitives in raw (pre-activation) form and their activations.
//!
//! Every primitive stores an unconstrained parameter set so the optimizer can
//! move freely: log-scales, an unnormalized quaternion, an opacity logit and
//! per-channel color logits. The activated view is what the renderer sees.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a quaternion norm from 1 in [`covariance_from`].
pub const QUATERNION_TOLERANCE: f64 = 1e-6;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of `p`; the inverse of [`sigmoid`] on the open unit interval.
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            value: p,
            domain: "(0, 1)",
        });
    }
    Ok((p / (1.0 - p)).ln())
}

/// Inverse of the opacity activation: the logit whose sigmoid is `alpha`.
pub fn inverse_opacity_activation(alpha: f64) -> Result<f64> {
    logit(alpha)
}

/// A set of N Gaussian primitives stored as parallel arrays.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussianCloud {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    /// Quaternions as (w, x, y, z); normalized before use.
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    pub colors_raw: Vec<[f64; 3]>,
}

/// Activated per-primitive quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivatedCloud {
    pub scales: Vec<[f64; 3]>,
    pub opacities: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

impl GaussianCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            positions: Vec::with_capacity(n),
            log_scales: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
            opacity_logits: Vec::with_capacity(n),
            colors_raw: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Appends one primitive given in raw form.
    pub fn push_raw(
        &mut self,
        position: [f64; 3],
        log_scale: [f64; 3],
        rotation: [f64; 4],
        opacity_logit: f64,
        color_raw: [f64; 3],
    ) {
        self.positions.push(position);
        self.log_scales.push(log_scale);
        self.rotations.push(rotation);
        self.opacity_logits.push(opacity_logit);
        self.colors_raw.push(color_raw);
    }

    /// Appends one primitive given in activated form.
    pub fn push_activated(
        &mut self,
        position: [f64; 3],
        scale: [f64; 3],
        rotation: [f64; 4],
        opacity: f64,
        color: [f64; 3],
    ) -> Result<()> {
        if scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::validation(format!("scale {scale:?} must be positive")));
        }
        let color_raw = [logit(color[0])?, logit(color[1])?, logit(color[2])?];
        self.push_raw(
            position,
            scale.map(f64::ln),
            rotation,
            inverse_opacity_activation(opacity)?,
            color_raw,
        );
        Ok(())
    }

    /// Copies row `i` to the end of the cloud.
    pub fn push_row_of(&mut self, i: usize) {
        self.positions.push(self.positions[i]);
        self.log_scales.push(self.log_scales[i]);
        self.rotations.push(self.rotations[i]);
        self.opacity_logits.push(self.opacity_logits[i]);
        self.colors_raw.push(self.colors_raw[i]);
    }

    /// Keeps only rows for which `keep[i]` is true, preserving order.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        retain_by_mask(&mut self.positions, keep);
        retain_by_mask(&mut self.log_scales, keep);
        retain_by_mask(&mut self.rotations, keep);
        retain_by_mask(&mut self.opacity_logits, keep);
        retain_by_mask(&mut self.colors_raw, keep);
    }

    /// Checks that all arrays agree in length and hold finite values.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.log_scales.len(),
            self.rotations.len(),
            self.opacity_logits.len(),
            self.colors_raw.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::validation(format!(
                "cloud arrays disagree in length: positions {n}, others {lens:?}"
            )));
        }
        let finite = self.positions.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.colors_raw.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("cloud holds non-finite parameters"));
        }
        if let Some(i) = self.rotations.iter().position(|q| quat_norm(q) == 0.0) {
            return Err(Error::validation(format!("zero quaternion at row {i}")));
        }
        Ok(())
    }

    #[inline]
    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    #[inline]
    pub fn scale(&self, i: usize) -> [f64; 3] {
        self.log_scales[i].map(f64::exp)
    }

    #[inline]
    pub fn color(&self, i: usize) -> [f64; 3] {
        self.colors_raw[i].map(sigmoid)
    }

    pub fn opacities(&self) -> Vec<f64> {
        self.opacity_logits.iter().map(|&l| sigmoid(l)).collect()
    }

    /// Renormalizes every quaternion to unit length.
    pub fn normalize_rotations(&mut self) {
        for q in &mut self.rotations {
            *q = normalize_quat(*q);
        }
    }
}

/// Gradients of a scalar loss w.r.t. every raw parameter of a cloud.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientBuffer {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    pub colors_raw: Vec<[f64; 3]>,
}

impl GradientBuffer {
    pub fn zeros(n: usize) -> Self {
        Self {
            positions: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacity_logits: vec![0.0; n],
            colors_raw: vec![[0.0; 3]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Shapes mirror `cloud`.
    pub fn matches(&self, cloud: &GaussianCloud) -> bool {
        let n = cloud.len();
        self.positions.len() == n
            && self.log_scales.len() == n
            && self.rotations.len() == n
            && self.opacity_logits.len() == n
            && self.colors_raw.len() == n
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.colors_raw.iter().flatten().all(|v| v.is_finite())
    }
}

pub(crate) fn retain_by_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap());
}

/// Elementwise activations: exp for scales, sigmoid for opacities and colors.
pub fn activate(cloud: &GaussianCloud) -> ActivatedCloud {
    ActivatedCloud {
        scales: cloud.log_scales.iter().map(|s| s.map(f64::exp)).collect(),
        opacities: cloud.opacity_logits.iter().map(|&l| sigmoid(l)).collect(),
        colors: cloud.colors_raw.iter().map(|c| c.map(sigmoid)).collect(),
    }
}

#[inline]
pub fn quat_norm(q: &[f64; 4]) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

#[inline]
pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = quat_norm(&q);
    q.map(|v| v / n)
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
pub fn rotation_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Covariance `R diag(s)^2 R^T` of a primitive with scales `scale` and unit
/// quaternion `rotation`.
pub fn covariance_from(scale: &[f64; 3], rotation: &[f64; 4]) -> Result<Matrix3<f64>> {
    if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::validation(format!("scale {scale:?} must be positive")));
    }
    let norm = quat_norm(rotation);
    if (norm - 1.0).abs() > QUATERNION_TOLERANCE {
        return Err(Error::validation(format!(
            "quaternion {rotation:?} has norm {norm}, expected 1"
        )));
    }
    Ok(covariance_unchecked(scale, rotation))
}

#[inline]
pub(crate) fn covariance_unchecked(scale: &[f64; 3], rotation: &[f64; 4]) -> Matrix3<f64> {
    let m = rotation_matrix(rotation) * Matrix3::from_diagonal(&Vector3::from(*scale));
    m * m.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_examples() {
        let mut cloud = GaussianCloud::new();
        cloud.push_raw([0.0; 3], [0.0; 3], [1.0, 0.0, 0.0, 0.0], 0.0, [0.0; 3]);
        cloud.push_raw([0.0; 3], [0.0; 3], [1.0, 0.0, 0.0, 0.0], -13.8155, [0.0; 3]);
        let act = activate(&cloud);
        assert_eq!(act.opacities[0], 0.5);
        assert_eq!(act.scales[0], [1.0; 3]);
        assert_eq!(act.colors[0], [0.5; 3]);
        // 1 / (1 + e^13.8155) evaluated independently
        assert!((act.opacities[1] - 1.0e-6).abs() < 1e-10);
    }

    #[test]
    fn inverse_opacity_examples() {
        assert_eq!(inverse_opacity_activation(0.5).unwrap(), 0.0);
        assert!((inverse_opacity_activation(sigmoid(2.0)).unwrap() - 2.0).abs() < 1e-12);
        assert!((inverse_opacity_activation(0.95).unwrap() - 2.944_438_979_166_44).abs() < 1e-9);
        assert!(matches!(inverse_opacity_activation(0.0), Err(Error::Domain { .. })));
        assert!(matches!(inverse_opacity_activation(1.0), Err(Error::Domain { .. })));
        assert!(inverse_opacity_activation(f64::NAN).is_err());
    }

    #[test]
    fn sigmoid_is_stable_in_the_tails() {
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn covariance_examples() {
        let id = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(covariance_from(&[1.0; 3], &id).unwrap(), Matrix3::identity());
        let c = covariance_from(&[2.0, 1.0, 1.0], &id).unwrap();
        assert_eq!(c, Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)));

        // 90 degrees about z: explicit R S S^T R^T with R = [[0,-1,0],[1,0,0],[0,0,1]]
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = covariance_from(&[2.0, 1.0, 1.0], &[h, 0.0, 0.0, h]).unwrap();
        let r = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let s = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0));
        let oracle = r * s * s.transpose() * r.transpose();
        assert!((c - oracle).abs().max() < 1e-12);
        assert!((c - Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0))).abs().max() < 1e-12);
    }

    #[test]
    fn covariance_rejects_bad_quaternion() {
        assert!(covariance_from(&[1.0; 3], &[1.1, 0.0, 0.0, 0.0]).is_err());
        assert!(covariance_from(&[0.0, 1.0, 1.0], &[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn retain_and_validate() {
        let mut cloud = GaussianCloud::new();
        for i in 0..4 {
            cloud.push_raw([i as f64; 3], [0.0; 3], [1.0, 0.0, 0.0, 0.0], 0.0, [0.0; 3]);
        }
        cloud.retain_rows(&[true, false, true, false]);
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.positions[1], [2.0; 3]);
        cloud.validate().unwrap();
        cloud.opacity_logits.push(0.0);
        assert!(cloud.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn covariance_is_spd(
                s in prop::array::uniform3(0.01f64..5.0),
                q in prop::array::uniform4(-1.0f64..1.0),
            ) {
                prop_assume!(quat_norm(&q) > 1e-3);
                let q = normalize_quat(q);
                let c = covariance_from(&s, &q).unwrap();
                prop_assert!((c - c.transpose()).abs().max() < 1e-9);
                prop_assert!(c.cholesky().is_some());
                let mut eig: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
                eig.sort_by(f64::total_cmp);
                let mut sq: Vec<f64> = s.iter().map(|v| v * v).collect();
                sq.sort_by(f64::total_cmp);
                for (a, b) in eig.iter().zip(&sq) {
                    prop_assert!((a - b).abs() < 1e-9 * (1.0 + b));
                }
            }

            #[test]
            fn opacity_round_trip(alpha in 0.001f64..0.999) {
                let l = inverse_opacity_activation(alpha).unwrap();
                prop_assert!((sigmoid(l) - alpha).abs() < 1e-9);
            }

            #[test]
            fn normalized_quaternion_is_unit(q in prop::array::uniform4(-3.0f64..3.0)) {
                prop_assume!(quat_norm(&q) > 1e-3);
                prop_assert!((quat_norm(&normalize_quat(q)) - 1.0).abs() < 1e-6);
            }
        }
    }
}
