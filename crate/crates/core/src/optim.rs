//! Adam over the five parameter groups of a [`GaussianCloud`], with rows
//! inserted and removed in lockstep with density control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianCloud, GradientBuffer};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Per-group learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    /// Initial position rate, decayed exponentially to `position_final`.
    pub position: f64,
    pub position_final: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            opacity: 0.05,
            scale: 5e-3,
            rotation: 1e-3,
            color: 2.5e-3,
        }
    }
}

impl LearningRates {
    /// Position rate at `iteration` out of `max_iterations`, log-linear
    /// between the initial and final values.
    pub fn position_at(&self, iteration: usize, max_iterations: usize) -> f64 {
        if max_iterations == 0 || self.position <= 0.0 || self.position_final <= 0.0 {
            return self.position;
        }
        let t = (iteration as f64 / max_iterations as f64).clamp(0.0, 1.0);
        (self.position.ln() * (1.0 - t) + self.position_final.ln() * t).exp()
    }
}

/// Moments for one parameter group, `WIDTH` values per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments<const WIDTH: usize> {
    pub m: Vec<[f64; WIDTH]>,
    pub v: Vec<[f64; WIDTH]>,
}

impl<const WIDTH: usize> Moments<WIDTH> {
    fn zeros(n: usize) -> Self {
        Self {
            m: vec![[0.0; WIDTH]; n],
            v: vec![[0.0; WIDTH]; n],
        }
    }

    fn push_zero_rows(&mut self, count: usize) {
        self.m.extend(std::iter::repeat_n([0.0; WIDTH], count));
        self.v.extend(std::iter::repeat_n([0.0; WIDTH], count));
    }

    fn retain(&mut self, keep: &[bool]) {
        crate::gaussian::retain_by_mask(&mut self.m, keep);
        crate::gaussian::retain_by_mask(&mut self.v, keep);
    }
}

// Scalars stored as width-1 rows so all groups share one code path.
type ScalarMoments = Moments<1>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub positions: Moments<3>,
    pub log_scales: Moments<3>,
    pub rotations: Moments<4>,
    pub opacity_logits: ScalarMoments,
    pub colors_raw: Moments<3>,
    /// Adam steps taken by each row since it was created.
    pub steps: Vec<u64>,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self {
            positions: Moments::zeros(n),
            log_scales: Moments::zeros(n),
            rotations: Moments::zeros(n),
            opacity_logits: Moments::zeros(n),
            colors_raw: Moments::zeros(n),
            steps: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Appends `count` rows with zero moments and zero step count.
    pub fn insert_rows(&mut self, count: usize) {
        self.positions.push_zero_rows(count);
        self.log_scales.push_zero_rows(count);
        self.rotations.push_zero_rows(count);
        self.opacity_logits.push_zero_rows(count);
        self.colors_raw.push_zero_rows(count);
        self.steps.extend(std::iter::repeat_n(0, count));
    }

    /// Removes the rows listed in `indices`, compacting the rest in order.
    pub fn remove_rows(&mut self, indices: &[usize]) -> Result<()> {
        let keep = keep_mask(self.len(), indices)?;
        self.retain_rows(&keep);
        Ok(())
    }

    pub(crate) fn retain_rows(&mut self, keep: &[bool]) {
        self.positions.retain(keep);
        self.log_scales.retain(keep);
        self.rotations.retain(keep);
        self.opacity_logits.retain(keep);
        self.colors_raw.retain(keep);
        crate::gaussian::retain_by_mask(&mut self.steps, keep);
    }

    pub fn validate_against(&self, cloud: &GaussianCloud) -> Result<()> {
        let n = cloud.len();
        let ok = self.steps.len() == n
            && self.positions.m.len() == n
            && self.positions.v.len() == n
            && self.log_scales.m.len() == n
            && self.rotations.m.len() == n
            && self.opacity_logits.m.len() == n
            && self.colors_raw.m.len() == n;
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "optimizer state has {} rows, cloud has {n}",
                self.steps.len()
            )))
        }
    }
}

/// Converts an index list into a keep-mask, rejecting out-of-range or
/// duplicate indices.
pub(crate) fn keep_mask(n: usize, indices: &[usize]) -> Result<Vec<bool>> {
    let mut keep = vec![true; n];
    for &i in indices {
        if i >= n {
            return Err(Error::validation(format!("row index {i} out of range for {n} rows")));
        }
        if !keep[i] {
            return Err(Error::validation(format!("row index {i} listed twice")));
        }
        keep[i] = false;
    }
    Ok(keep)
}

#[inline]
fn adam_row<const W: usize>(
    param: &mut [f64; W],
    grad: &[f64; W],
    m: &mut [f64; W],
    v: &mut [f64; W],
    lr: f64,
    bias1: f64,
    bias2: f64,
) {
    for k in 0..W {
        m[k] = BETA1 * m[k] + (1.0 - BETA1) * grad[k];
        v[k] = BETA2 * v[k] + (1.0 - BETA2) * grad[k] * grad[k];
        let m_hat = m[k] / bias1;
        let v_hat = v[k] / bias2;
        param[k] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
}

fn check_finite<const W: usize>(rows: &[[f64; W]], param: &'static str) -> Result<()> {
    match rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        Some(row) => Err(Error::NonFiniteGradient { param, row }),
        None => Ok(()),
    }
}

/// One Adam step on every row, then quaternion renormalization.
pub fn step(
    cloud: &mut GaussianCloud,
    state: &mut OptimizerState,
    grads: &GradientBuffer,
    rates: &LearningRates,
    position_lr: f64,
) -> Result<()> {
    state.validate_against(cloud)?;
    if !grads.matches(cloud) {
        return Err(Error::validation(format!(
            "gradient buffer has {} rows, cloud has {}",
            grads.len(),
            cloud.len()
        )));
    }
    check_finite(&grads.positions, "positions")?;
    check_finite(&grads.log_scales, "log_scales")?;
    check_finite(&grads.rotations, "rotations")?;
    check_finite(
        &grads.opacity_logits.iter().map(|&g| [g]).collect::<Vec<_>>(),
        "opacity_logits",
    )?;
    check_finite(&grads.colors_raw, "colors_raw")?;

    for i in 0..cloud.len() {
        state.steps[i] += 1;
        let t = state.steps[i] as i32;
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2 = 1.0 - BETA2.powi(t);
        adam_row(
            &mut cloud.positions[i],
            &grads.positions[i],
            &mut state.positions.m[i],
            &mut state.positions.v[i],
            position_lr,
            bias1,
            bias2,
        );
        adam_row(
            &mut cloud.log_scales[i],
            &grads.log_scales[i],
            &mut state.log_scales.m[i],
            &mut state.log_scales.v[i],
            rates.scale,
            bias1,
            bias2,
        );
        adam_row(
            &mut cloud.rotations[i],
            &grads.rotations[i],
            &mut state.rotations.m[i],
            &mut state.rotations.v[i],
            rates.rotation,
            bias1,
            bias2,
        );
        let mut logit = [cloud.opacity_logits[i]];
        adam_row(
            &mut logit,
            &[grads.opacity_logits[i]],
            &mut state.opacity_logits.m[i],
            &mut state.opacity_logits.v[i],
            rates.opacity,
            bias1,
            bias2,
        );
        cloud.opacity_logits[i] = logit[0];
        adam_row(
            &mut cloud.colors_raw[i],
            &grads.colors_raw[i],
            &mut state.colors_raw.m[i],
            &mut state.colors_raw.v[i],
            rates.color,
            bias1,
            bias2,
        );
    }
    cloud.normalize_rotations();
    Ok(())
}
