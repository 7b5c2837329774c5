//! Adaptive density control.
//!
//! The proposed controller densifies primitives whose tracked maximum
//! opacity gradient exceeds a threshold, corrects cloned opacities so two
//! co-located copies composite like the original, delays and softens opacity
//! pruning, and enforces a hard primitive budget. The standard controller
//! (mean view-space positional gradient trigger, early and aggressive
//! pruning) is kept for ablations.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    inverse_opacity_activation, normalize_quat, retain_by_mask, rotation_matrix, sigmoid, GaussianCloud,
};
use crate::optim::OptimizerState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdcMode {
    /// Opacity-gradient trigger, delayed conservative pruning.
    Proposed,
    /// Positional-gradient trigger, early aggressive pruning.
    Baseline,
}

/// Signal that selects primitives for densification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensifyTrigger {
    /// Tracked maximum opacity gradient above `tau_densify`.
    OpacityGradient,
    /// Mean view-space positional gradient above `tau_pos`.
    PositionalGradient,
}

/// Which opacity gradient feeds the densification trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpacityGradSpace {
    /// dL/dα on the activated opacity.
    Activated,
    /// dL/d(logit), i.e. dL/dα · α(1 - α).
    Logit,
}

/// Deserialized through [`AdcConfigPatch`] so that unset fields take the
/// defaults of the selected mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "AdcConfigPatch")]
pub struct AdcConfig {
    pub mode: AdcMode,
    pub trigger: DensifyTrigger,
    pub tau_densify: f64,
    pub grad_space: OpacityGradSpace,
    pub densify_interval: usize,
    pub densify_start: usize,
    pub densify_end: usize,
    pub prune_interval: usize,
    pub prune_start: usize,
    pub tau_prune: f64,
    pub n_max: usize,
    /// World-space scale separating clone (below) from split (at or above).
    pub size_threshold: f64,
    pub split_count: usize,
    pub split_scale_divisor: f64,
    /// Clone jitter as a fraction of a sample from the primitive's Gaussian.
    pub clone_jitter: f64,
    /// Apply the transparency-preserving opacity correction on clones.
    pub clone_opacity_correction: bool,
    pub tau_pos: f64,
    /// Period of the standard opacity reset; `None` disables it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opacity_reset_interval: Option<usize>,
}

/// Every [`AdcConfig`] field as optional, applied on top of the preset for
/// `mode`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcConfigPatch {
    pub mode: Option<AdcMode>,
    pub trigger: Option<DensifyTrigger>,
    pub tau_densify: Option<f64>,
    pub grad_space: Option<OpacityGradSpace>,
    pub densify_interval: Option<usize>,
    pub densify_start: Option<usize>,
    pub densify_end: Option<usize>,
    pub prune_interval: Option<usize>,
    pub prune_start: Option<usize>,
    pub tau_prune: Option<f64>,
    pub n_max: Option<usize>,
    pub size_threshold: Option<f64>,
    pub split_count: Option<usize>,
    pub split_scale_divisor: Option<f64>,
    pub clone_jitter: Option<f64>,
    pub clone_opacity_correction: Option<bool>,
    pub tau_pos: Option<f64>,
    pub opacity_reset_interval: Option<usize>,
}

impl From<AdcConfigPatch> for AdcConfig {
    fn from(p: AdcConfigPatch) -> Self {
        let d = AdcConfig::for_mode(p.mode.unwrap_or(AdcMode::Proposed));
        AdcConfig {
            mode: d.mode,
            trigger: p.trigger.unwrap_or(d.trigger),
            tau_densify: p.tau_densify.unwrap_or(d.tau_densify),
            grad_space: p.grad_space.unwrap_or(d.grad_space),
            densify_interval: p.densify_interval.unwrap_or(d.densify_interval),
            densify_start: p.densify_start.unwrap_or(d.densify_start),
            densify_end: p.densify_end.unwrap_or(d.densify_end),
            prune_interval: p.prune_interval.unwrap_or(d.prune_interval),
            prune_start: p.prune_start.unwrap_or(d.prune_start),
            tau_prune: p.tau_prune.unwrap_or(d.tau_prune),
            n_max: p.n_max.unwrap_or(d.n_max),
            size_threshold: p.size_threshold.unwrap_or(d.size_threshold),
            split_count: p.split_count.unwrap_or(d.split_count),
            split_scale_divisor: p.split_scale_divisor.unwrap_or(d.split_scale_divisor),
            clone_jitter: p.clone_jitter.unwrap_or(d.clone_jitter),
            clone_opacity_correction: p.clone_opacity_correction.unwrap_or(d.clone_opacity_correction),
            tau_pos: p.tau_pos.unwrap_or(d.tau_pos),
            opacity_reset_interval: p.opacity_reset_interval.or(d.opacity_reset_interval),
        }
    }
}

impl AdcConfig {
    pub fn proposed() -> Self {
        Self {
            mode: AdcMode::Proposed,
            trigger: DensifyTrigger::OpacityGradient,
            tau_densify: 0.002,
            grad_space: OpacityGradSpace::Activated,
            densify_interval: 100,
            densify_start: 500,
            densify_end: 8000,
            prune_interval: 100,
            prune_start: 2000,
            tau_prune: 0.001,
            n_max: 5000,
            size_threshold: 0.05,
            split_count: 2,
            split_scale_divisor: 1.6,
            clone_jitter: 0.01,
            clone_opacity_correction: true,
            tau_pos: 0.0002,
            opacity_reset_interval: None,
        }
    }

    /// Standard schedule: pruning from iteration 500 at threshold 0.005.
    pub fn baseline() -> Self {
        Self {
            mode: AdcMode::Baseline,
            trigger: DensifyTrigger::PositionalGradient,
            prune_start: 500,
            tau_prune: 0.005,
            ..Self::proposed()
        }
    }

    pub fn for_mode(mode: AdcMode) -> Self {
        match mode {
            AdcMode::Proposed => Self::proposed(),
            AdcMode::Baseline => Self::baseline(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_prune > 0.0 && self.tau_prune < 1.0) {
            return Err(Error::validation(format!("tau_prune {} outside (0, 1)", self.tau_prune)));
        }
        if self.n_max < 1 {
            return Err(Error::validation("n_max must be at least 1"));
        }
        if !(self.tau_densify > 0.0) {
            return Err(Error::validation("tau_densify must be positive"));
        }
        if self.densify_interval == 0 || self.prune_interval == 0 {
            return Err(Error::validation("densify and prune intervals must be positive"));
        }
        if self.split_count < 1 || !(self.split_scale_divisor > 0.0) {
            return Err(Error::validation("split_count >= 1 and split_scale_divisor > 0 required"));
        }
        if self.opacity_reset_interval == Some(0) {
            return Err(Error::validation("opacity_reset_interval must be positive"));
        }
        Ok(())
    }

    /// Densification runs at multiples of the interval within
    /// `[densify_start, densify_end]`.
    pub fn is_densify_step(&self, iteration: usize) -> bool {
        iteration >= self.densify_start
            && iteration <= self.densify_end
            && iteration > 0
            && iteration.is_multiple_of(self.densify_interval)
    }

    /// Pruning runs at every multiple of the interval; opacity pruning itself
    /// is a no-op before `prune_start`.
    pub fn is_prune_step(&self, iteration: usize) -> bool {
        iteration > 0 && iteration.is_multiple_of(self.prune_interval)
    }
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self::proposed()
    }
}

/// Per-primitive statistics gathered between densification steps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdcState {
    pub max_alpha_grad: Vec<f64>,
    pub pos_grad_accum: Vec<f64>,
    pub pos_grad_count: Vec<u32>,
}

impl AdcState {
    pub fn new(n: usize) -> Self {
        Self {
            max_alpha_grad: vec![0.0; n],
            pos_grad_accum: vec![0.0; n],
            pos_grad_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.max_alpha_grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.max_alpha_grad.is_empty()
    }

    /// Zeroes every accumulator.
    pub fn reset(&mut self) {
        self.max_alpha_grad.fill(0.0);
        self.pos_grad_accum.fill(0.0);
        self.pos_grad_count.fill(0);
    }

    fn resize_zeroed(&mut self, n: usize) {
        *self = Self::new(n);
    }

    fn retain_rows(&mut self, keep: &[bool]) {
        retain_by_mask(&mut self.max_alpha_grad, keep);
        retain_by_mask(&mut self.pos_grad_accum, keep);
        retain_by_mask(&mut self.pos_grad_count, keep);
    }

    /// Folds one iteration's gradients into the running maxima. The
    /// positional accumulators only count primitives whose footprint touched
    /// the image.
    pub fn track(&mut self, alpha_grads: &[f64], mean2d_grad_norms: &[f64], visible: &[bool]) -> Result<()> {
        self.track_opacity(alpha_grads)?;
        self.track_positional(mean2d_grad_norms, visible)
    }

    /// `max_alpha_grad[i] = max(max_alpha_grad[i], |g[i]|)`.
    pub fn track_opacity(&mut self, alpha_grads: &[f64]) -> Result<()> {
        self.check_len("opacity gradients", alpha_grads.len())?;
        for (acc, g) in self.max_alpha_grad.iter_mut().zip(alpha_grads) {
            *acc = acc.max(g.abs());
        }
        Ok(())
    }

    pub fn track_positional(&mut self, mean2d_grad_norms: &[f64], visible: &[bool]) -> Result<()> {
        self.check_len("positional gradients", mean2d_grad_norms.len())?;
        self.check_len("visibility flags", visible.len())?;
        for i in 0..self.len() {
            if visible[i] {
                self.pos_grad_accum[i] += mean2d_grad_norms[i];
                self.pos_grad_count[i] += 1;
            }
        }
        Ok(())
    }

    fn check_len(&self, what: &str, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::validation(format!(
                "tracking {got} {what} against {} primitives",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Indices whose tracked maximum opacity gradient strictly exceeds
/// `tau_densify`, ascending.
pub fn select_densify(state: &AdcState, config: &AdcConfig) -> Vec<usize> {
    state
        .max_alpha_grad
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > config.tau_densify)
        .map(|(i, _)| i)
        .collect()
}

/// Selection under the configured trigger.
pub fn select(state: &AdcState, config: &AdcConfig) -> Vec<usize> {
    match config.trigger {
        DensifyTrigger::OpacityGradient => select_densify(state, config),
        DensifyTrigger::PositionalGradient => baseline_select_densify(state, config),
    }
}

/// Indices whose mean positional gradient strictly exceeds `tau_pos`.
/// Primitives never observed are not selected.
pub fn baseline_select_densify(state: &AdcState, config: &AdcConfig) -> Vec<usize> {
    (0..state.len())
        .filter(|&i| {
            let count = state.pos_grad_count[i];
            count > 0 && state.pos_grad_accum[i] / count as f64 > config.tau_pos
        })
        .collect()
}

/// Opacity for each of two co-located copies so that together they are
/// exactly as opaque as one primitive of opacity `alpha`:
/// `(1 - alpha) = (1 - corrected)^2`.
pub fn clone_opacity_correction(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            value: alpha,
            domain: "(0, 1)",
        });
    }
    // 1 - sqrt(1 - a), written to avoid cancellation for small a.
    Ok(alpha / (1.0 + (1.0 - alpha).sqrt()))
}

/// Outcome of a densification pass.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DensifyReport {
    pub cloned: Vec<usize>,
    pub split: Vec<usize>,
    pub n_before: usize,
    pub n_after: usize,
}

/// Samples a point from the primitive's own 3D Gaussian, relative to its mean.
fn sample_offset(cloud: &GaussianCloud, i: usize, rng: &mut impl Rng) -> Vector3<f64> {
    let scale = cloud.scale(i);
    let z = Vector3::new(
        rng.sample::<f64, _>(StandardNormal) * scale[0],
        rng.sample::<f64, _>(StandardNormal) * scale[1],
        rng.sample::<f64, _>(StandardNormal) * scale[2],
    );
    rotation_matrix(&normalize_quat(cloud.rotations[i])) * z
}

/// Clones small and splits large selected primitives, keeps optimizer rows
/// aligned and resets all tracked statistics.
///
/// Layout afterwards: surviving originals in their prior order, then one
/// clone per cloned index, then `split_count` children per split index.
pub fn densify(
    cloud: &mut GaussianCloud,
    optimizer: &mut OptimizerState,
    adc: &mut AdcState,
    indices: &[usize],
    config: &AdcConfig,
    rng: &mut impl Rng,
) -> Result<DensifyReport> {
    let n = cloud.len();
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::validation(format!("densify index {i} out of range for {n} primitives")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::validation(format!("densify index {i} listed twice")));
        }
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let (clones, splits): (Vec<usize>, Vec<usize>) = sorted.into_iter().partition(|&i| {
        let s = cloud.scale(i);
        s[0].max(s[1]).max(s[2]) < config.size_threshold
    });

    for &i in &clones {
        if config.clone_opacity_correction {
            let corrected = clone_opacity_correction(cloud.opacity(i))?;
            cloud.opacity_logits[i] = inverse_opacity_activation(corrected)?;
        }
        let jitter = if config.clone_jitter > 0.0 {
            sample_offset(cloud, i, rng) * config.clone_jitter
        } else {
            Vector3::zeros()
        };
        cloud.push_row_of(i);
        let last = cloud.len() - 1;
        for k in 0..3 {
            cloud.positions[last][k] += jitter[k];
        }
    }

    let shrink = config.split_scale_divisor.ln();
    for &i in &splits {
        for _ in 0..config.split_count {
            let offset = sample_offset(cloud, i, rng);
            cloud.push_row_of(i);
            let last = cloud.len() - 1;
            for k in 0..3 {
                cloud.positions[last][k] += offset[k];
                cloud.log_scales[last][k] -= shrink;
            }
        }
    }
    optimizer.insert_rows(cloud.len() - n);

    if !splits.is_empty() {
        let mut keep = vec![true; cloud.len()];
        for &i in &splits {
            keep[i] = false;
        }
        cloud.retain_rows(&keep);
        optimizer.retain_rows(&keep);
    }
    adc.resize_zeroed(cloud.len());

    Ok(DensifyReport {
        cloned: clones,
        split: splits,
        n_before: n,
        n_after: cloud.len(),
    })
}

/// Outcome of a pruning pass.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PruneReport {
    pub removed: Vec<usize>,
    pub n_before: usize,
    pub n_after: usize,
}

fn remove_rows(
    cloud: &mut GaussianCloud,
    optimizer: &mut OptimizerState,
    adc: &mut AdcState,
    mut removed: Vec<usize>,
) -> PruneReport {
    let n = cloud.len();
    removed.sort_unstable();
    if !removed.is_empty() {
        let mut keep = vec![true; n];
        for &i in &removed {
            keep[i] = false;
        }
        cloud.retain_rows(&keep);
        optimizer.retain_rows(&keep);
        adc.retain_rows(&keep);
    }
    PruneReport {
        removed,
        n_before: n,
        n_after: cloud.len(),
    }
}

/// Removes primitives with opacity below `tau_prune`, from `prune_start`
/// on.
pub fn prune_transparent(
    cloud: &mut GaussianCloud,
    optimizer: &mut OptimizerState,
    adc: &mut AdcState,
    iteration: usize,
    config: &AdcConfig,
) -> PruneReport {
    if iteration < config.prune_start {
        return remove_rows(cloud, optimizer, adc, Vec::new());
    }
    let removed = (0..cloud.len())
        .filter(|&i| sigmoid(cloud.opacity_logits[i]) < config.tau_prune)
        .collect();
    remove_rows(cloud, optimizer, adc, removed)
}

/// Removes the `N - n_max` least opaque primitives; among equal opacities
/// the higher index goes first.
pub fn enforce_budget(
    cloud: &mut GaussianCloud,
    optimizer: &mut OptimizerState,
    adc: &mut AdcState,
    config: &AdcConfig,
) -> PruneReport {
    let n = cloud.len();
    if n <= config.n_max {
        return remove_rows(cloud, optimizer, adc, Vec::new());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        cloud.opacity_logits[a]
            .total_cmp(&cloud.opacity_logits[b])
            .then(b.cmp(&a))
    });
    order.truncate(n - config.n_max);
    remove_rows(cloud, optimizer, adc, order)
}

/// Resets every opacity to at most `ceiling` (standard 3DGS behavior,
/// disabled by default).
pub fn reset_opacities(cloud: &mut GaussianCloud, ceiling: f64) -> Result<()> {
    let cap = inverse_opacity_activation(ceiling)?;
    for l in &mut cloud.opacity_logits {
        *l = l.min(cap);
    }
    Ok(())
}
