//! Software splatting: projection, front-to-back compositing and the exact
//! analytic backward pass.

mod backward;
mod forward;
mod project;

pub use backward::{render_backward, render_backward_with, BackwardOutput};
pub use forward::{render, render_with, RenderOutput};
pub use project::{project, project_with, PixelBox, ProjectedGaussian};

use serde::{Deserialize, Serialize};

/// Numerical constants of the rasterizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSettings {
    /// Primitives at camera depth `<= near` are dropped.
    pub near: f64,
    /// Added to the diagonal of every projected covariance, in pixels².
    pub cov2d_regularization: f64,
    /// Upper bound on per-pixel alpha.
    pub alpha_clamp: f64,
    /// Per-pixel alphas strictly below this are skipped. Zero disables
    /// skipping (and footprint culling).
    pub alpha_skip: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            near: 0.01,
            cov2d_regularization: 0.3,
            alpha_clamp: 0.99,
            alpha_skip: 1.0 / 255.0,
        }
    }
}

/// Pixel-space footprint shared by the forward and backward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Splat {
    pub mean: [f64; 2],
    /// Inverse of the 2D covariance as (A, B, C) of `[[A, B], [B, C]]`.
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    pub depth: f64,
}

/// One evaluated pixel/primitive pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Contribution {
    /// Position in the depth-sorted list.
    pub slot: usize,
    pub alpha: f64,
    pub falloff: f64,
    pub transmittance: f64,
    pub clamped: bool,
    pub dx: f64,
    pub dy: f64,
}

impl Splat {
    /// Evaluates the splat at pixel center `(px, py)`. `None` when skipped.
    #[inline]
    pub fn evaluate(&self, px: f64, py: f64, settings: &RenderSettings) -> Option<(f64, f64, bool, f64, f64)> {
        let dx = px - self.mean[0];
        let dy = py - self.mean[1];
        let [a, b, c] = self.conic;
        let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
        let falloff = power.exp();
        let alpha = self.opacity * falloff;
        if alpha < settings.alpha_skip || alpha <= 0.0 {
            return None;
        }
        if alpha > settings.alpha_clamp {
            Some((settings.alpha_clamp, falloff, true, dx, dy))
        } else {
            Some((alpha, falloff, false, dx, dy))
        }
    }
}

/// Composites the depth-ordered `candidates` of one pixel, recording every
/// non-skipped pair into `trace`. Returns the final transmittance.
#[inline]
pub(crate) fn trace_pixel(
    splats: &[Splat],
    candidates: &[usize],
    px: f64,
    py: f64,
    settings: &RenderSettings,
    trace: &mut Vec<Contribution>,
) -> f64 {
    trace.clear();
    let mut t = 1.0;
    for &slot in candidates {
        if let Some((alpha, falloff, clamped, dx, dy)) = splats[slot].evaluate(px, py, settings) {
            trace.push(Contribution {
                slot,
                alpha,
                falloff,
                transmittance: t,
                clamped,
                dx,
                dy,
            });
            t *= 1.0 - alpha;
        }
    }
    t
}

/// Row-major image rows each listing depth-ordered candidate slots whose
/// footprint can reach that row, plus per-slot x-ranges.
pub(crate) struct RowBins {
    pub rows: Vec<Vec<usize>>,
    pub x_range: Vec<(usize, usize)>,
}

pub(crate) fn bin_rows(projected: &[ProjectedGaussian], height: usize) -> RowBins {
    let mut rows = vec![Vec::new(); height];
    let mut x_range = Vec::with_capacity(projected.len());
    for (slot, p) in projected.iter().enumerate() {
        match p.bbox {
            Some(bb) => {
                for row in &mut rows[bb.y0..=bb.y1] {
                    row.push(slot);
                }
                x_range.push((bb.x0, bb.x1));
            }
            None => x_range.push((1, 0)),
        }
    }
    RowBins { rows, x_range }
}

/// Number of image rows handled per accumulation chunk in the backward pass.
/// Fixed so that reductions do not depend on the worker count.
pub(crate) const ROWS_PER_CHUNK: usize = 4;
