//! The optimization loop: render, loss, backward, Adam, track, then
//! densify and prune on their schedules.

mod ablation;
mod records;
mod metrics;

pub use ablation::{ablate, variant_config, AblationRow, AblationTable, AblationVariant, RunSummary, Stat};
pub use records::{max_n_after_prune, read_ndjson, write_ndjson, LogRecord, PruneKind};
pub use metrics::{evaluate, psnr, EvalReport, ViewMetrics, PSNR_CAP};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adc::{self, AdcConfig, AdcState, OpacityGradSpace};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{inverse_opacity_activation, logit, GaussianCloud, GradientBuffer};
use crate::image::Image;
use crate::loss::{depth_mask, total_loss_masked, LossBreakdown, LossWeights};
use crate::optim::{self, LearningRates, OptimizerState};
use crate::render::{render_backward_with, render_with, RenderSettings};

/// One posed image, with an estimated depth map for training views.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub name: String,
    pub image: Image,
    pub camera: Camera,
    pub depth: Option<Image>,
}

impl View {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        let c = &self.camera;
        if (self.image.width, self.image.height, self.image.channels) != (c.width, c.height, 3) {
            return Err(Error::validation(format!(
                "view `{}`: image is {}x{}x{}, camera expects {}x{}x3",
                self.name, self.image.width, self.image.height, self.image.channels, c.width, c.height
            )));
        }
        if let Some(d) = &self.depth {
            if (d.width, d.height, d.channels) != (c.width, c.height, 1) {
                return Err(Error::validation(format!(
                    "view `{}`: depth is {}x{}x{}, camera expects {}x{}x1",
                    self.name, d.width, d.height, d.channels, c.width, c.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub train: Vec<View>,
    pub test: Vec<View>,
    /// Initial point cloud.
    pub points: Vec<[f64; 3]>,
    /// Point colors in [0, 1].
    pub colors: Vec<[f64; 3]>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::validation("scene has no training views"));
        }
        for v in self.train.iter().chain(&self.test) {
            v.validate()?;
        }
        if self.points.len() != self.colors.len() {
            return Err(Error::validation(format!(
                "{} points but {} colors",
                self.points.len(),
                self.colors.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewSampling {
    /// One training view per iteration, cycling in order.
    RoundRobin,
    /// Every training view each iteration, losses averaged.
    AllViews,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub seed: u64,
    pub background: [f64; 3],
    /// Held-out evaluation period; 0 evaluates only at the start and end.
    pub eval_interval: usize,
    pub view_sampling: ViewSampling,
    pub initial_opacity: f64,
    pub loss: LossWeights,
    pub adc: AdcConfig,
    pub learning_rates: LearningRates,
    pub render: RenderSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            seed: 0,
            background: [0.0; 3],
            eval_interval: 500,
            view_sampling: ViewSampling::RoundRobin,
            initial_opacity: 0.1,
            loss: LossWeights::default(),
            adc: AdcConfig::default(),
            learning_rates: LearningRates::default(),
            render: RenderSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.adc.validate()?;
        if !(self.initial_opacity > 0.0 && self.initial_opacity < 1.0) {
            return Err(Error::validation(format!(
                "initial_opacity {} outside (0, 1)",
                self.initial_opacity
            )));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::validation(format!("background {:?} outside [0, 1]", self.background)));
        }
        Ok(())
    }
}

/// Initial scale for points with no usable neighbors, as a fraction of the
/// bounding-box diagonal.
const FALLBACK_SCALE_FRACTION: f64 = 0.01;
const NEIGHBORS: usize = 3;
// Input colors are clamped away from 0 and 1 before the inverse sigmoid.
const COLOR_MARGIN: f64 = 1e-3;

/// Builds the starting cloud from a point cloud: isotropic scale equal to
/// the mean distance to the three nearest neighbors, identity rotation,
/// uniform opacity.
pub fn init_cloud(points: &[[f64; 3]], colors: &[[f64; 3]], config: &TrainConfig) -> Result<GaussianCloud> {
    if points.is_empty() {
        return Err(Error::validation("initial point cloud is empty"));
    }
    if points.len() != colors.len() {
        return Err(Error::validation(format!(
            "{} points but {} colors",
            points.len(),
            colors.len()
        )));
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diag = (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt();
    let fallback = if diag > 0.0 { diag * FALLBACK_SCALE_FRACTION } else { FALLBACK_SCALE_FRACTION };

    let opacity_logit = inverse_opacity_activation(config.initial_opacity)?;
    let mut cloud = GaussianCloud::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        dists.clear();
        for (j, q) in points.iter().enumerate() {
            if i != j {
                dists.push(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt());
            }
        }
        dists.sort_by(f64::total_cmp);
        let k = dists.len().min(NEIGHBORS);
        let mean = if k == 0 { 0.0 } else { dists[..k].iter().sum::<f64>() / k as f64 };
        let scale = if mean > 0.0 { mean } else { fallback };
        let c = colors[i];
        let raw = [
            logit(c[0].clamp(COLOR_MARGIN, 1.0 - COLOR_MARGIN))?,
            logit(c[1].clamp(COLOR_MARGIN, 1.0 - COLOR_MARGIN))?,
            logit(c[2].clamp(COLOR_MARGIN, 1.0 - COLOR_MARGIN))?,
        ];
        cloud.push_raw(*p, [scale.ln(); 3], [1.0, 0.0, 0.0, 0.0], opacity_logit, raw);
    }
    Ok(cloud)
}

/// Final cloud and the full metrics log of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub cloud: GaussianCloud,
    pub log: Vec<LogRecord>,
}

impl TrainOutcome {
    /// Most recent held-out evaluation, if any.
    pub fn final_eval(&self) -> Option<(f64, f64)> {
        self.log.iter().rev().find_map(|r| match r {
            LogRecord::Eval { psnr, ssim, .. } => Some((*psnr, *ssim)),
            _ => None,
        })
    }

    /// Evaluation at iteration 0, if any.
    pub fn initial_eval(&self) -> Option<(f64, f64)> {
        self.log.iter().find_map(|r| match r {
            LogRecord::Eval { iteration: 0, psnr, ssim, .. } => Some((*psnr, *ssim)),
            _ => None,
        })
    }
}

/// Training state, advanced one iteration at a time.
pub struct Trainer<'a> {
    scene: &'a Scene,
    config: TrainConfig,
    cloud: GaussianCloud,
    optimizer: OptimizerState,
    adc: AdcState,
    rng: ChaCha8Rng,
    iteration: usize,
    log: Vec<LogRecord>,
}

impl<'a> Trainer<'a> {
    /// Starts from [`init_cloud`] on the scene's point cloud.
    pub fn new(scene: &'a Scene, config: TrainConfig) -> Result<Self> {
        let cloud = init_cloud(&scene.points, &scene.colors, &config)?;
        Self::with_cloud(scene, config, cloud)
    }

    pub fn with_cloud(scene: &'a Scene, config: TrainConfig, cloud: GaussianCloud) -> Result<Self> {
        scene.validate()?;
        config.validate()?;
        cloud.validate()?;
        let n = cloud.len();
        let mut trainer = Self {
            scene,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            cloud,
            optimizer: OptimizerState::new(n),
            adc: AdcState::new(n),
            iteration: 0,
            log: Vec::new(),
        };
        trainer.log_eval()?;
        Ok(trainer)
    }

    pub fn cloud(&self) -> &GaussianCloud {
        &self.cloud
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.max_iterations
    }

    /// Runs the remaining iterations.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            cloud: self.cloud,
            log: self.log,
        }
    }

    fn log_eval(&mut self) -> Result<()> {
        if self.scene.test.is_empty() {
            return Ok(());
        }
        let report = evaluate(&self.cloud, &self.scene.test, self.config.background, &self.config.render)?;
        self.log.push(LogRecord::Eval {
            iteration: self.iteration,
            psnr: report.mean_psnr,
            ssim: report.mean_ssim,
            n: self.cloud.len(),
        });
        Ok(())
    }

    /// Loss and gradients for one view, with the loss scaled by `weight`.
    fn view_gradients(&self, view: &View, weight: f64) -> Result<(LossBreakdown, crate::render::BackwardOutput)> {
        let cfg = &self.config;
        let start = Instant::now();
        let out = render_with(&self.cloud, &view.camera, cfg.background, &cfg.render);
        log::trace!(
            "render `{}`: {} primitives in {:.3} ms",
            view.name,
            self.cloud.len(),
            start.elapsed().as_secs_f64() * 1e3
        );
        let mask = depth_mask(&out.accum_alpha);
        let (weights, d_est) = match &view.depth {
            Some(d) => (cfg.loss, d.clone()),
            None => (
                LossWeights {
                    w_depth: 0.0,
                    ..cfg.loss
                },
                Image::new(view.camera.width, view.camera.height, 1),
            ),
        };
        let mut loss = total_loss_masked(&out.color, &out.depth, &view.image, &d_est, &mask, &weights)?;
        if weight != 1.0 {
            loss.d_color.data.iter_mut().for_each(|g| *g *= weight);
            loss.d_depth.data.iter_mut().for_each(|g| *g *= weight);
        }
        let back = render_backward_with(
            &self.cloud,
            &view.camera,
            cfg.background,
            &loss.d_color,
            &loss.d_depth,
            &cfg.render,
        )?;
        Ok((loss.breakdown, back))
    }

    /// One full iteration of the loop.
    pub fn step(&mut self) -> Result<()> {
        let k = self.iteration + 1;
        let views = &self.scene.train;
        let (view_index, breakdown, grads, alpha_grads) = match self.config.view_sampling {
            ViewSampling::RoundRobin => {
                let v = (k - 1) % views.len();
                let (b, back) = self.view_gradients(&views[v], 1.0)?;
                self.adc.track_positional(&back.mean2d_grad_norms, &back.visible)?;
                (Some(v), b, back.grads, back.alpha_grads)
            }
            ViewSampling::AllViews => {
                let weight = 1.0 / views.len() as f64;
                let n = self.cloud.len();
                let mut grads = GradientBuffer::zeros(n);
                let mut alpha_grads = vec![0.0; n];
                let mut total = LossBreakdown {
                    total: 0.0,
                    l1: 0.0,
                    d_ssim: 0.0,
                    depth: None,
                };
                for view in views {
                    let (b, back) = self.view_gradients(view, weight)?;
                    total.total += weight * b.total;
                    total.l1 += weight * b.l1;
                    total.d_ssim += weight * b.d_ssim;
                    if let Some(d) = b.depth {
                        total.depth = Some(total.depth.unwrap_or(0.0) + weight * d);
                    }
                    accumulate(&mut grads, &back.grads);
                    for (a, g) in alpha_grads.iter_mut().zip(&back.alpha_grads) {
                        *a += g;
                    }
                    self.adc.track_positional(&back.mean2d_grad_norms, &back.visible)?;
                }
                (None, total, grads, alpha_grads)
            }
        };
        if !breakdown.total.is_finite() {
            return Err(Error::Training {
                iteration: k,
                reason: format!("non-finite loss {breakdown:?}"),
            });
        }
        match self.config.adc.grad_space {
            OpacityGradSpace::Activated => self.adc.track_opacity(&alpha_grads)?,
            OpacityGradSpace::Logit => self.adc.track_opacity(&grads.opacity_logits)?,
        }

        let lr = self.config.learning_rates;
        let position_lr = lr.position_at(k - 1, self.config.max_iterations);
        optim::step(&mut self.cloud, &mut self.optimizer, &grads, &lr, position_lr).map_err(|e| {
            Error::Training {
                iteration: k,
                reason: e.to_string(),
            }
        })?;

        self.run_adc(k)?;
        self.iteration = k;
        self.log.push(LogRecord::Iteration {
            iteration: k,
            view: view_index,
            loss: breakdown,
            n: self.cloud.len(),
        });
        let eval_due = self.config.eval_interval > 0 && k % self.config.eval_interval == 0;
        if eval_due || k == self.config.max_iterations {
            self.log_eval()?;
        }
        Ok(())
    }

    fn run_adc(&mut self, k: usize) -> Result<()> {
        let cfg = self.config.adc.clone();
        if cfg.is_densify_step(k) {
            let selected = adc::select(&self.adc, &cfg);
            let report = adc::densify(
                &mut self.cloud,
                &mut self.optimizer,
                &mut self.adc,
                &selected,
                &cfg,
                &mut self.rng,
            )?;
            log::debug!(
                "iteration {k}: densify cloned {} split {} -> {} primitives",
                report.cloned.len(),
                report.split.len(),
                report.n_after
            );
            self.log.push(LogRecord::Densify {
                iteration: k,
                cloned: report.cloned,
                split: report.split,
                n_before: report.n_before,
                n_after: report.n_after,
            });
        }
        if let Some(interval) = cfg.opacity_reset_interval {
            if k % interval == 0 && k <= cfg.densify_end {
                adc::reset_opacities(&mut self.cloud, OPACITY_RESET_CEILING)?;
                self.log.push(LogRecord::OpacityReset { iteration: k });
            }
        }
        if cfg.is_prune_step(k) {
            let r = adc::prune_transparent(&mut self.cloud, &mut self.optimizer, &mut self.adc, k, &cfg);
            if !r.removed.is_empty() {
                log::debug!("iteration {k}: pruned {} transparent primitives", r.removed.len());
            }
            self.log.push(LogRecord::Prune {
                iteration: k,
                kind: PruneKind::Opacity,
                removed: r.removed,
                n_before: r.n_before,
                n_after: r.n_after,
            });
            let r = adc::enforce_budget(&mut self.cloud, &mut self.optimizer, &mut self.adc, &cfg);
            self.log.push(LogRecord::Prune {
                iteration: k,
                kind: PruneKind::Budget,
                removed: r.removed,
                n_before: r.n_before,
                n_after: r.n_after,
            });
        }
        Ok(())
    }
}

const OPACITY_RESET_CEILING: f64 = 0.01;

fn accumulate(into: &mut GradientBuffer, from: &GradientBuffer) {
    fn add<const W: usize>(a: &mut [[f64; W]], b: &[[f64; W]]) {
        for (x, y) in a.iter_mut().zip(b) {
            for k in 0..W {
                x[k] += y[k];
            }
        }
    }
    add(&mut into.positions, &from.positions);
    add(&mut into.log_scales, &from.log_scales);
    add(&mut into.rotations, &from.rotations);
    add(&mut into.colors_raw, &from.colors_raw);
    for (x, y) in into.opacity_logits.iter_mut().zip(&from.opacity_logits) {
        *x += y;
    }
}

/// Trains from the scene's initial point cloud for `config.max_iterations`.
pub fn train(scene: &Scene, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(scene, config.clone())?;
    trainer.run()?;
    Ok(trainer.into_outcome())
}
