//! Component ablations over several seeds.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc::{AdcConfig, DensifyTrigger};
use crate::error::{Error, Result};

use super::{max_n_after_prune, train, Scene, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    Full,
    /// Opacity pruning on the standard early, aggressive schedule.
    AggressivePruning,
    /// Standard positional-gradient trigger with conservative pruning.
    PositionalDensification,
    NoDepth,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::AggressivePruning,
        AblationVariant::PositionalDensification,
        AblationVariant::NoDepth,
        AblationVariant::Full,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::AggressivePruning => "w/o conservative pruning",
            AblationVariant::PositionalDensification => "w/o error-driven densification",
            AblationVariant::NoDepth => "w/o depth loss",
        }
    }
}

/// `base` with one component swapped for its standard counterpart.
pub fn variant_config(base: &TrainConfig, variant: AblationVariant) -> TrainConfig {
    let mut c = base.clone();
    match variant {
        AblationVariant::Full => {}
        AblationVariant::AggressivePruning => {
            let b = AdcConfig::baseline();
            c.adc.prune_start = b.prune_start;
            c.adc.tau_prune = b.tau_prune;
        }
        AblationVariant::PositionalDensification => {
            c.adc.trigger = DensifyTrigger::PositionalGradient;
        }
        AblationVariant::NoDepth => c.loss.w_depth = 0.0,
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub n: usize,
    /// Largest primitive count logged after any budget pass.
    pub max_n_after_prune: Option<usize>,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub spread: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Stat { mean: f64::NAN, spread: f64::NAN };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let spread = if v.len() < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, spread }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub w_depth: f64,
    pub n_max: usize,
    pub runs: Vec<RunSummary>,
    pub psnr: Stat,
    pub ssim: Stat,
    pub n: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, variant: AblationVariant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<32} {:>16} {:>16} {:>18} {:>8}",
            "configuration", "PSNR", "SSIM", "N", "w_depth"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<32} {:>7.3} ± {:<6.3} {:>7.4} ± {:<6.4} {:>8.1} ± {:<7.1} {:>8}",
                r.variant.label(),
                r.psnr.mean,
                r.psnr.spread,
                r.ssim.mean,
                r.ssim.spread,
                r.n.mean,
                r.n.spread,
                r.w_depth
            )?;
        }
        Ok(())
    }
}

/// Trains every variant once per seed and reports held-out PSNR, SSIM and
/// final primitive count. Runs execute in parallel; each is deterministic.
pub fn ablate(scene: &Scene, base: &TrainConfig, seeds: &[u64]) -> Result<AblationTable> {
    if scene.test.is_empty() {
        return Err(Error::validation("ablation needs held-out views"));
    }
    let jobs: Vec<(AblationVariant, u64)> = AblationVariant::ALL
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let runs: Vec<(AblationVariant, RunSummary)> = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let mut config = variant_config(base, variant);
            config.seed = seed;
            let outcome = train(scene, &config)?;
            let (psnr, ssim) = outcome.final_eval().expect("scene has held-out views");
            log::info!("{} seed {seed}: psnr {psnr:.3} N {}", variant.label(), outcome.cloud.len());
            Ok((
                variant,
                RunSummary {
                    seed,
                    psnr,
                    ssim,
                    n: outcome.cloud.len(),
                    max_n_after_prune: max_n_after_prune(&outcome.log),
                },
            ))
        })
        .collect::<Result<_>>()?;

    let rows = AblationVariant::ALL
        .iter()
        .map(|&variant| {
            let config = variant_config(base, variant);
            let mine: Vec<RunSummary> = runs.iter().filter(|(v, _)| *v == variant).map(|(_, r)| *r).collect();
            AblationRow {
                variant,
                w_depth: config.loss.w_depth,
                n_max: config.adc.n_max,
                psnr: Stat::of(mine.iter().map(|r| r.psnr)),
                ssim: Stat::of(mine.iter().map(|r| r.ssim)),
                n: Stat::of(mine.iter().map(|r| r.n as f64)),
                runs: mine,
            }
        })
        .collect();
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_change_one_component() {
        let base = TrainConfig::default();
        let p = variant_config(&base, AblationVariant::AggressivePruning);
        assert_eq!((p.adc.prune_start, p.adc.tau_prune), (500, 0.005));
        assert_eq!(p.adc.trigger, DensifyTrigger::OpacityGradient);
        let d = variant_config(&base, AblationVariant::PositionalDensification);
        assert_eq!(d.adc.trigger, DensifyTrigger::PositionalGradient);
        assert_eq!((d.adc.prune_start, d.adc.tau_prune), (2000, 0.001));
        assert_eq!(variant_config(&base, AblationVariant::NoDepth).loss.w_depth, 0.0);
        assert_eq!(variant_config(&base, AblationVariant::Full), base);
    }

    #[test]
    fn stat_mean_and_spread() {
        let s = Stat::of([1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.spread, 1.0);
        assert_eq!(Stat::of([4.0]).spread, 0.0);
    }
}
