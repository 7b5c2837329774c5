//! Walks one round of density control by hand: track opacity gradients,
//! select, clone/split, prune transparent primitives and enforce a budget.
//!
//! cargo run --example density_control

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use splatfit::adc::{densify, enforce_budget, prune_transparent, select, AdcConfig, AdcState};
use splatfit::{GaussianCloud, OptimizerState};

fn main() -> splatfit::Result<()> {
    let mut cloud = GaussianCloud::new();
    // (scale, opacity): two small and two large primitives, one nearly
    // transparent.
    for (i, (s, a)) in [(0.02, 0.6), (0.03, 0.3), (0.2, 0.8), (0.15, 0.0005), (0.01, 0.9)].iter().enumerate() {
        cloud.push_activated([i as f64 * 0.3, 0.0, 0.0], [*s; 3], [1.0, 0.0, 0.0, 0.0], *a, [0.5; 3])?;
    }
    let config = AdcConfig {
        n_max: 6,
        ..AdcConfig::proposed()
    };
    let mut optimizer = OptimizerState::new(cloud.len());
    let mut state = AdcState::new(cloud.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // Two iterations of per-primitive |dL/dalpha|; the running max is kept.
    state.track_opacity(&[0.004, -0.001, 0.0001, 0.0, 0.0])?;
    state.track_opacity(&[0.001, 0.0005, -0.006, 0.0, 0.003])?;
    println!("max |dL/dalpha| = {:?}", state.max_alpha_grad);

    let selected = select(&state, &config);
    println!("above tau {}: {selected:?}", config.tau_densify);
    let report = densify(&mut cloud, &mut optimizer, &mut state, &selected, &config, &mut rng)?;
    println!(
        "cloned {:?} split {:?}: {} -> {} primitives",
        report.cloned, report.split, report.n_before, report.n_after
    );
    for i in 0..cloud.len() {
        println!("  {i}: opacity {:.4} max scale {:.4}", cloud.opacity(i), cloud.scale(i).iter().cloned().fold(0.0, f64::max));
    }

    let early = prune_transparent(&mut cloud, &mut optimizer, &mut state, 1000, &config);
    println!("prune at 1000 (before start {}): removed {:?}", config.prune_start, early.removed);
    let pruned = prune_transparent(&mut cloud, &mut optimizer, &mut state, 2000, &config);
    println!("prune at 2000: removed {:?}", pruned.removed);
    let budget = enforce_budget(&mut cloud, &mut optimizer, &mut state, &config);
    println!("budget {}: removed {:?}, {} remain", config.n_max, budget.removed, budget.n_after);
    Ok(())
}
