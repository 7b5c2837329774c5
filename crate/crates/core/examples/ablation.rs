//! Runs the four ablation configurations on a synthetic scene over several
//! seeds and prints the comparison table.
//!
//! cargo run --release --example ablation -- [iterations] [seeds]

use splatfit::io::{generate_synthetic, SyntheticSpec};
use splatfit::trainer::ablate;
use splatfit::TrainConfig;

fn main() -> splatfit::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let iterations = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let syn = generate_synthetic(&SyntheticSpec::named("textured-plane")?, 0)?;
    let base = TrainConfig {
        max_iterations: iterations,
        eval_interval: 0,
        ..TrainConfig::default()
    };
    let seeds: Vec<u64> = (0..seeds).collect();
    let table = ablate(&syn.scene, &base, &seeds)?;
    print!("{table}");
    for row in &table.rows {
        let runs: Vec<String> = row.runs.iter().map(|r| format!("{:.2}/{}", r.psnr, r.n)).collect();
        println!("{:<32} {}", row.variant.label(), runs.join("  "));
    }
    Ok(())
}
