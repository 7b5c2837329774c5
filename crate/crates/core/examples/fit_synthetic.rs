//! Generates a synthetic scene in memory and fits it from its sparse
//! initial point cloud, printing held-out PSNR as training proceeds.
//!
//! cargo run --release --example fit_synthetic -- [scene] [iterations] [tau_densify]

use std::time::Instant;

use splatfit::io::{generate_synthetic, SyntheticSpec};
use splatfit::trainer::{LogRecord, Trainer};
use splatfit::TrainConfig;

fn main() -> splatfit::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("textured-plane");
    let iterations = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let syn = generate_synthetic(&SyntheticSpec::named(name)?, 0)?;

    let mut config = TrainConfig {
        max_iterations: iterations,
        ..TrainConfig::default()
    };
    if let Some(tau) = args.get(3).and_then(|s| s.parse().ok()) {
        config.adc.tau_densify = tau;
    }
    let start = Instant::now();
    let mut trainer = Trainer::new(&syn.scene, config)?;
    let mut printed = 0;
    while !trainer.is_done() {
        trainer.step()?;
        for r in &trainer.log()[printed..] {
            if let LogRecord::Eval { iteration, psnr, ssim, n } = r {
                println!(
                    "iter {iteration:>6}  psnr {psnr:7.3}  ssim {ssim:.4}  N {n:>5}  {:.1}s",
                    start.elapsed().as_secs_f64()
                );
            }
        }
        printed = trainer.log().len();
    }
    Ok(())
}
