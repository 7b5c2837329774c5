use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use splatfit::io::{
    config_to_toml, load_camera, load_checkpoint, load_scene, make_synthetic, parse_config, save_checkpoint,
    save_pfm, save_png, SyntheticSpec,
};
use splatfit::render::render_with;
use splatfit::trainer::{ablate, evaluate, write_ndjson, Trainer};
use splatfit::TrainConfig;

#[derive(Parser)]
#[command(name = "splatfit", version, about = "Gaussian splatting with opacity-gradient density control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in synthetic scene (textured-plane, cluster) to a directory.
    MakeSynthetic {
        spec: String,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_views: Option<usize>,
        #[arg(long)]
        test_views: Option<usize>,
        /// Square image size in pixels.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train on a scene manifest; writes checkpoint.ply, metrics.ndjson and config.toml.
    Train {
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a checkpoint from a camera (JSON) to PNG.
    Render {
        checkpoint: PathBuf,
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the expected-depth map as PFM.
        #[arg(long)]
        depth: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// PSNR and SSIM of a checkpoint on a manifest's held-out views.
    Eval {
        checkpoint: PathBuf,
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run the four ablation configurations over several seeds.
    Ablate {
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Write the table as JSON here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<TrainConfig> {
    match path {
        Some(p) => parse_config(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::MakeSynthetic {
            spec,
            out_dir,
            seed,
            train_views,
            test_views,
            size,
        } => {
            let mut s = SyntheticSpec::named(&spec)?;
            s.train_views = train_views.unwrap_or(s.train_views);
            s.test_views = test_views.unwrap_or(s.test_views);
            if let Some(size) = size {
                s.focal *= size as f64 / s.width as f64;
                s.width = size;
                s.height = size;
            }
            let manifest = make_synthetic(&s, &out_dir, seed)?;
            println!("{}", manifest.display());
        }
        Command::Train {
            manifest,
            config,
            out,
            iterations,
            seed,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            cfg.max_iterations = iterations.unwrap_or(cfg.max_iterations);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let scene = load_scene(&manifest)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), config_to_toml(&cfg)?)?;
            let mut trainer = Trainer::new(&scene, cfg)?;
            let result = trainer.run();
            write_ndjson(trainer.log(), BufWriter::new(File::create(out.join("metrics.ndjson"))?))?;
            if let Err(e) = result {
                let path = out.join("abort_checkpoint.ply");
                save_checkpoint(trainer.cloud(), &path)?;
                bail!("{e}; diagnostic checkpoint written to {}", path.display());
            }
            let outcome = trainer.into_outcome();
            save_checkpoint(&outcome.cloud, out.join("checkpoint.ply"))?;
            match outcome.final_eval() {
                Some((psnr, ssim)) => println!("N {}  psnr {psnr:.3}  ssim {ssim:.4}", outcome.cloud.len()),
                None => println!("N {}", outcome.cloud.len()),
            }
        }
        Command::Render {
            checkpoint,
            camera,
            out,
            depth,
            config,
        } => {
            let cfg = load_config(config.as_ref())?;
            let cloud = load_checkpoint(&checkpoint)?;
            cloud.validate()?;
            let camera = load_camera(&camera)?;
            let rendered = render_with(&cloud, &camera, cfg.background, &cfg.render);
            save_png(&rendered.color, &out)?;
            if let Some(d) = depth {
                save_pfm(&rendered.depth, d)?;
            }
        }
        Command::Eval {
            checkpoint,
            manifest,
            config,
            json,
        } => {
            let cfg = load_config(config.as_ref())?;
            let cloud = load_checkpoint(&checkpoint)?;
            cloud.validate()?;
            let scene = load_scene(&manifest)?;
            if scene.test.is_empty() {
                bail!("manifest {} has no held-out views", manifest.display());
            }
            let report = evaluate(&cloud, &scene.test, cfg.background, &cfg.render)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                for (view, m) in scene.test.iter().zip(&report.views) {
                    println!("{:<16} psnr {:7.3}  ssim {:.4}", view.name, m.psnr, m.ssim);
                }
                println!("{:<16} psnr {:7.3}  ssim {:.4}", "mean", report.mean_psnr, report.mean_ssim);
            }
        }
        Command::Ablate {
            manifest,
            seeds,
            config,
            iterations,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            cfg.max_iterations = iterations.unwrap_or(cfg.max_iterations);
            let scene = load_scene(&manifest)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let table = ablate(&scene, &cfg, &seeds)?;
            print!("{table}");
            if let Some(p) = out {
                fs::write(p, serde_json::to_string_pretty(&table)?)?;
            }
        }
    }
    Ok(())
}
