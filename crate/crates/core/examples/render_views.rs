//! Renders a cloud from a set of cameras and writes color PNGs and
//! expected-depth PFMs. With no arguments it uses the ground truth of the
//! textured-plane scene and its held-out cameras.
//!
//! cargo run --release --example render_views -- [checkpoint.ply] [out_dir]

use std::path::PathBuf;

use splatfit::io::{generate_synthetic, load_checkpoint, save_pfm, save_png, SyntheticSpec};
use splatfit::render::render;

fn main() -> splatfit::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let syn = generate_synthetic(&SyntheticSpec::named("textured-plane")?, 0)?;
    let cloud = match args.get(1).filter(|s| !s.is_empty()) {
        Some(p) => load_checkpoint(p)?,
        None => syn.ground_truth.clone(),
    };
    let out_dir = PathBuf::from(args.get(2).map(String::as_str).unwrap_or("renders"));
    std::fs::create_dir_all(&out_dir)?;

    for view in syn.scene.train.iter().chain(&syn.scene.test) {
        let out = render(&cloud, &view.camera, [0.0; 3]);
        let coverage = out.accum_alpha.data.iter().filter(|&&a| a > 0.5).count();
        save_png(&out.color, out_dir.join(format!("{}.png", view.name)))?;
        save_pfm(&out.depth, out_dir.join(format!("{}_depth.pfm", view.name)))?;
        println!(
            "{:<10} {}x{}  {} of {} pixels covered",
            view.name,
            out.color.width,
            out.color.height,
            coverage,
            out.color.pixel_count()
        );
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}
