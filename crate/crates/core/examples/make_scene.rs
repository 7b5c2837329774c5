//! Writes a synthetic scene (images, depths, points, ground truth and
//! manifest) to disk and loads it back.
//!
//! cargo run --release --example make_scene -- [textured-plane|cluster] [out_dir] [seed]

use splatfit::io::{load_scene, make_synthetic, SceneManifest, Split, SyntheticSpec};

fn main() -> splatfit::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("textured-plane");
    let out = args.get(2).map(String::as_str).unwrap_or(name);
    let seed = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let manifest = make_synthetic(&SyntheticSpec::named(name)?, out, seed)?;
    let m = SceneManifest::read(&manifest)?;
    let scene = load_scene(&manifest)?;
    println!("{}", manifest.display());
    println!(
        "{} training and {} held-out views, {} initial points",
        m.count(Split::Train),
        m.count(Split::Test),
        scene.points.len()
    );
    for v in scene.train.iter().chain(&scene.test) {
        let c = v.camera.center();
        println!("  {:<10} camera at ({:+.2}, {:+.2}, {:+.2})", v.name, c.x, c.y, c.z);
    }
    Ok(())
}
