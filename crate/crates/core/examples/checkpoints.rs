//! Saves a cloud as a PLY checkpoint, reads it back bit-exactly, and shows
//! the vertex properties a reader sees.
//!
//! cargo run --example checkpoints -- [path.ply]

use splatfit::io::{generate_synthetic, load_checkpoint, read_vertices, save_checkpoint, SyntheticSpec};

fn main() -> splatfit::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "cluster.ply".to_string());
    let cloud = generate_synthetic(&SyntheticSpec::named("cluster")?, 0)?.ground_truth;
    save_checkpoint(&cloud, &path)?;
    let back = load_checkpoint(&path)?;
    assert_eq!(back, cloud);
    let table = read_vertices(std::io::BufReader::new(std::fs::File::open(&path)?), path.as_ref())?;
    println!("{}: {} vertices", path, table.rows);
    println!("properties: {}", table.names.join(" "));
    println!(
        "first row: position {:?} opacity {:.3} color {:?}",
        back.positions[0],
        back.opacity(0),
        back.color(0).map(|c| (c * 1000.0).round() / 1000.0)
    );
    Ok(())
}
