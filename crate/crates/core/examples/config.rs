//! Parses a TOML training configuration and prints the fully resolved
//! settings. Without an argument, parses a small inline example and shows
//! how a misspelled key is reported.
//!
//! cargo run --example config -- [config.toml]

use splatfit::io::{config_to_toml, parse_config, parse_config_str};

const EXAMPLE: &str = r#"
max_iterations = 4000
seed = 3

[loss]
w_depth = 0.1

[adc]
mode = "baseline"
n_max = 2000
"#;

fn main() -> splatfit::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => parse_config(path)?,
        None => parse_config_str(EXAMPLE)?,
    };
    print!("{}", config_to_toml(&config)?);
    if let Err(e) = parse_config_str("[adc]\ntau_prun = 0.01\n") {
        eprintln!("\nmisspelled key: {e}");
    }
    Ok(())
}
