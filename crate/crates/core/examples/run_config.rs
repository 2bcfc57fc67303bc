//! Runs a configuration file the way the command-line tool does.
//!
//! `cargo run --example run_config -- crates/core/examples/configs/sphere_generator.json`

use std::path::PathBuf;

use bismut_mc::config::RunConfig;
use bismut_mc::runner::run_config;

fn main() -> bismut_mc::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/flat_gradient.toml"));
    let cfg = RunConfig::load(&path)?;
    for r in run_config(&cfg, 0)? {
        print!("{} T={} {:.5} ± {:.5}", r.estimator.as_str(), r.t, r.estimate, r.std_error);
        if let Some(o) = &r.oracle {
            print!("  oracle {:.5} ({:.2} SE)", o.value, o.se_ratio);
        }
        println!();
    }
    Ok(())
}
