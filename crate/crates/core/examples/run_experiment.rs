//! Full experiment from a TOML config, artifacts written to a directory.
//!
//! `cargo run --release --example run_experiment -- configs/example1.toml out/`

use std::path::PathBuf;

use goed::experiment::{run_experiment, write_artifact, ExperimentConfig};

fn main() -> goed::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => {
            let mut cfg = ExperimentConfig::example1();
            cfg.sampling.posterior_samples = 1000;
            cfg
        }
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out".into()));
    let artifact = run_experiment(&cfg)?;
    for &k in &cfg.design_sizes {
        let line: Vec<String> = ["aopt", "gell", "gq"]
            .iter()
            .filter_map(|m| artifact.cells_for(m, k).next().and_then(|c| c.goal_std).map(|s| format!("{m} {s:.4e}")))
            .collect();
        println!("k = {k:>2}  posterior goal std: {}", line.join("  "));
    }
    let manifest = write_artifact(&artifact, &out)?;
    println!("wrote {} files to {}", manifest.files.len(), out.display());
    Ok(())
}
