//! Runs a config file end to end (training, evaluation, report bundle) the
//! same way `maven train` does, then prints the aggregate row.
//!
//! cargo run --example experiment_from_config -- [config] [--sweep]

use std::path::PathBuf;

use maven::config::validate_config;
use maven::experiment::{run_experiment, sweep, RunOptions};

fn main() -> maven::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args
        .iter()
        .find(|a| !a.starts_with("--"))
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/examples/configs/glyphs_smoke.cfg"
            ))
        });
    let cfg = validate_config(&path)?;
    let opts = RunOptions {
        overwrite: true,
        progress: true,
    };
    if args.iter().any(|a| a == "--sweep") {
        let result = sweep(&cfg, &opts)?;
        for b in &result.bundles {
            if let Some(a) = &b.aggregate {
                println!(
                    "{:<16} fid {:.3} acc {:.3}",
                    a.model, a.fid_mean, a.accuracy_mean
                );
            }
        }
        return Ok(());
    }
    let bundle = run_experiment(&cfg, &opts)?;
    println!(
        "{} repeats ok, {} failed",
        bundle.reports.len(),
        bundle.failures.len()
    );
    if let Some(a) = &bundle.aggregate {
        println!(
            "{}: fid {:.3} +- {:.3}, ddd {:.4}, accuracy {:.3}",
            a.model, a.fid_mean, a.fid_std, a.ddd_mean, a.accuracy_mean
        );
    }
    println!(
        "{} files under {}",
        bundle.files.len(),
        cfg.output_dir.display()
    );
    Ok(())
}
