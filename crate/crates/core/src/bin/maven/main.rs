//! Command-line front end: train, evaluate, sweep, plot and fetch.

mod fetch;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maven::checkpoint::load_state;
use maven::config::{validate_config, ExperimentConfig};
use maven::evaluation::{evaluate, RealReference};
use maven::experiment::{
    load_datasets, run_experiment, sweep, ReportBundle, RunOptions, OUT_DIR_ENV,
};
use maven::histogram::emit_density_histogram;
use maven::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "maven",
    version,
    about = "Ensemble-discriminator VAE-GAN experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Base seed; repeat r trains with seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root. Overrides the environment variable and `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing, non-empty output directory.
    #[arg(long)]
    overwrite: bool,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train every repeat, writing history, checkpoints and reports.
    Train(Common),
    /// Score a saved checkpoint against the configured dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        /// A `step-XXXXXXXX` checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the DC-GAN / VAE-GAN / MAVEN grid and write combined tables.
    Sweep(Common),
    /// Overlaid density histogram of two sample sources.
    PlotDensity {
        /// Text file of numbers, or a directory of images.
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        /// Output stem; `.csv` and `.png` are appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// Download SVHN or CIFAR-10 and verify checksums.
    FetchData {
        #[arg(value_parser = ["svhn", "cifar10"])]
        dataset: String,
        #[arg(long, default_value = "data")]
        dir: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = validate_config(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.training.seed = seed;
    }
    if let Some(r) = c.repeats {
        if r == 0 {
            return Err(Error::Config("--repeats must be at least 1".into()));
        }
        cfg.repeats = r;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    } else if let Some(env) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        cfg.output_dir = PathBuf::from(env);
    }
    Ok(cfg)
}

fn summarize(bundle: &ReportBundle) {
    match &bundle.aggregate {
        Some(a) => println!(
            "{}: {} repeat(s) ok, {} failed; FID {:.4} ± {:.4}, DDD {:.4}, accuracy {:.4}",
            bundle.model,
            a.repeats,
            bundle.failures.len(),
            a.fid_mean,
            a.fid_std,
            a.ddd_mean,
            a.accuracy_mean
        ),
        None => println!(
            "{}: all {} repeat(s) failed",
            bundle.model,
            bundle.failures.len()
        ),
    }
}

/// Numbers from a text file, or per-image mean intensities in `[-1, 1]`
/// from every image under a directory.
fn read_samples(path: &Path) -> Result<Vec<f64>> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_images(path, &mut files)?;
        files.sort();
        files
            .iter()
            .map(|f| {
                let img = image::open(f)
                    .map_err(|source| Error::Decode {
                        path: f.clone(),
                        source,
                    })?
                    .to_rgb8();
                let raw = img.as_raw();
                let mean = raw.iter().map(|&b| f64::from(b)).sum::<f64>() / raw.len().max(1) as f64;
                Ok(mean / 127.5 - 1.0)
            })
            .collect()
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Data(format!("{}: {t:?}: {e}", path.display())))
            })
            .collect()
    }
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_images(&p, out)?;
        } else if p.extension().and_then(|e| e.to_str()).is_some_and(|e| {
            matches!(
                e.to_ascii_lowercase().as_str(),
                "png" | "jpg" | "jpeg" | "bmp"
            )
        }) {
            out.push(p);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            let bundle = run_experiment(
                &cfg,
                &RunOptions {
                    overwrite: c.overwrite,
                    progress: true,
                },
            )?;
            summarize(&bundle);
            println!(
                "wrote {} files under {}",
                bundle.files.len(),
                cfg.output_dir.display()
            );
            Ok(bundle.succeeded())
        }
        Command::Eval { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let state = load_state(&checkpoint)?;
            let data = load_datasets(&cfg)?;
            if state.config.network.image_shape != data.train.shape() {
                return Err(Error::Config(format!(
                    "checkpoint expects {:?} images, dataset has {:?}",
                    state.config.network.image_shape,
                    data.train.shape()
                )));
            }
            let reference = RealReference::new(&data.train, &cfg.eval)?;
            let (report, _) = evaluate(
                &state,
                &reference,
                &data.test,
                &cfg.eval,
                cfg.training.seed,
                0,
            )?;
            let json = serde_json::to_string_pretty(&report)?;
            fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
            let path = cfg.output_dir.join("eval-report.json");
            if path.exists() && !common.overwrite {
                return Err(Error::Config(format!(
                    "{} exists; pass --overwrite to replace it",
                    path.display()
                )));
            }
            fs::write(&path, &json).map_err(|e| Error::io(&path, e))?;
            println!("{json}");
            Ok(true)
        }
        Command::Sweep(c) => {
            let cfg = load_config(&c)?;
            let result = sweep(
                &cfg,
                &RunOptions {
                    overwrite: c.overwrite,
                    progress: true,
                },
            )?;
            for b in &result.bundles {
                summarize(b);
            }
            for f in &result.files {
                println!("wrote {}", f.display());
            }
            Ok(result.bundles.iter().any(ReportBundle::succeeded))
        }
        Command::PlotDensity {
            real,
            fake,
            bins,
            out,
        } => {
            let (real, fake) = (read_samples(&real)?, read_samples(&fake)?);
            let (h, files) = emit_density_histogram(&real, &fake, bins, &out)?;
            println!("overlap coefficient {:.4}", h.overlap_coefficient());
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::FetchData { dataset, dir } => {
            let path = fetch::fetch_dataset(&dataset, &dir)?;
            println!("{dataset} ready in {}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
