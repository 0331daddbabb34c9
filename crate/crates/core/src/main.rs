use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use adacache::cache::PRESETS;
use adacache::harness::io::{read_latent, read_trace};
use adacache::harness::{
    compare_runs, export_histogram, run_experiment, CodebookSpec, ExperimentConfig, HistField,
};
use adacache::Codebook;

#[derive(Parser)]
#[command(
    name = "adacache",
    version,
    about = "Adaptive residual caching experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces, latents, histograms and reports.
    Run {
        /// TOML experiment config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds to run (repeatable); replaces the config's list.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Built-in codebook name or `fixed:<rate>`.
        #[arg(long)]
        codebook: Option<String>,
        /// Enable or disable motion regularization.
        #[arg(long)]
        moreg: Option<bool>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of denoising steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compare two latent files (reference first) and print a JSON report.
    Compare { reference: PathBuf, other: PathBuf },
    /// Turn a trace file into histogram CSVs.
    Hist {
        trace: PathBuf,
        #[arg(long, default_value = "metric")]
        field: String,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Output prefix; writes `<out>.csv` and `<out>.bins.csv`.
        /// Prints the series CSV to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in codebooks.
    Presets,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seeds,
            codebook,
            moreg,
            out,
            steps,
        } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            if !seeds.is_empty() {
                cfg.seeds = seeds;
            }
            if let Some(name) = codebook {
                cfg.codebook = CodebookSpec::Named(name);
            }
            if let Some(on) = moreg {
                cfg.moreg.enabled = on;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(t) = steps {
                cfg.set_steps(t);
            }
            cfg.validate()?;
            let outcome = run_experiment(&cfg)?;
            for run in &outcome.runs {
                let f = &run.flops;
                let psnr = run
                    .comparison
                    .as_ref()
                    .map(|c| format!("{:.2} dB", c.psnr))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "seed {:>4}: computed {:>3}/{:<3} speedup {:.3}x  psnr {}",
                    run.seed,
                    f.computed_steps,
                    f.computed_steps + f.cached_steps,
                    f.speedup_estimate,
                    psnr
                );
            }
            println!(
                "wrote {} files to {}",
                outcome.files.len(),
                cfg.output_dir.display()
            );
        }
        Command::Compare { reference, other } => {
            let a = read_latent(&reference)?;
            let b = read_latent(&other)?;
            let report = compare_runs(&a, &b)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Hist {
            trace,
            field,
            bins,
            out,
        } => {
            let field: HistField = field.parse()?;
            let trace = read_trace(&trace)?;
            let h = export_histogram(&trace, field, bins)?;
            match out {
                Some(prefix) => {
                    let series = prefix.with_extension("csv");
                    let binned = prefix.with_extension("bins.csv");
                    std::fs::write(&series, h.series_csv())
                        .with_context(|| format!("writing {}", series.display()))?;
                    std::fs::write(&binned, h.bins_csv())
                        .with_context(|| format!("writing {}", binned.display()))?;
                }
                None => print!("{}", h.series_csv()),
            }
        }
        Command::Presets => {
            for (name, _) in PRESETS {
                let Some(cb) = Codebook::preset(name) else {
                    bail!("preset {name} failed to load");
                };
                println!("{name:<20} {cb}");
            }
        }
    }
    Ok(())
}
