use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::denoiser::{denoise, denoise_baseline, RunTrace};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::histogram::{export_histogram, HistField};
use crate::harness::io::{write_latent, write_trace};
use crate::harness::report::{compare_runs, ComparisonReport, FlopsReport};
use crate::model::{flops_per_step, Model};
use crate::numerics::Tensor;

const HIST_BINS: usize = 20;

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub trace: RunTrace,
    pub flops: FlopsReport,
    pub comparison: Option<ComparisonReport>,
    pub latent: Tensor<f32>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<SeedRun>,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SeedReport<'a> {
    seed: u64,
    codebook: String,
    flops: &'a FlopsReport,
    comparison: Option<&'a ComparisonReport>,
}

fn artifact(dir: &Path, stem: &str, seed: u64, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_seed{seed}.{ext}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every seed of `cfg` (in parallel) and writes, per seed, the trace,
/// the final latent, histogram CSVs of the trace fields and a JSON report.
/// Output depends only on `(cfg, seed)`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let cache = cfg.cache_config()?;
    let model = Model::<f32>::new(cfg.model.clone())?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let full = flops_per_step(&cfg.model, false);

    let results: Vec<Result<(SeedRun, Vec<PathBuf>)>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (latent, trace) = denoise(&model, seed, &cache, &cfg.sampler)?;
            let comparison = if cfg.compare_baseline {
                let reference = denoise_baseline(&model, seed, &cfg.sampler)?;
                Some(compare_runs(&reference.tensor, &latent.tensor)?)
            } else {
                None
            };
            let flops = FlopsReport::from_trace(&trace, full);

            let mut files = Vec::new();
            let p = artifact(dir, "trace", seed, "jsonl");
            write_trace(&p, &trace)?;
            files.push(p);
            let p = artifact(dir, "latent", seed, "bin");
            write_latent(&p, &latent.tensor)?;
            files.push(p);
            let mut fields = vec![HistField::Metric];
            if cache.moreg.enabled {
                fields.extend([HistField::M, HistField::Mg]);
            }
            for field in fields {
                let h = export_histogram(&trace, field, HIST_BINS)?;
                let p = artifact(dir, &format!("hist_{}", field.name()), seed, "csv");
                write_text(&p, &h.series_csv())?;
                files.push(p);
                let p = artifact(dir, &format!("bins_{}", field.name()), seed, "csv");
                write_text(&p, &h.bins_csv())?;
                files.push(p);
            }
            let report = SeedReport {
                seed,
                codebook: cache.codebook.to_string(),
                flops: &flops,
                comparison: comparison.as_ref(),
            };
            let p = artifact(dir, "report", seed, "json");
            let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
            json.push('\n');
            write_text(&p, &json)?;
            files.push(p);

            Ok((
                SeedRun {
                    seed,
                    trace,
                    flops,
                    comparison,
                    latent: latent.tensor,
                },
                files,
            ))
        })
        .collect();

    let mut runs = Vec::with_capacity(results.len());
    let mut files = Vec::new();
    for r in results {
        let (run, f) = r?;
        runs.push(run);
        files.extend(f);
    }
    Ok(ExperimentOutcome { runs, files })
}
