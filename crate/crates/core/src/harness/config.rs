use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, Codebook, MetricConfig};
use crate::denoiser::SamplerConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::motion::MotionConfig;

/// Either a built-in codebook name (or `fixed:<rate>`) or inline entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CodebookSpec {
    Named(String),
    Inline { entries: Vec<(f64, usize)> },
}

impl Default for CodebookSpec {
    fn default() -> Self {
        CodebookSpec::Named("opensora-30-fast".into())
    }
}

impl CodebookSpec {
    pub fn resolve(&self) -> Result<Codebook> {
        match self {
            CodebookSpec::Named(name) => Codebook::named(name),
            CodebookSpec::Inline { entries } => Codebook::from_pairs(entries),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Also run the engine-free loop per seed and report PSNR against it.
    #[serde(default = "default_true")]
    pub compare_baseline: bool,
    #[serde(default)]
    pub codebook: CodebookSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub moreg: MotionConfig,
    #[serde(default)]
    pub metric: MetricConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_true() -> bool {
    true
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            compare_baseline: true,
            codebook: CodebookSpec::default(),
            model: ModelConfig::default(),
            sampler: SamplerConfig::default(),
            moreg: MotionConfig::default(),
            metric: MetricConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document. Errors carry the dotted path of
    /// the offending field.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(s)
            .map_err(|e| Error::config("<document>", e.to_string().trim().to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sampler.validate()?;
        if self.sampler.steps != self.model.steps {
            return Err(Error::config(
                "sampler.steps",
                format!(
                    "sampler runs {} steps but the model embeds {}",
                    self.sampler.steps, self.model.steps
                ),
            ));
        }
        self.codebook.resolve()?;
        if self.moreg.enabled {
            self.moreg.validate(self.model.frames)?;
        }
        self.metric.location.layers(self.model.layers)?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        Ok(())
    }

    pub fn cache_config(&self) -> Result<CacheConfig> {
        Ok(CacheConfig {
            codebook: self.codebook.resolve()?,
            metric: self.metric,
            moreg: self.moreg.clone(),
        })
    }

    /// Sets both the sampler and the model step count.
    pub fn set_steps(&mut self, steps: usize) {
        self.sampler.steps = steps;
        self.model.steps = steps;
    }
}
