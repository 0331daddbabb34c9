//! Adaptive residual caching.
//!
//! After every computed step the engine measures how far a chosen block
//! residual moved since the previous computed step, maps that distance to a
//! cache rate through a [`Codebook`], and reuses the stored residuals of all
//! layers until that many steps have passed. One schedule is shared by every
//! layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockResiduals, ResidualKind};
use crate::motion::{motion_score, MotionConfig, MotionState};
use crate::numerics::{cosine_distance, mean_abs_diff, mean_sq_diff, Tensor};
use crate::scalar::Scalar;

// ---------------------------------------------------------------------------
// Codebook

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookEntry {
    pub threshold: f64,
    pub rate: usize,
}

/// Ordered `threshold -> cache rate` pairs.
///
/// A metric selects the first entry whose threshold exceeds it; anything at
/// or above the last-but-one threshold falls through to the final entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    entries: Vec<CodebookEntry>,
}

/// Built-in codebooks: `(name, [(threshold, rate)])`.
pub const PRESETS: &[(&str, &[(f64, usize)])] = &[
    (
        "opensora-30-fast",
        &[
            (0.08, 6),
            (0.16, 5),
            (0.24, 4),
            (0.32, 3),
            (0.40, 2),
            (1.00, 1),
        ],
    ),
    (
        "opensora-100-fast",
        &[
            (0.03, 12),
            (0.05, 10),
            (0.07, 8),
            (0.09, 6),
            (0.11, 4),
            (1.00, 3),
        ],
    ),
    (
        "opensora-30-slow",
        &[(0.08, 3), (0.16, 2), (0.24, 1), (1.00, 1)],
    ),
];

impl Codebook {
    pub fn new(entries: Vec<CodebookEntry>) -> Result<Self> {
        let bad = |msg: String| Err(Error::config("codebook", msg));
        if entries.is_empty() {
            return bad("codebook is empty".into());
        }
        for (i, e) in entries.iter().enumerate() {
            if e.threshold.is_nan() {
                return bad(format!("entry {i}: threshold is NaN"));
            }
            if e.rate < 1 {
                return bad(format!("entry {i}: rate must be >= 1"));
            }
        }
        for (i, w) in entries.windows(2).enumerate() {
            if !(w[0].threshold < w[1].threshold) {
                return bad(format!(
                    "thresholds must strictly increase (entry {} -> {})",
                    i,
                    i + 1
                ));
            }
            if w[1].rate > w[0].rate {
                return bad(format!(
                    "rates must not increase with threshold (entry {} -> {})",
                    i,
                    i + 1
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_pairs(pairs: &[(f64, usize)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(threshold, rate)| CodebookEntry { threshold, rate })
                .collect(),
        )
    }

    /// Single catch-all entry: cache every result for exactly `rate` steps.
    pub fn fixed(rate: usize) -> Result<Self> {
        Self::from_pairs(&[(f64::INFINITY, rate)])
    }

    pub fn all_compute() -> Self {
        Self::fixed(1).expect("rate 1 is valid")
    }

    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, pairs)| Self::from_pairs(pairs).expect("presets are valid"))
    }

    /// Resolves a preset name or `fixed:<rate>`.
    pub fn named(name: &str) -> Result<Self> {
        if let Some(rate) = name.strip_prefix("fixed:") {
            let rate = rate
                .parse()
                .map_err(|_| Error::config("codebook", format!("bad fixed rate in `{name}`")))?;
            return Self::fixed(rate);
        }
        Self::preset(name).ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::config(
                "codebook",
                format!(
                    "unknown preset `{name}` (known: {}, fixed:<rate>)",
                    known.join(", ")
                ),
            )
        })
    }

    pub fn entries(&self) -> &[CodebookEntry] {
        &self.entries
    }

    pub fn lookup(&self, c: f64) -> usize {
        self.entries
            .iter()
            .find(|e| c < e.threshold)
            .unwrap_or_else(|| self.entries.last().expect("non-empty"))
            .rate
    }

    /// True when every entry has the same rate, so no metric is needed to
    /// pick it.
    pub fn is_constant(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].rate == w[1].rate)
    }

    /// Rate used right after the first computed step, before any metric
    /// exists.
    pub fn bootstrap_rate(&self) -> usize {
        if self.is_constant() {
            self.entries[0].rate
        } else {
            1
        }
    }
}

/// Codebook lookup: the rate of the first entry whose threshold exceeds `c`.
pub fn lookup_rate(cb: &Codebook, c: f64) -> usize {
    cb.lookup(c)
}

impl fmt::Display for Codebook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:.2}: {}", e.threshold, e.rate)?;
        }
        write!(f, "}}")
    }
}

// ---------------------------------------------------------------------------
// Distance metric

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Mean absolute difference.
    #[default]
    L1,
    /// Root mean squared difference.
    L2,
    /// One minus cosine similarity.
    Cosine,
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "L1" => Ok(Self::L1),
            "l2" | "L2" => Ok(Self::L2),
            "cosine" => Ok(Self::Cosine),
            _ => Err(Error::config(
                "metric.kind",
                format!("unknown metric `{s}`"),
            )),
        }
    }
}

/// Which layer(s) the metric is taken at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricLocation {
    Start,
    #[default]
    Mid,
    End,
    /// Mean of the per-layer metrics over all layers.
    Averaged,
    Layer(usize),
}

impl MetricLocation {
    pub fn layers(&self, num_layers: usize) -> Result<Vec<usize>> {
        Ok(match *self {
            Self::Start => vec![0],
            Self::Mid => vec![num_layers / 2],
            Self::End => vec![num_layers - 1],
            Self::Averaged => (0..num_layers).collect(),
            Self::Layer(l) if l < num_layers => vec![l],
            Self::Layer(l) => {
                return Err(Error::config(
                    "metric.location",
                    format!("layer {l} out of range for {num_layers} layers"),
                ))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    #[serde(default)]
    pub kind: MetricKind,
    #[serde(default)]
    pub location: MetricLocation,
    #[serde(default)]
    pub residual: ResidualKind,
}

/// Mean absolute change per step between two residuals `k` steps apart.
pub fn compute_metric<T: Scalar>(p_prev: &Tensor<T>, p_curr: &Tensor<T>, k: usize) -> Result<f64> {
    distance(MetricKind::L1, p_prev, p_curr, k)
}

pub fn distance<T: Scalar>(
    kind: MetricKind,
    prev: &Tensor<T>,
    curr: &Tensor<T>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("distance metric needs a step gap k >= 1"));
    }
    let d = match kind {
        MetricKind::L1 => mean_abs_diff(prev, curr)?,
        MetricKind::L2 => mean_sq_diff(prev, curr)?.sqrt(),
        MetricKind::Cosine => cosine_distance(prev, curr)?,
    };
    Ok(d / k as f64)
}

// ---------------------------------------------------------------------------
// Engine

#[derive(Clone, Debug, PartialEq)]
pub struct CacheConfig {
    pub codebook: Codebook,
    pub metric: MetricConfig,
    pub moreg: MotionConfig,
}

impl CacheConfig {
    pub fn new(codebook: Codebook) -> Self {
        Self {
            codebook,
            metric: MetricConfig::default(),
            moreg: MotionConfig::default(),
        }
    }

    pub fn with_moreg(mut self, moreg: MotionConfig) -> Self {
        self.moreg = moreg;
        self
    }

    pub fn with_metric(mut self, metric: MetricConfig) -> Self {
        self.metric = metric;
        self
    }
}

/// Trace record of one step's caching decision.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheDecision {
    pub compute: bool,
    pub step: usize,
    /// Metric used for the codebook lookup (after motion scaling).
    pub metric: Option<f64>,
    pub selected_rate: Option<usize>,
    pub motion_score: Option<f64>,
    pub motion_gradient: Option<f64>,
}

impl CacheDecision {
    fn reuse(step: usize) -> Self {
        Self {
            compute: false,
            step,
            metric: None,
            selected_rate: None,
            motion_score: None,
            motion_gradient: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CacheState<T: Scalar = f32> {
    /// Residuals of every layer from the last computed step.
    pub cached: Option<Vec<BlockResiduals<T>>>,
    pub last_computed_step: Option<usize>,
    pub current_rate: usize,
    pub steps_since_compute: usize,
    pub last_metric: Option<f64>,
    pub metric_layers: Vec<usize>,
    pub motion: Option<MotionState>,
}

/// Scheduler for one generation run.
#[derive(Clone, Debug)]
pub struct CacheEngine<T: Scalar = f32> {
    cfg: CacheConfig,
    num_layers: usize,
    state: CacheState<T>,
}

impl<T: Scalar> CacheEngine<T> {
    pub fn new(cfg: CacheConfig, num_layers: usize, frames: usize) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::config("model.layers", "need at least one layer"));
        }
        let metric_layers = cfg.metric.location.layers(num_layers)?;
        let motion = if cfg.moreg.enabled {
            cfg.moreg.validate(frames)?;
            Some(MotionState::new(cfg.moreg.frame_step))
        } else {
            None
        };
        Ok(Self {
            cfg,
            num_layers,
            state: CacheState {
                cached: None,
                last_computed_step: None,
                current_rate: 1,
                steps_since_compute: 0,
                last_metric: None,
                metric_layers,
                motion,
            },
        })
    }

    pub fn state(&self) -> &CacheState<T> {
        &self.state
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn cached(&self) -> Option<&[BlockResiduals<T>]> {
        self.state.cached.as_deref()
    }

    /// Marks the start of a new step: one more step since the last compute.
    pub fn advance(&mut self) {
        if self.state.cached.is_some() {
            self.state.steps_since_compute += 1;
        }
    }

    /// True when nothing is cached yet or the current rate has elapsed.
    pub fn should_compute(&self) -> bool {
        self.state.cached.is_none() || self.state.steps_since_compute >= self.state.current_rate
    }

    /// Records a reused step.
    pub fn on_reuse(&mut self, step: usize) -> CacheDecision {
        CacheDecision::reuse(step)
    }

    /// Ingests freshly computed residuals: measures the metric against the
    /// cached ones, picks the next rate and replaces the cache.
    pub fn on_compute(
        &mut self,
        residuals: Vec<BlockResiduals<T>>,
        step: usize,
    ) -> Result<CacheDecision> {
        if residuals.len() != self.num_layers {
            return Err(Error::arg(format!(
                "{} residual sets for {} layers",
                residuals.len(),
                self.num_layers
            )));
        }
        let which = self.cfg.metric.residual;
        let mut decision = CacheDecision {
            compute: true,
            ..CacheDecision::reuse(step)
        };
        let rate = match &self.state.cached {
            None => self.cfg.codebook.bootstrap_rate(),
            Some(prev) => {
                let k = self.state.steps_since_compute;
                let layers = &self.state.metric_layers;
                let mut c = 0.0;
                for &l in layers {
                    c += distance(
                        self.cfg.metric.kind,
                        prev[l].get(which),
                        residuals[l].get(which),
                        k,
                    )?;
                }
                c /= layers.len() as f64;
                if let Some(motion) = self.state.motion.as_mut() {
                    let mut m = 0.0;
                    for &l in layers {
                        m += motion_score(residuals[l].get(which), motion.frame_step)?;
                    }
                    m /= layers.len() as f64;
                    motion.update(m, step, k)?;
                    c = motion.scale(c);
                    decision.motion_score = Some(motion.m);
                    decision.motion_gradient = Some(motion.mg);
                }
                let rate = self.cfg.codebook.lookup(c);
                decision.metric = Some(c);
                decision.selected_rate = Some(rate);
                self.state.last_metric = Some(c);
                rate
            }
        };
        self.state.cached = Some(residuals);
        self.state.last_computed_step = Some(step);
        self.state.current_rate = rate;
        self.state.steps_since_compute = 0;
        Ok(decision)
    }
}
