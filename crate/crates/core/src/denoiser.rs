//! Deterministic DDIM sampling with residual caching.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, CacheDecision, CacheEngine};
use crate::error::{Error, Result};
use crate::model::{Backbone, BlockResiduals, Latent};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 30,
            beta_start: 1e-4,
            beta_end: 2e-2,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::config("sampler.steps", "need at least one step"));
        }
        if !(0.0 < self.beta_start && self.beta_start < self.beta_end && self.beta_end < 1.0) {
            return Err(Error::config(
                "sampler.beta_start",
                "need 0 < beta_start < beta_end < 1",
            ));
        }
        Ok(())
    }

    /// Linear betas over `steps` timesteps.
    pub fn betas(&self) -> Vec<f64> {
        let n = self.steps;
        if n == 1 {
            return vec![self.beta_start];
        }
        (0..n)
            .map(|i| {
                self.beta_start + (self.beta_end - self.beta_start) * i as f64 / (n - 1) as f64
            })
            .collect()
    }

    /// Cumulative products of `1 - beta`.
    pub fn alpha_bars(&self) -> Vec<f64> {
        self.betas()
            .iter()
            .scan(1.0, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect()
    }

    /// Diffusion timestep handled at loop step `step` (descending).
    pub fn timestep(&self, step: usize) -> usize {
        self.steps - 1 - step
    }
}

/// One deterministic (eta = 0) DDIM update from timestep `t` to `t - 1`.
/// At `t = 0` this is the predicted clean sample.
pub fn step_update<T: Scalar>(
    f: &Latent<T>,
    noise_pred: &Tensor<T>,
    t: usize,
    cfg: &SamplerConfig,
) -> Result<Latent<T>> {
    if t >= cfg.steps {
        return Err(Error::arg(format!(
            "timestep {t} out of range for {} steps",
            cfg.steps
        )));
    }
    if f.tensor.shape() != noise_pred.shape() {
        return Err(Error::arg(format!(
            "noise prediction shape {:?} does not match latent {:?}",
            noise_pred.shape(),
            f.tensor.shape()
        )));
    }
    let ab = cfg.alpha_bars();
    let a_t = ab[t];
    let a_prev = if t == 0 { 1.0 } else { ab[t - 1] };
    let (sa_t, sn_t) = (a_t.sqrt(), (1.0 - a_t).sqrt());
    let (sa_prev, sn_prev) = (a_prev.sqrt(), (1.0 - a_prev).sqrt());
    let data = f
        .tensor
        .data()
        .iter()
        .zip(noise_pred.data())
        .map(|(x, e)| {
            let (x, e) = (x.widen(), e.widen());
            let x0 = (x - sn_t * e) / sa_t;
            T::narrow(sa_prev * x0 + sn_prev * e)
        })
        .collect();
    Ok(Latent::new(
        Tensor::new(f.tensor.shape().to_vec(), data)?,
        f.step + 1,
    ))
}

/// Seeded standard-normal starting latent.
pub fn initial_latent<T: Scalar>(shape: &[usize], seed: u64) -> Latent<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep this stream apart from model weights drawn with the same seed
    rng.set_stream(1);
    let tensor = Tensor::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::narrow(z)
    });
    Latent::new(tensor, 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub timestep: usize,
    pub computed: bool,
    pub metric: Option<f64>,
    pub rate: Option<usize>,
    pub m: Option<f64>,
    pub mg: Option<f64>,
    pub flops: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
}

impl RunTrace {
    pub fn computed_steps(&self) -> usize {
        self.records.iter().filter(|r| r.computed).count()
    }

    pub fn cached_steps(&self) -> usize {
        self.records.len() - self.computed_steps()
    }

    pub fn total_flops(&self) -> u64 {
        self.records.iter().map(|r| r.flops).sum()
    }

    pub fn computed_step_indices(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.computed)
            .map(|r| r.step)
            .collect()
    }
}

fn record(d: &CacheDecision, timestep: usize, flops: u64) -> StepRecord {
    StepRecord {
        step: d.step,
        timestep,
        computed: d.compute,
        metric: d.metric,
        rate: d.selected_rate,
        m: d.motion_score,
        mg: d.motion_gradient,
        flops,
    }
}

/// Full sampling run with adaptive caching.
///
/// Every step runs the DDIM update; only the network evaluation is skipped
/// on cached steps, where stored residuals stand in for the blocks.
pub fn denoise<T: Scalar, B: Backbone<T>>(
    net: &B,
    seed: u64,
    cache: &CacheConfig,
    sampler: &SamplerConfig,
) -> Result<(Latent<T>, RunTrace)> {
    sampler.validate()?;
    let shape = net.latent_shape();
    let mut engine = CacheEngine::<T>::new(cache.clone(), net.num_layers(), shape[0])?;
    let mut f = initial_latent::<T>(&shape, seed);
    let mut trace = RunTrace::default();
    let (full, cached) = (net.flops_per_step(false), net.flops_per_step(true));
    for step in 0..sampler.steps {
        if step > 0 {
            engine.advance();
        }
        let t = sampler.timestep(step);
        let (pred, rec) = if engine.should_compute() {
            let (pred, residuals) = net.forward(&f, None)?;
            let d = engine.on_compute(residuals, step)?;
            (pred, record(&d, t, full))
        } else {
            let (pred, _) = net.forward(&f, engine.cached())?;
            let d = engine.on_reuse(step);
            (pred, record(&d, t, cached))
        };
        f = step_update(&f, &pred, t, sampler)?;
        trace.records.push(rec);
    }
    Ok((f, trace))
}

/// Plain sampling loop with no cache engine at all.
pub fn denoise_baseline<T: Scalar, B: Backbone<T>>(
    net: &B,
    seed: u64,
    sampler: &SamplerConfig,
) -> Result<Latent<T>> {
    sampler.validate()?;
    let mut f = initial_latent::<T>(&net.latent_shape(), seed);
    for step in 0..sampler.steps {
        let (pred, _) = net.forward(&f, None)?;
        f = step_update(&f, &pred, sampler.timestep(step), sampler)?;
    }
    Ok(f)
}

/// Drives the cache engine over a fixed stream of residuals, where
/// `stream[step]` is what a fresh compute at `step` would return. Nothing
/// fed back into the stream depends on the decisions, so schedules from
/// different codebooks are directly comparable.
pub fn replay<T: Scalar>(
    stream: &[Vec<BlockResiduals<T>>],
    cache: &CacheConfig,
    frames: usize,
) -> Result<Vec<CacheDecision>> {
    let layers = stream
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::arg("empty residual stream"))?;
    let mut engine = CacheEngine::<T>::new(cache.clone(), layers, frames)?;
    let mut out = Vec::with_capacity(stream.len());
    for (step, residuals) in stream.iter().enumerate() {
        if step > 0 {
            engine.advance();
        }
        out.push(if engine.should_compute() {
            engine.on_compute(residuals.clone(), step)?
        } else {
            engine.on_reuse(step)
        });
    }
    Ok(out)
}
