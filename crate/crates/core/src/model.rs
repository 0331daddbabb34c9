//! Synthetic video diffusion transformer.
//!
//! Each block computes three residuals and adds them onto the running latent:
//!
//! ```text
//! p = STA(f)   f~ = f  + p
//! q = CA(f~)   f- = f~ + q
//! r = MLP(f-)  f' = f- + r
//! ```
//!
//! STA is joint attention over all `frames * tokens_per_frame` tokens, CA
//! attends to a fixed random conditioning matrix, and MLP is a GELU
//! feed-forward. Each branch carries its own pre-norm. A sinusoidal timestep
//! embedding is added once before the first block and a norm + projection
//! head maps the final latent to the noise prediction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{attention, gelu, layer_norm, matmul, Tensor};
use crate::scalar::Scalar;

const NORM_EPS: f64 = 1e-5;
const MLP_RATIO: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub channels: usize,
    pub heads: usize,
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub steps: usize,
    pub cond_tokens: usize,
    pub seed: u64,
    /// Multiplier on the timestep embedding; larger values make the block
    /// inputs (and hence residuals) change faster from step to step.
    pub temb_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 8,
            channels: 64,
            heads: 4,
            frames: 8,
            tokens_per_frame: 16,
            steps: 30,
            cond_tokens: 4,
            seed: 0,
            temb_scale: 0.25,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: &str| Err(Error::config(format!("model.{field}"), msg));
        if self.layers < 1 {
            return fail("layers", "need at least one layer");
        }
        if self.heads == 0 || self.channels == 0 || self.channels % self.heads != 0 {
            return fail("heads", "channels must be a positive multiple of heads");
        }
        if self.channels % 2 != 0 {
            return fail(
                "channels",
                "sinusoidal timestep embedding needs an even channel count",
            );
        }
        if self.frames < 2 {
            return fail("frames", "need at least two frames");
        }
        if self.tokens_per_frame < 1 {
            return fail("tokens_per_frame", "need at least one token per frame");
        }
        if self.steps < 2 {
            return fail("steps", "need at least two denoising steps");
        }
        if self.cond_tokens < 1 {
            return fail("cond_tokens", "need at least one conditioning token");
        }
        if !self.temb_scale.is_finite() || self.temb_scale < 0.0 {
            return fail("temb_scale", "must be finite and non-negative");
        }
        Ok(())
    }

    pub fn latent_shape(&self) -> [usize; 3] {
        [self.frames, self.tokens_per_frame, self.channels]
    }

    pub fn tokens(&self) -> usize {
        self.frames * self.tokens_per_frame
    }
}

/// Multiply-accumulate count of one denoising step.
///
/// A computed step runs every block's attention projections, `q k^T`,
/// `softmax * v` and MLP matmuls. A cached step only adds three stored
/// residuals per block. Norms, softmax, the timestep embedding and the
/// output head are not counted.
pub fn flops_per_step(cfg: &ModelConfig, cached: bool) -> u64 {
    let n = cfg.tokens() as u64;
    let d = cfg.channels as u64;
    let c = cfg.cond_tokens as u64;
    let h = MLP_RATIO as u64 * d;
    let per_layer = if cached {
        3 * n * d
    } else {
        let sta = 4 * n * d * d + 2 * n * n * d;
        let ca = 2 * n * d * d + 2 * c * d * d + 2 * n * c * d;
        let mlp = 2 * n * d * h;
        sta + ca + mlp
    };
    cfg.layers as u64 * per_layer
}

/// A latent `[frames, tokens_per_frame, channels]` at loop step `step`.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent<T: Scalar = f32> {
    pub tensor: Tensor<T>,
    pub step: usize,
}

impl<T: Scalar> Latent<T> {
    pub fn new(tensor: Tensor<T>, step: usize) -> Self {
        Self { tensor, step }
    }
}

/// The three residual branches of one block, tagged with where they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockResiduals<T: Scalar = f32> {
    pub p: Tensor<T>,
    pub q: Tensor<T>,
    pub r: Tensor<T>,
    pub layer: usize,
    pub computed_at_step: usize,
}

impl<T: Scalar> BlockResiduals<T> {
    pub fn zeros(shape: &[usize], layer: usize, computed_at_step: usize) -> Self {
        Self {
            p: Tensor::zeros(shape),
            q: Tensor::zeros(shape),
            r: Tensor::zeros(shape),
            layer,
            computed_at_step,
        }
    }

    pub fn get(&self, which: ResidualKind) -> &Tensor<T> {
        match which {
            ResidualKind::P => &self.p,
            ResidualKind::Q => &self.q,
            ResidualKind::R => &self.r,
        }
    }
}

/// Which residual branch of a block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualKind {
    /// Spatio-temporal attention.
    #[default]
    P,
    /// Cross-attention.
    Q,
    /// MLP.
    R,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Norm<T: Scalar> {
    pub gain: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Norm<T> {
    fn identity(d: usize) -> Self {
        Self {
            gain: Tensor::full(&[d], T::one()),
            bias: Tensor::zeros(&[d]),
        }
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        layer_norm(x, &self.gain, &self.bias, NORM_EPS)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights<T: Scalar> {
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpWeights<T: Scalar> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights<T: Scalar> {
    pub sta_norm: Norm<T>,
    pub sta: AttentionWeights<T>,
    pub ca_norm: Norm<T>,
    pub ca: AttentionWeights<T>,
    pub mlp_norm: Norm<T>,
    pub mlp: MlpWeights<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Scalar = f32> {
    cfg: ModelConfig,
    pub layers: Vec<LayerWeights<T>>,
    pub out_norm: Norm<T>,
    pub out_proj: Tensor<T>,
    /// Stand-in for text embeddings, `[cond_tokens, channels]`.
    pub cond: Tensor<T>,
}

struct WeightSampler {
    rng: ChaCha8Rng,
}

impl WeightSampler {
    fn gaussian<T: Scalar>(&mut self, shape: &[usize], std: f64) -> Tensor<T> {
        Tensor::from_fn(shape, |_| {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            T::narrow(z * std)
        })
    }

    /// Fan-in scaled projection `[fan_in, fan_out]`.
    fn proj<T: Scalar>(&mut self, fan_in: usize, fan_out: usize) -> Tensor<T> {
        self.gaussian(&[fan_in, fan_out], 1.0 / (fan_in as f64).sqrt())
    }

    fn attn<T: Scalar>(&mut self, d: usize) -> AttentionWeights<T> {
        AttentionWeights {
            wq: self.proj(d, d),
            wk: self.proj(d, d),
            wv: self.proj(d, d),
            wo: self.proj(d, d),
        }
    }
}

impl<T: Scalar> Model<T> {
    /// Builds a model with seeded Gaussian weights. Equal configs give
    /// bit-identical models.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.channels;
        let h = MLP_RATIO * d;
        let mut s = WeightSampler {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        let layers = (0..cfg.layers)
            .map(|_| LayerWeights {
                sta_norm: Norm::identity(d),
                sta: s.attn(d),
                ca_norm: Norm::identity(d),
                ca: s.attn(d),
                mlp_norm: Norm::identity(d),
                mlp: MlpWeights {
                    w1: s.proj(d, h),
                    b1: Tensor::zeros(&[h]),
                    w2: s.proj(h, d),
                    b2: Tensor::zeros(&[d]),
                },
            })
            .collect();
        let out_proj = s.proj(d, d);
        let cond = s.gaussian(&[cfg.cond_tokens, d], 1.0);
        Ok(Self {
            layers,
            out_norm: Norm::identity(d),
            out_proj,
            cond,
            cfg,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Sinusoidal embedding of the diffusion timestep for loop step `step`,
    /// scaled by `temb_scale`. Timesteps are stretched onto a 1000-step
    /// training range so neighbouring steps differ in the high frequencies.
    pub fn timestep_embedding(&self, step: usize) -> Tensor<T> {
        let d = self.cfg.channels;
        let t = self.cfg.steps.saturating_sub(1 + step) as f64;
        let pos = t * 1000.0 / self.cfg.steps as f64;
        let half = d / 2;
        Tensor::from_fn(&[d], |i| {
            let j = i % half;
            let freq = (-(10_000f64.ln()) * j as f64 / half as f64).exp();
            let v = if i < half {
                (pos * freq).sin()
            } else {
                (pos * freq).cos()
            };
            T::narrow(self.cfg.temb_scale * v)
        })
    }

    fn check_latent(&self, f: &Tensor<T>) -> Result<()> {
        if f.shape() != self.cfg.latent_shape() {
            return Err(Error::arg(format!(
                "latent shape {:?} does not match model {:?}",
                f.shape(),
                self.cfg.latent_shape()
            )));
        }
        Ok(())
    }

    fn attend(&self, w: &AttentionWeights<T>, x: &Tensor<T>, ctx: &Tensor<T>) -> Result<Tensor<T>> {
        let q = matmul(x, &w.wq)?;
        let k = matmul(ctx, &w.wk)?;
        let v = matmul(ctx, &w.wv)?;
        let a = attention(&q, &k, &v, self.cfg.heads)?;
        matmul(&a, &w.wo)
    }

    pub fn sta(&self, layer: usize, f: &Tensor<T>) -> Result<Tensor<T>> {
        let lw = &self.layers[layer];
        let x = lw.sta_norm.apply(f)?;
        self.attend(&lw.sta, &x, &x)
    }

    pub fn ca(&self, layer: usize, f: &Tensor<T>, cond: &Tensor<T>) -> Result<Tensor<T>> {
        let lw = &self.layers[layer];
        let x = lw.ca_norm.apply(f)?;
        self.attend(&lw.ca, &x, cond)
    }

    pub fn mlp(&self, layer: usize, f: &Tensor<T>) -> Result<Tensor<T>> {
        let lw = &self.layers[layer];
        let x = lw.mlp_norm.apply(f)?;
        let mut hidden = matmul(&x, &lw.mlp.w1)?;
        hidden.add_row_bias(&lw.mlp.b1)?;
        let mut out = matmul(&gelu(&hidden), &lw.mlp.w2)?;
        out.add_row_bias(&lw.mlp.b2)?;
        Ok(out)
    }

    /// One block. With `reuse` the stored residuals are added onto `f_in`
    /// and no attention or MLP kernel runs; the returned residuals are a
    /// copy of `reuse`.
    pub fn block_forward(
        &self,
        f_in: &Tensor<T>,
        cond: &Tensor<T>,
        step: usize,
        layer: usize,
        reuse: Option<&BlockResiduals<T>>,
    ) -> Result<(Tensor<T>, BlockResiduals<T>)> {
        if layer >= self.cfg.layers {
            return Err(Error::arg(format!(
                "layer {layer} out of range for {} layers",
                self.cfg.layers
            )));
        }
        self.check_latent(f_in)?;
        match reuse {
            Some(res) => {
                let mut f = f_in.add(&res.p)?;
                f.add_assign(&res.q)?;
                f.add_assign(&res.r)?;
                Ok((f, res.clone()))
            }
            None => {
                let p = self.sta(layer, f_in)?;
                let f_tilde = f_in.add(&p)?;
                let q = self.ca(layer, &f_tilde, cond)?;
                let f_bar = f_tilde.add(&q)?;
                let r = self.mlp(layer, &f_bar)?;
                let f_out = f_bar.add(&r)?;
                Ok((
                    f_out,
                    BlockResiduals {
                        p,
                        q,
                        r,
                        layer,
                        computed_at_step: step,
                    },
                ))
            }
        }
    }

    /// Norm + projection applied to the last block's output.
    pub fn head(&self, f: &Tensor<T>) -> Result<Tensor<T>> {
        matmul(&self.out_norm.apply(f)?, &self.out_proj)
    }

    /// Runs all blocks. `decisions[l]` selects reuse for layer `l`.
    pub fn dit_forward(
        &self,
        f: &Latent<T>,
        cond: &Tensor<T>,
        decisions: &[Option<&BlockResiduals<T>>],
    ) -> Result<(Tensor<T>, Vec<BlockResiduals<T>>)> {
        if decisions.len() != self.cfg.layers {
            return Err(Error::arg(format!(
                "{} reuse decisions for {} layers",
                decisions.len(),
                self.cfg.layers
            )));
        }
        self.check_latent(&f.tensor)?;
        let mut h = f.tensor.clone();
        h.add_row_bias(&self.timestep_embedding(f.step))?;
        let mut residuals = Vec::with_capacity(self.cfg.layers);
        for (l, reuse) in decisions.iter().enumerate() {
            let (next, res) = self.block_forward(&h, cond, f.step, l, *reuse)?;
            h = next;
            residuals.push(res);
        }
        Ok((self.head(&h)?, residuals))
    }
}

/// A noise-prediction network whose per-block residuals can be cached.
pub trait Backbone<T: Scalar> {
    fn latent_shape(&self) -> [usize; 3];

    fn num_layers(&self) -> usize;

    /// Fresh compute when `reuse` is `None`, otherwise reuse of one stored
    /// residual set per layer.
    fn forward(
        &self,
        f: &Latent<T>,
        reuse: Option<&[BlockResiduals<T>]>,
    ) -> Result<(Tensor<T>, Vec<BlockResiduals<T>>)>;

    fn flops_per_step(&self, cached: bool) -> u64;
}

impl<T: Scalar> Backbone<T> for Model<T> {
    fn latent_shape(&self) -> [usize; 3] {
        self.cfg.latent_shape()
    }

    fn num_layers(&self) -> usize {
        self.cfg.layers
    }

    fn forward(
        &self,
        f: &Latent<T>,
        reuse: Option<&[BlockResiduals<T>]>,
    ) -> Result<(Tensor<T>, Vec<BlockResiduals<T>>)> {
        let decisions: Vec<Option<&BlockResiduals<T>>> = match reuse {
            Some(res) => res.iter().map(Some).collect(),
            None => vec![None; self.cfg.layers],
        };
        self.dit_forward(f, &self.cond, &decisions)
    }

    fn flops_per_step(&self, cached: bool) -> u64 {
        flops_per_step(&self.cfg, cached)
    }
}
