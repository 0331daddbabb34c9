//! Test backbones and residual streams shared by the integration tests.
#![allow(dead_code)]

use std::cell::Cell;

use adacache::{Backbone, BlockResiduals, Latent, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SHAPE: [usize; 3] = [2, 2, 2];

/// A backbone whose residuals follow a script instead of a network: at loop
/// step `s` a fresh compute returns `p = script[s]` everywhere (and q = r = 0)
/// for every layer. The noise prediction is zero.
pub struct ScriptedBackbone {
    pub script: Vec<f32>,
    pub layers: usize,
    pub computes: Cell<usize>,
    /// Every residual set handed back on a reuse step, for purity checks.
    pub reused: std::cell::RefCell<Vec<Vec<BlockResiduals<f32>>>>,
}

impl ScriptedBackbone {
    pub fn new(script: &[f32], layers: usize) -> Self {
        Self {
            script: script.to_vec(),
            layers,
            computes: Cell::new(0),
            reused: Default::default(),
        }
    }
}

impl Backbone<f32> for ScriptedBackbone {
    fn latent_shape(&self) -> [usize; 3] {
        SHAPE
    }

    fn num_layers(&self) -> usize {
        self.layers
    }

    fn forward(
        &self,
        f: &Latent<f32>,
        reuse: Option<&[BlockResiduals<f32>]>,
    ) -> Result<(Tensor<f32>, Vec<BlockResiduals<f32>>)> {
        let pred = Tensor::zeros(&SHAPE);
        match reuse {
            Some(res) => {
                self.reused.borrow_mut().push(res.to_vec());
                Ok((pred, res.to_vec()))
            }
            None => {
                self.computes.set(self.computes.get() + 1);
                let v = self.script[f.step];
                let res = (0..self.layers)
                    .map(|l| BlockResiduals {
                        p: Tensor::full(&SHAPE, v),
                        q: Tensor::zeros(&SHAPE),
                        r: Tensor::zeros(&SHAPE),
                        layer: l,
                        computed_at_step: f.step,
                    })
                    .collect();
                Ok((pred, res))
            }
        }
    }

    fn flops_per_step(&self, cached: bool) -> u64 {
        if cached {
            1
        } else {
            100
        }
    }
}

/// Replayable residual stream `[step][layer]` with injected inter-frame
/// motion of magnitude `a`.
///
/// The base content is identical across frames and grows by non-negative
/// random increments each step. The injected part is
/// `a * frame * u * (1 + step / steps)` with `u >= 0`, so every elementwise
/// difference between two steps is non-negative and both the step distance
/// and the motion score grow linearly in `a`.
pub fn motion_stream(
    a: f32,
    steps: usize,
    layers: usize,
    shape: [usize; 3],
    seed: u64,
) -> Vec<Vec<BlockResiduals<f32>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [n, s, d] = shape;
    let per_frame = s * d;
    let base0: Vec<f32> = (0..per_frame)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let u: Vec<f32> = (0..per_frame).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut base = base0;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        if step > 0 {
            for b in base.iter_mut() {
                *b += rng.random_range(0.0..0.2);
            }
        }
        let ramp = 1.0 + step as f32 / steps as f32;
        let p = Tensor::from_fn(&shape, |idx| {
            let frame = idx / per_frame;
            let j = idx % per_frame;
            base[j] + a * frame as f32 * u[j] * ramp
        });
        let _ = n;
        out.push(
            (0..layers)
                .map(|l| BlockResiduals {
                    p: p.clone(),
                    q: Tensor::zeros(&shape),
                    r: Tensor::zeros(&shape),
                    layer: l,
                    computed_at_step: step,
                })
                .collect(),
        );
    }
    out
}

/// Residual stream `[step][layer]` of random-walk tensors.
pub fn random_stream(
    steps: usize,
    layers: usize,
    shape: [usize; 3],
    scale: f32,
    seed: u64,
) -> Vec<Vec<BlockResiduals<f32>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();
    let mut cur: Vec<Vec<f32>> = (0..layers)
        .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    (0..steps)
        .map(|step| {
            (0..layers)
                .map(|l| {
                    for x in cur[l].iter_mut() {
                        *x += rng.random_range(-scale..scale);
                    }
                    BlockResiduals {
                        p: Tensor::new(shape.to_vec(), cur[l].clone()).unwrap(),
                        q: Tensor::zeros(&shape),
                        r: Tensor::zeros(&shape),
                        layer: l,
                        computed_at_step: step,
                    }
                })
                .collect()
        })
        .collect()
}
