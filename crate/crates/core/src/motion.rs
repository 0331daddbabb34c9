//! Motion regularization of the cache metric.
//!
//! A noisy motion estimate is taken from frame differences of a block
//! residual, its trend across computed steps is tracked, and the sum of both
//! scales the distance metric so that high-motion content picks smaller
//! cache rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mean_abs_diff, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    pub enabled: bool,
    /// Frame offset used for the frame differences.
    #[serde(default = "default_frame_step")]
    pub frame_step: usize,
}

fn default_frame_step() -> usize {
    1
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            frame_step: default_frame_step(),
        }
    }
}

impl MotionConfig {
    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.frame_step < 1 || self.frame_step >= frames {
            return Err(Error::config(
                "moreg.frame_step",
                format!("must lie in [1, {frames}) for {frames} frames"),
            ));
        }
        Ok(())
    }
}

/// Mean absolute difference between frames `i..N` and `0..N-i` of `p`,
/// where the first axis of `p` indexes frames.
pub fn motion_score<T: Scalar>(p: &Tensor<T>, i: usize) -> Result<f64> {
    let n = *p
        .shape()
        .first()
        .ok_or_else(|| Error::arg("motion_score on a scalar tensor"))?;
    if i < 1 || i >= n {
        return Err(Error::arg(format!(
            "frame step {i} out of range for {n} frames"
        )));
    }
    mean_abs_diff(&p.slice_outer(i, n)?, &p.slice_outer(0, n - i)?)
}

/// `(m_curr - m_prev) / k`.
pub fn motion_gradient(m_curr: f64, m_prev: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("motion_gradient needs a step gap k >= 1"));
    }
    Ok((m_curr - m_prev) / k as f64)
}

/// Scales the metric by `max(0, m + mg)`.
pub fn regularize(c: f64, m: f64, mg: f64) -> f64 {
    c * (m + mg).max(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionState {
    pub m: f64,
    pub mg: f64,
    pub last_m: Option<f64>,
    pub last_m_step: usize,
    pub frame_step: usize,
}

impl MotionState {
    pub fn new(frame_step: usize) -> Self {
        Self {
            m: 0.0,
            mg: 0.0,
            last_m: None,
            last_m_step: 0,
            frame_step,
        }
    }

    /// Records a fresh motion score taken at `step`, `k` steps after the
    /// previous one. The first score has zero gradient.
    pub fn update(&mut self, m: f64, step: usize, k: usize) -> Result<()> {
        self.mg = match self.last_m {
            Some(prev) => motion_gradient(m, prev, k)?,
            None => 0.0,
        };
        self.m = m;
        self.last_m = Some(m);
        self.last_m_step = step;
        Ok(())
    }

    pub fn scale(&self, c: f64) -> f64 {
        regularize(c, self.m, self.mg)
    }
}
