use serde::{Deserialize, Serialize, Serializer};

use crate::denoiser::RunTrace;
use crate::error::{Error, Result};
use crate::numerics::{min_max, Tensor};
use crate::scalar::Scalar;

/// Compute accounting of one run against an all-compute run of the same
/// length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub total_flops: u64,
    pub computed_steps: usize,
    pub cached_steps: usize,
    pub baseline_flops: u64,
    pub speedup_estimate: f64,
}

impl FlopsReport {
    /// `full_step_flops` is the cost of one computed step.
    pub fn from_trace(trace: &RunTrace, full_step_flops: u64) -> Self {
        let total_flops = trace.total_flops();
        let baseline_flops = trace.records.len() as u64 * full_step_flops;
        Self {
            total_flops,
            computed_steps: trace.computed_steps(),
            cached_steps: trace.cached_steps(),
            baseline_flops,
            speedup_estimate: baseline_flops as f64 / total_flops as f64,
        }
    }
}

/// Writes non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`.
fn finite_or_tag<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn finite_or_tag_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    #[derive(Serialize)]
    struct W(#[serde(serialize_with = "finite_or_tag")] f64);
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&W(*x))?;
    }
    seq.end()
}

/// Quality proxy between a reference latent and a test latent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// dB; `+inf` iff the latents are identical.
    #[serde(serialize_with = "finite_or_tag")]
    pub psnr: f64,
    pub mean_abs_err: f64,
    #[serde(serialize_with = "finite_or_tag_vec")]
    pub per_frame_psnr: Vec<f64>,
}

fn psnr(range: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (range * range / mse).log10()
    }
}

/// PSNR of `b` against the reference `a`, using `max(a) - min(a)` as the
/// peak value for the whole tensor and for each frame (first axis).
pub fn compare_runs<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<ComparisonReport> {
    if a.shape() != b.shape() {
        return Err(Error::arg(format!(
            "cannot compare shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (lo, hi) = min_max(a).ok_or_else(|| Error::arg("cannot compare empty latents"))?;
    let range = hi.widen() - lo.widen();
    let frames = a.shape().first().copied().unwrap_or(1).max(1);
    let per_frame = a.len() / frames;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut per_frame_psnr = Vec::with_capacity(frames);
    for (fa, fb) in a.data().chunks(per_frame).zip(b.data().chunks(per_frame)) {
        let mut fsq = 0.0;
        for (x, y) in fa.iter().zip(fb) {
            let d = x.widen() - y.widen();
            fsq += d * d;
            abs += d.abs();
        }
        sq += fsq;
        per_frame_psnr.push(psnr(range, fsq / per_frame as f64));
    }
    let n = a.len() as f64;
    Ok(ComparisonReport {
        psnr: psnr(range, sq / n),
        mean_abs_err: abs / n,
        per_frame_psnr,
    })
}
