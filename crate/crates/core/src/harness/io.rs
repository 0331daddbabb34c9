//! On-disk artifact formats.
//!
//! Latent files: the magic `ADLT`, a little-endian `u32` rank, `rank`
//! little-endian `u32` dimensions, then the row-major elements as
//! little-endian IEEE-754 `f32`.
//!
//! Trace files: one JSON object per line, one line per step, with the
//! fields of [`StepRecord`] in declaration order. Absent values are `null`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::denoiser::{RunTrace, StepRecord};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

pub const LATENT_MAGIC: [u8; 4] = *b"ADLT";

pub fn encode_latent<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.shape().len() + 4 * t.len());
    out.extend_from_slice(&LATENT_MAGIC);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in t.data() {
        out.extend_from_slice(&(x.widen() as f32).to_le_bytes());
    }
    out
}

pub fn decode_latent(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut words = bytes
        .get(4..)
        .ok_or_else(|| bad("truncated header"))?
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]]);
    if bytes[..4] != LATENT_MAGIC {
        return Err(bad("bad magic"));
    }
    let rank = u32::from_le_bytes(words.next().ok_or_else(|| bad("missing rank"))?) as usize;
    let shape = (0..rank)
        .map(|_| words.next().map(|w| u32::from_le_bytes(w) as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("truncated shape"))?;
    let n: usize = shape.iter().product();
    if bytes.len() != 8 + 4 * rank + 4 * n {
        return Err(bad("payload length does not match shape"));
    }
    let data: Vec<f32> = words.map(f32::from_le_bytes).collect();
    Tensor::new(shape, data)
}

pub fn write_latent<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    fs::write(path, encode_latent(t)).map_err(|e| Error::io(path, e))
}

pub fn read_latent(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_latent(&bytes, path)
}

pub fn encode_trace(trace: &RunTrace) -> String {
    let mut out = String::new();
    for r in &trace.records {
        out.push_str(&serde_json::to_string(r).expect("step records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(encode_trace(trace).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<RunTrace> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: format!("line {}: {e}", i + 1),
        })?;
        records.push(rec);
    }
    Ok(RunTrace { records })
}
