//! Small deterministic tensor kernels.
//!
//! Everything here is single-threaded, allocation-per-call and row-major.
//! Matrix kernels treat a tensor of shape `[d0, .., dk, c]` as a matrix with
//! `d0 * .. * dk` rows and `c` columns, so latents of shape `[frames, tokens,
//! channels]` feed straight into projections and attention without reshaping.
//!
//! Reductions (softmax normalizers, layer-norm statistics, distances) are
//! accumulated in `f64` and narrowed back to the element type.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::arg(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last dimension.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Product of all leading dimensions.
    pub fn rows(&self) -> usize {
        let c = self.cols();
        if c == 0 {
            0
        } else {
            self.data.len() / c
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::arg(format!(
                "{what}: shape {:?} does not match {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Adds `bias` (length = last dim) to every row.
    pub fn add_row_bias(&mut self, bias: &Self) -> Result<()> {
        let c = self.cols();
        if bias.len() != c {
            return Err(Error::arg(format!(
                "row bias has {} elements, rows have {c}",
                bias.len()
            )));
        }
        for row in self.data.chunks_exact_mut(c) {
            for (x, &b) in row.iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Copy of the slab `[start, end)` along the first axis.
    pub fn slice_outer(&self, start: usize, end: usize) -> Result<Self> {
        let outer = *self
            .shape
            .first()
            .ok_or_else(|| Error::arg("slice of a scalar"))?;
        if start > end || end > outer {
            return Err(Error::arg(format!(
                "slice {start}..{end} out of range for outer dim {outer}"
            )));
        }
        let inner = if outer == 0 {
            0
        } else {
            self.data.len() / outer
        };
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Ok(Self {
            shape,
            data: self.data[start * inner..end * inner].to_vec(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::narrow(x.widen())).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Call counters

thread_local! {
    static MATMUL_CALLS: Cell<u64> = const { Cell::new(0) };
    static ATTENTION_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Per-thread count of heavy kernel invocations since the last reset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KernelCounts {
    pub matmul: u64,
    pub attention: u64,
}

pub fn kernel_counts() -> KernelCounts {
    KernelCounts {
        matmul: MATMUL_CALLS.with(Cell::get),
        attention: ATTENTION_CALLS.with(Cell::get),
    }
}

pub fn reset_kernel_counts() {
    MATMUL_CALLS.with(|c| c.set(0));
    ATTENTION_CALLS.with(|c| c.set(0));
}

fn bump(counter: &'static std::thread::LocalKey<Cell<u64>>) {
    counter.with(|c| c.set(c.get() + 1));
}

// ---------------------------------------------------------------------------
// Kernels

/// `c[m, n] = a[m, k] * b[k, n]`, i-k-j order so the inner loop vectorizes.
fn gemm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for (a_row, c_row) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
        for (&a_ik, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            for (c_ij, &b_kj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_ik * b_kj;
            }
        }
    }
    c
}

/// `x[.., k] @ w[k, n] -> [.., n]`.
pub fn matmul<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    if w.shape.len() != 2 {
        return Err(Error::arg(format!(
            "matmul weight must be 2-D, got {:?}",
            w.shape
        )));
    }
    let (k, n) = (w.shape[0], w.shape[1]);
    if x.cols() != k {
        return Err(Error::arg(format!(
            "matmul inner dims differ: {:?} x {:?}",
            x.shape, w.shape
        )));
    }
    bump(&MATMUL_CALLS);
    let mut shape = x.shape.clone();
    *shape.last_mut().expect("non-scalar") = n;
    let data = gemm(&x.data, &w.data, x.rows(), k, n);
    Ok(Tensor { shape, data })
}

/// Numerically stable softmax along `axis`.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= x.shape.len() {
        return Err(Error::arg(format!(
            "softmax axis {axis} out of range for rank {}",
            x.shape.len()
        )));
    }
    let len = x.shape[axis];
    let inner: usize = x.shape[axis + 1..].iter().product();
    let outer: usize = x.shape[..axis].iter().product();
    let mut out = x.clone();
    let mut buf = vec![0.0f64; len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let idx = |j: usize| base + j * inner;
            let max = (0..len)
                .map(|j| x.data[idx(j)])
                .fold(T::neg_infinity(), T::max);
            let mut sum = 0.0f64;
            for (j, e) in buf.iter_mut().enumerate() {
                *e = (x.data[idx(j)] - max).widen().exp();
                sum += *e;
            }
            for (j, e) in buf.iter().enumerate() {
                out.data[idx(j)] = T::narrow(e / sum);
            }
        }
    }
    Ok(out)
}

/// Row softmax on a flat `[rows, cols]` buffer, in place.
fn softmax_rows_in_place<T: Scalar>(data: &mut [T], cols: usize) {
    for row in data.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = 0.0f64;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += x.widen();
        }
        let inv = 1.0 / sum;
        for x in row.iter_mut() {
            *x = T::narrow(x.widen() * inv);
        }
    }
}

/// Layer normalization over the last dimension.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::arg(format!(
            "layer_norm: gain/bias lengths {}/{} do not match last dim {d}",
            gain.len(),
            bias.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::arg("layer_norm: eps must be positive"));
    }
    let mut out = x.clone();
    for row in out.data.chunks_exact_mut(d) {
        let mean = row.iter().map(|v| v.widen()).sum::<f64>() / d as f64;
        let var = row
            .iter()
            .map(|v| {
                let c = v.widen() - mean;
                c * c
            })
            .sum::<f64>()
            / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(&gain.data).zip(&bias.data) {
            *v = T::narrow((v.widen() - mean) * inv * g.widen() + b.widen());
        }
    }
    Ok(out)
}

/// Multi-head scaled dot-product attention.
///
/// `q` has `nq` rows, `k` and `v` have `nk` rows; all three share the channel
/// dimension, which is split evenly across `heads`. Output has `q`'s shape.
pub fn attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
) -> Result<Tensor<T>> {
    let d = q.cols();
    if heads == 0 || d % heads != 0 {
        return Err(Error::arg(format!(
            "attention: {d} channels not divisible by {heads} heads"
        )));
    }
    if k.cols() != d || v.cols() != d {
        return Err(Error::arg("attention: q/k/v channel dims differ"));
    }
    let (nq, nk) = (q.rows(), k.rows());
    if v.rows() != nk || nk == 0 {
        return Err(Error::arg(format!(
            "attention: k has {nk} rows, v has {}",
            v.rows()
        )));
    }
    bump(&ATTENTION_CALLS);
    let dh = d / heads;
    let scale = T::narrow(1.0 / (dh as f64).sqrt());
    let mut out = Tensor::zeros(&q.shape);
    let mut qh = vec![T::zero(); nq * dh];
    let mut kt = vec![T::zero(); dh * nk];
    let mut vh = vec![T::zero(); nk * dh];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..nq {
            for c in 0..dh {
                qh[i * dh + c] = q.data[i * d + off + c] * scale;
            }
        }
        for j in 0..nk {
            for c in 0..dh {
                kt[c * nk + j] = k.data[j * d + off + c];
                vh[j * dh + c] = v.data[j * d + off + c];
            }
        }
        let mut logits = gemm(&qh, &kt, nq, dh, nk);
        softmax_rows_in_place(&mut logits, nk);
        let oh = gemm(&logits, &vh, nq, nk, dh);
        for i in 0..nq {
            out.data[i * d + off..i * d + off + dh].copy_from_slice(&oh[i * dh..(i + 1) * dh]);
        }
    }
    Ok(out)
}

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    x.map(|v| {
        let v = v.widen();
        T::narrow(0.5 * v * (1.0 + (C * (v + 0.044_715 * v * v * v)).tanh()))
    })
}

// ---------------------------------------------------------------------------
// Reductions

fn paired<'a, T: Scalar>(a: &'a Tensor<T>, b: &'a Tensor<T>, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::arg(format!(
            "{what}: shape {:?} does not match {:?}",
            a.shape, b.shape
        )));
    }
    if a.is_empty() {
        return Err(Error::arg(format!("{what}: empty tensors")));
    }
    Ok(())
}

/// `mean(|a - b|)`.
pub fn mean_abs_diff<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    paired(a, b, "mean_abs_diff")?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x.widen() - y.widen()).abs())
        .sum();
    Ok(sum / a.len() as f64)
}

/// `mean((a - b)^2)`.
pub fn mean_sq_diff<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    paired(a, b, "mean_sq_diff")?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x.widen() - y.widen();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// `1 - cos(a, b)` over the flattened tensors. Two zero tensors are at
/// distance 0; a zero tensor against a non-zero one is at distance 1.
pub fn cosine_distance<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    paired(a, b, "cosine_distance")?;
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.data.iter().zip(&b.data) {
        let (x, y) = (x.widen(), y.widen());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    Ok(match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0),
    })
}

pub fn min_max<T: Scalar>(x: &Tensor<T>) -> Option<(T, T)> {
    let mut it = x.data.iter().copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
}
