//! Dense row-major `f64` tensors and the handful of kernels the morphing
//! pipeline is built from: per-channel statistics, linear interpolation and
//! scaled dot-product attention.
//!
//! Every function here is pure. Matrix products go through
//! `matrixmultiply`, which is deterministic for a given shape.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking extents, payload length and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!("tensor extents must be positive, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "payload of {} values does not match shape {shape:?} ({expected} values)",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value {} at flat index {i}", data[i])));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(!shape.is_empty() && shape.iter().all(|&d| d > 0), "bad shape {shape:?}");
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    /// Internal constructor for kernels whose output shape is correct by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::invalid(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    /// `(channels, height, width)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            s => Err(Error::invalid(format!("expected a [C,H,W] tensor, got shape {s:?}"))),
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() || shape.contains(&0) {
            return Err(Error::invalid(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        Ok(Self { shape, data: self.data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `a·self + b·other`, element-wise.
    pub fn linear_combination(&self, a: f64, other: &Tensor, b: f64) -> Result<Tensor> {
        self.zip_with(other, "linear_combination", |x, y| a * x + b * y)
    }

    pub fn zip_with(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same_shape(other, op)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    /// Largest absolute element-wise difference; `f64::INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        if self.shape != other.shape {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `‖self − other‖ / ‖other‖`, with `other` as the reference.
    pub fn relative_l2(&self, reference: &Tensor) -> Result<f64> {
        let diff = self.sub(reference)?.l2_norm();
        let norm = reference.l2_norm();
        Ok(if norm == 0.0 { diff } else { diff / norm })
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = rhs.dims2()?;
        if k != k2 {
            return Err(Error::invalid(format!("matmul: inner dimensions {k} and {k2} differ")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, (k, 1), &rhs.data, (n, 1), &mut out);
        Ok(Self::from_parts(vec![m, n], out))
    }

    /// `self · rhsᵀ` without materialising the transpose.
    pub fn matmul_t(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (n, k2) = rhs.dims2()?;
        if k != k2 {
            return Err(Error::invalid(format!("matmul_t: inner dimensions {k} and {k2} differ")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, (k, 1), &rhs.data, (1, k), &mut out);
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self::from_parts(vec![c, r], out))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat_rows: no inputs"))?;
        let (_, cols) = first.dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let (r, c) = p.dims2()?;
            if c != cols {
                return Err(Error::invalid(format!("concat_rows: column counts {cols} and {c} differ")));
            }
            rows += r;
            data.extend_from_slice(&p.data);
        }
        Ok(Self::from_parts(vec![rows, cols], data))
    }
}

/// Row-major `c = a·b` where `a` is `m×k` and `b` is `k×n`, each given with
/// explicit (row, column) strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
) {
    assert!(m > 0 && k > 0 && n > 0);
    assert!((m - 1) * a_strides.0 + (k - 1) * a_strides.1 < a.len());
    assert!((k - 1) * b_strides.0 + (n - 1) * b_strides.1 < b.len());
    assert_eq!(c.len(), m * n);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed with the dense row-major layout passed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Per-channel mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Statistics over every axis but the first, so `[C,H,W]` gives one entry per channel.
pub fn channel_stats(t: &Tensor) -> Result<ChannelStats> {
    if t.rank() < 2 {
        return Err(Error::invalid(format!("channel_stats needs [C, ...], got {:?}", t.shape())));
    }
    let c = t.shape()[0];
    let per = t.len() / c;
    let mut mean = Vec::with_capacity(c);
    let mut std = Vec::with_capacity(c);
    for chunk in t.data().chunks_exact(per) {
        let mu = chunk.iter().sum::<f64>() / per as f64;
        let var = chunk.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / per as f64;
        mean.push(mu);
        std.push(var.sqrt());
    }
    Ok(ChannelStats { mean, std })
}

/// `(1−alpha)·a + alpha·b`, exact at both endpoints and wherever `a == b`.
#[inline]
pub fn lerp_scalar(a: f64, b: f64, alpha: f64) -> f64 {
    if alpha == 0.0 || a == b {
        a
    } else if alpha == 1.0 {
        b
    } else {
        (1.0 - alpha) * a + alpha * b
    }
}

/// Element-wise interpolation; `alpha` weights the second argument.
pub fn lerp(a: &Tensor, b: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("lerp: alpha {alpha} outside [0, 1]")));
    }
    a.zip_with(b, "lerp", |x, y| lerp_scalar(x, y, alpha))
}

/// Numerically stable in-place softmax over each row of a `rows × cols` buffer.
pub(crate) fn softmax_rows(buf: &mut [f64], cols: usize) {
    for row in buf.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Row-wise softmax of `Q·Kᵀ/√d`, the weights `attention` applies to `V`.
pub fn attention_weights(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let (n, d) = q.dims2()?;
    let (m, dk) = k.dims2()?;
    if d != dk {
        return Err(Error::invalid(format!("attention: query width {d} != key width {dk}")));
    }
    let mut logits = vec![0.0; n * m];
    gemm(n, d, m, q.data(), (d, 1), k.data(), (1, d), &mut logits);
    let scale = 1.0 / (d as f64).sqrt();
    logits.iter_mut().for_each(|v| *v *= scale);
    softmax_rows(&mut logits, m);
    Ok(Tensor::from_parts(vec![n, m], logits))
}

/// Scaled dot-product attention `softmax(Q·Kᵀ/√d)·V`.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (m, _) = k.dims2()?;
    let (mv, dv) = v.dims2()?;
    if m != mv {
        return Err(Error::invalid(format!("attention: {m} keys but {mv} values")));
    }
    let weights = attention_weights(q, k)?;
    let n = weights.shape()[0];
    let mut out = vec![0.0; n * dv];
    gemm(n, m, dv, weights.data(), (m, 1), v.data(), (dv, 1), &mut out);
    Ok(Tensor::from_parts(vec![n, dv], out))
}
