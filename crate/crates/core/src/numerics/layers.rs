//! Layer primitives with hand-written backward passes.

use super::tensor::{gemm, Tensor2};
use crate::error::{Error, Result};

/// Gradients of an affine layer `y = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrads {
    pub dw: Tensor2,
    pub db: Tensor2,
    pub dx: Tensor2,
}

/// `x·W + b`, with `b` broadcast over the rows of `x`.
pub fn affine_forward(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if x.cols() != w.rows() {
        return Err(Error::Dimension {
            op: "affine_forward",
            left: x.shape(),
            right: w.shape(),
        });
    }
    let mut y = x.matmul(w)?;
    y.add_row_broadcast(b)?;
    Ok(y)
}

/// Backward pass of [`affine_forward`] given the upstream gradient `dy`.
pub fn affine_backward(x: &Tensor2, w: &Tensor2, dy: &Tensor2) -> Result<AffineGrads> {
    if x.cols() != w.rows() || dy.rows() != x.rows() || dy.cols() != w.cols() {
        return Err(Error::Dimension {
            op: "affine_backward",
            left: x.shape(),
            right: dy.shape(),
        });
    }
    Ok(AffineGrads {
        dw: x.t_matmul(dy)?,
        db: dy.sum_rows(),
        dx: dy.matmul_t(w)?,
    })
}

/// Accumulating variant: `dw += xᵀ·dy`, `db += Σ dy`, returns `dx`.
pub fn affine_backward_into(
    x: &Tensor2,
    w: &Tensor2,
    dy: &Tensor2,
    dw: &mut Tensor2,
    db: &mut Tensor2,
) -> Result<Tensor2> {
    gemm(1.0, x, true, dy, false, 1.0, dw, "affine_backward")?;
    db.add_scaled(&dy.sum_rows(), 1.0)?;
    dy.matmul_t(w)
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn tanh_forward(x: &Tensor2) -> Tensor2 {
    x.map(f64::tanh)
}

/// Gradient through `y = tanh(x)` expressed in terms of the output `y`.
pub fn tanh_backward(y: &Tensor2, dy: &Tensor2) -> Result<Tensor2> {
    y.same_shape(dy, "tanh_backward")?;
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(y, d)| d * (1.0 - y * y))
        .collect();
    Tensor2::from_vec(y.rows(), y.cols(), data)
}

/// Numerically stable log-softmax of a slice.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Cross-entropy `−log softmax(logits)[target]` and its gradient w.r.t. the
/// logits (`softmax − onehot`).
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let lp = log_softmax(logits);
    let loss = -lp[target];
    let mut grad: Vec<f64> = lp.into_iter().map(f64::exp).collect();
    grad[target] -= 1.0;
    (loss, grad)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
