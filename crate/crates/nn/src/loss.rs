//! Loss functions and their gradients with respect to the prediction.
//! Conventions: MSE and binary cross-entropy average over all entries,
//! categorical cross-entropy averages over the batch.

use serde::{Deserialize, Serialize};

use bae_core::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    BinaryCrossEntropy,
    CategoricalCrossEntropy,
}

/// Predictions are clamped into [BCE_CLAMP, 1 - BCE_CLAMP] inside the
/// cross-entropy losses.
pub const BCE_CLAMP: f64 = 1e-7;

fn clamp01(p: f64) -> f64 {
    p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
}

pub fn loss_value(kind: LossKind, pred: &Matrix, target: &Matrix) -> f64 {
    debug_assert_eq!(pred.rows(), target.rows());
    debug_assert_eq!(pred.cols(), target.cols());
    let entries = (pred.rows() * pred.cols()) as f64;
    match kind {
        LossKind::Mse => {
            let mut s = 0.0;
            for (p, t) in pred.data().iter().zip(target.data()) {
                let d = p - t;
                s += d * d;
            }
            s / entries
        }
        LossKind::BinaryCrossEntropy => {
            let mut s = 0.0;
            for (&p, &t) in pred.data().iter().zip(target.data()) {
                let y = clamp01(p);
                s -= t * y.ln() + (1.0 - t) * (1.0 - y).ln();
            }
            s / entries
        }
        LossKind::CategoricalCrossEntropy => {
            let mut s = 0.0;
            for (&p, &t) in pred.data().iter().zip(target.data()) {
                if t != 0.0 {
                    s -= t * clamp01(p).ln();
                }
            }
            s / pred.rows() as f64
        }
    }
}

/// dL/d(prediction) for the matching `loss_value`. Entries clamped by the
/// cross-entropy losses get zero gradient.
pub fn loss_grad(kind: LossKind, pred: &Matrix, target: &Matrix) -> Matrix {
    let entries = (pred.rows() * pred.cols()) as f64;
    let mut out = Matrix::zeros(pred.rows(), pred.cols());
    match kind {
        LossKind::Mse => {
            for i in 0..pred.data().len() {
                out.data_mut()[i] = 2.0 * (pred.data()[i] - target.data()[i]) / entries;
            }
        }
        LossKind::BinaryCrossEntropy => {
            for i in 0..pred.data().len() {
                let p = pred.data()[i];
                if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                    continue;
                }
                let t = target.data()[i];
                out.data_mut()[i] = (p - t) / (p * (1.0 - p)) / entries;
            }
        }
        LossKind::CategoricalCrossEntropy => {
            let batch = pred.rows() as f64;
            for i in 0..pred.data().len() {
                let t = target.data()[i];
                if t == 0.0 {
                    continue;
                }
                let p = pred.data()[i];
                if p <= BCE_CLAMP {
                    continue;
                }
                out.data_mut()[i] = -t / p / batch;
            }
        }
    }
    out
}

/// Fraction of rows where the argmax of the prediction matches the argmax
/// of the one-hot target.
pub fn accuracy(pred: &Matrix, target: &Matrix) -> f64 {
    let mut hits = 0usize;
    for r in 0..pred.rows() {
        let pa = argmax(pred.row(r));
        let ta = argmax(target.row(r));
        if pa == ta {
            hits += 1;
        }
    }
    hits as f64 / pred.rows() as f64
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
