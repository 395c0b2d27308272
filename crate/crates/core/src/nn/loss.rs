use super::Tensor;
use crate::{Error, Result};

/// Row-wise softmax over the last axis of `[batch, classes]` logits.
pub fn softmax(logits: &Tensor) -> Tensor {
    let c = *logits.shape().last().unwrap_or(&1);
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(c.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean cross-entropy over the batch and its gradient with respect to the
/// logits.
pub fn softmax_cross_entropy(logits: &Tensor, classes: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 || logits.shape()[0] != classes.len() {
        return Err(Error::Shape(format!(
            "logits {:?} do not match {} labels",
            logits.shape(),
            classes.len()
        )));
    }
    let c = logits.shape()[1];
    if let Some(&bad) = classes.iter().find(|&&k| k >= c) {
        return Err(Error::ClassOutOfRange {
            class: bad,
            classes: c,
        });
    }
    let n = classes.len() as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (row, (&k, z)) in grad
        .data_mut()
        .chunks_exact_mut(c)
        .zip(classes.iter().zip(logits.data().chunks_exact(c)))
    {
        // log-sum-exp form keeps the loss exact for large logits.
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[k];
        row[k] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok((loss / n, grad))
}

/// Mean squared error over all elements and its gradient.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len().max(1) as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}
