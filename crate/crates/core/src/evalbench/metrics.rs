use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// `(TP/(TP+FN), TN/(TN+FP))` of `declared` against `true_support` over `[p]`.
///
/// An empty true support has sensitivity 1 and a full one specificity 1.
/// Indices must lie below `p`.
pub fn sens_spec(true_support: &[usize], declared: &[usize], p: usize) -> (f64, f64) {
    let mut truth = vec![false; p];
    let mut said = vec![false; p];
    for &j in true_support {
        truth[j] = true;
    }
    for &j in declared {
        said[j] = true;
    }
    let (mut tp, mut fneg, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (t, d) in truth.iter().zip(&said) {
        match (t, d) {
            (true, true) => tp += 1,
            (true, false) => fneg += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let sens = if tp + fneg == 0 { 1.0 } else { tp as f64 / (tp + fneg) as f64 };
    let spec = if tn + fp == 0 { 1.0 } else { tn as f64 / (tn + fp) as f64 };
    (sens, spec)
}

pub fn rrmse(beta_true: ArrayView1<f64>, beta_hat: ArrayView1<f64>) -> Result<f64> {
    let norm = beta_true.dot(&beta_true).sqrt();
    if norm == 0.0 {
        return Err(Error::UndefinedMetric("rrmse of a zero signal"));
    }
    let diff = &beta_true - &beta_hat;
    Ok(diff.dot(&diff).sqrt() / norm)
}
