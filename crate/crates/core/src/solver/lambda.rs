//! Regularization selection for the Robust Lasso.
//!
//! Stage 1 screens a log-spaced `(λ1, λ2)` grid, keeping pairs whose
//! standardized debiased MME coordinates look Gaussian. Stage 2 picks the
//! retained pair with the smallest row-wise K-fold cross-validation error.
//! With nothing retained the theory values are used.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::cd::{Design, RobustFit, SolverOptions};
use super::lilliefors::{lilliefors_pvalue, MIN_SAMPLE};
use crate::debias::{closed_form_w, debias_delta, DebiasConfig};
use crate::error::Result;
use crate::rng::{substream, Stream};
use crate::stats::upper_quantile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrid {
    /// Natural-log bounds shared by λ1 and λ2.
    pub log_min: f64,
    pub log_max: f64,
    pub step: f64,
    pub lilliefors_alpha: f64,
    pub gaussian_fraction_threshold: f64,
    pub cv_folds: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            log_min: 1.0,
            log_max: 7.0,
            step: 0.25,
            lilliefors_alpha: 0.01,
            gaussian_fraction_threshold: 0.70,
            cv_folds: 10,
        }
    }
}

impl LambdaGrid {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step > 0.0
            && self.log_max >= self.log_min
            && self.lilliefors_alpha > 0.0
            && self.lilliefors_alpha < 1.0
            && self.gaussian_fraction_threshold > 0.0
            && self.gaussian_fraction_threshold < 1.0
            && self.cv_folds >= 2;
        if ok {
            Ok(())
        } else {
            crate::error::param(format!("invalid lambda grid {self:?}"))
        }
    }

    /// Grid values in descending order.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.log_max - self.log_min) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .rev()
            .map(|k| (self.log_min + k as f64 * self.step).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaChoice {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Pairs surviving the Gaussianity screen.
    pub retained: usize,
    pub fallback: bool,
    pub cv_error: Option<f64>,
}

/// `λ1 = 4σ√(ln p)/√(n'−r̂)`, `λ2 = 4σ√(ln n')/(n'−r̂)`.
pub fn theory_lambdas(sigma: f64, p: usize, n_prime: usize, r_hat: usize) -> (f64, f64) {
    let eff = (n_prime - r_hat.min(n_prime - 1)) as f64;
    let l1 = 4.0 * sigma * (p as f64).ln().sqrt() / eff.sqrt();
    let l2 = 4.0 * sigma * (n_prime as f64).ln().sqrt() / eff;
    (l1, l2)
}

/// Fraction of `|z_i| ≤ Φ⁻¹(1 − α/2)` and the pooled Lilliefors verdict.
fn gaussian_screen(z: &Array1<f64>, grid: &LambdaGrid) -> bool {
    let cut = upper_quantile(grid.lilliefors_alpha / 2.0);
    let inside = z.iter().filter(|v| v.abs() <= cut).count();
    if (inside as f64) < grid.gaussian_fraction_threshold * z.len() as f64 {
        return false;
    }
    if z.len() < MIN_SAMPLE {
        return true;
    }
    let sample: Vec<f64> = z.to_vec();
    lilliefors_pvalue(&sample).map_or(false, |pv| pv >= grid.lilliefors_alpha)
}

struct Fold {
    design: Design,
    y_train: Array1<f64>,
    held_out: Vec<usize>,
    warm: Option<RobustFit>,
}

fn make_folds(y: ArrayView1<f64>, a: ArrayView2<f64>, k: usize) -> Vec<Fold> {
    let n = y.len();
    let k = k.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(n as u64, Stream::Folds));
    (0..k)
        .map(|f| {
            let held_out: Vec<usize> = order.iter().copied().skip(f).step_by(k).collect();
            let train: Vec<usize> = (0..n).filter(|i| !held_out.contains(i)).collect();
            Fold {
                design: Design::new(a.select(Axis(0), &train).view()),
                y_train: train.iter().map(|&i| y[i]).collect(),
                held_out,
                warm: None,
            }
        })
        .collect()
}

/// Mean over folds of the held-out squared prediction error `(y_i − a_i β̂)²`.
fn cv_error(y: ArrayView1<f64>, a: ArrayView2<f64>, folds: &mut [Fold], l1: f64, l2: f64, opts: &SolverOptions) -> Result<f64> {
    let mut total = 0.0;
    for fold in folds.iter_mut() {
        let warm = fold.warm.as_ref().map(|f| (&f.beta_hat, &f.delta_hat));
        let fit = fold.design.robust_lasso(fold.y_train.view(), l1, l2, warm, opts)?;
        let err: f64 = fold
            .held_out
            .iter()
            .map(|&i| (y[i] - a.row(i).dot(&fit.beta_hat)).powi(2))
            .sum::<f64>()
            / fold.held_out.len() as f64;
        total += err;
        fold.warm = Some(fit);
    }
    Ok(total / folds.len() as f64)
}

/// Never fails on numerical grounds: unusable grid points are skipped and an
/// empty retained set falls back to the theory values.
pub fn select_lambdas(
    y: ArrayView1<f64>,
    a: ArrayView2<f64>,
    theta: f64,
    grid: &LambdaGrid,
    sigma: f64,
    debias_cfg: &DebiasConfig,
) -> Result<LambdaChoice> {
    grid.validate()?;
    let (n, p) = a.dim();
    let values = grid.values();
    if values.len() == 1 {
        return Ok(LambdaChoice {
            lambda1: values[0],
            lambda2: values[0],
            retained: 1,
            fallback: false,
            cv_error: None,
        });
    }
    let (t1, t2) = theory_lambdas(sigma, p, n, 0);
    let fallback = LambdaChoice {
        lambda1: t1,
        lambda2: t2,
        retained: 0,
        fallback: true,
        cv_error: None,
    };
    let Ok(op) = closed_form_w(a, theta, debias_cfg) else {
        return Ok(fallback);
    };
    if !(sigma > 0.0) {
        return Ok(fallback);
    }
    let opts = SolverOptions::default();
    let design = Design::new(a);

    let mut retained = Vec::new();
    for &l2 in &values {
        let mut warm: Option<RobustFit> = None;
        for &l1 in &values {
            let w = warm.as_ref().map(|f| (&f.beta_hat, &f.delta_hat));
            // a grid point whose fit fails is simply not retained
            let Ok(fit) = design.robust_lasso(y, l1, l2, w, &opts) else {
                continue;
            };
            let screened = debias_delta(y, a, &op, &fit, sigma).is_ok_and(|dd| gaussian_screen(&dd.standardized(), grid));
            if screened {
                retained.push((l1, l2));
            }
            warm = Some(fit);
        }
    }
    if retained.is_empty() {
        return Ok(fallback);
    }

    let mut folds = make_folds(y, a, grid.cv_folds);
    // Walk the retained pairs in serpentine order so every fit warm-starts
    // from a neighbouring grid point; ties still go to the earlier grid pair.
    let mut best: Option<(f64, usize)> = None;
    for k in serpentine(&retained) {
        let (l1, l2) = retained[k];
        let Ok(err) = cv_error(y, a, &mut folds, l1, l2, &opts) else {
            folds.iter_mut().for_each(|f| f.warm = None);
            continue;
        };
        if best.map_or(true, |(e, kb)| err < e || (err == e && k < kb)) {
            best = Some((err, k));
        }
    }
    let Some((err, k)) = best else {
        return Ok(fallback);
    };
    let (l1, l2) = retained[k];
    Ok(LambdaChoice {
        lambda1: l1,
        lambda2: l2,
        retained: retained.len(),
        fallback: false,
        cv_error: Some(err),
    })
}

/// Indices of `pairs` (grouped by λ2, λ1 descending within a group) with
/// every other group reversed.
fn serpentine(pairs: &[(f64, f64)]) -> Vec<usize> {
    let mut order = Vec::with_capacity(pairs.len());
    let mut start = 0;
    let mut flip = false;
    while start < pairs.len() {
        let end = (start..pairs.len()).find(|&k| pairs[k].1 != pairs[start].1).unwrap_or(pairs.len());
        if flip {
            order.extend((start..end).rev());
        } else {
            order.extend(start..end);
        }
        flip = !flip;
        start = end;
    }
    order
}

/// Cross-validation error of one `(λ1, λ2)` pair, the quantity stage 2 minimizes.
pub fn cross_validation_error(y: ArrayView1<f64>, a: ArrayView2<f64>, folds: usize, l1: f64, l2: f64) -> Result<f64> {
    let mut f = make_folds(y, a, folds);
    cv_error(y, a, &mut f, l1, l2, &SolverOptions::default())
}
