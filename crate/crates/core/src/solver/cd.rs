//! Cyclic coordinate descent for the Lasso and the Robust Lasso
//!
//! ```text
//! min_{β,δ}  (1/2n')‖y − Aβ − δ‖² + λ1‖β‖₁ + λ2‖δ‖₁
//! ```
//!
//! Each sweep updates every β coordinate by soft-thresholding, then every δ
//! coordinate in closed form, `δ_i = soft(y_i − a_i β, n'λ2)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{param, Error, Result};

/// Cold starts below this fraction of `λ_max` use a continuation path.
const PATH_TRIGGER: f64 = 0.05;
const PATH_RATIO: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the largest coordinate move is below `tol_rel · (1 + ‖x‖∞)`.
    pub tol_rel: f64,
    /// And the KKT gap is below `kkt_tol · (1 + scale)`, where scale is the
    /// larger of the penalties and `‖y‖∞ / n'`.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_rel: 1e-8,
            kkt_tol: 1e-9,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustFit {
    pub beta_hat: Array1<f64>,
    pub delta_hat: Array1<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub iterations: usize,
    pub kkt_gap: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta_hat: Array1<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub kkt_gap: f64,
    pub objective: f64,
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `(1/2n')‖y − Aβ − δ‖² + λ1‖β‖₁ + λ2‖δ‖₁`; pass an empty `delta` for the Lasso.
pub fn robust_objective(
    y: ArrayView1<f64>,
    a: ArrayView2<f64>,
    beta: ArrayView1<f64>,
    delta: ArrayView1<f64>,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let n = y.len() as f64;
    let mut r = &y - &a.dot(&beta);
    if !delta.is_empty() {
        r -= &delta;
    }
    r.dot(&r) / (2.0 * n) + lambda1 * l1(beta) + lambda2 * l1(delta)
}

fn l1(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn max_abs(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest violation of the subgradient optimality conditions.
fn kkt_gap_raw(
    at: &Array2<f64>,
    r: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    delta: Option<ArrayView1<f64>>,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let n = r.len() as f64;
    let mut gap: f64 = 0.0;
    for (j, col) in at.rows().into_iter().enumerate() {
        let g = col.dot(&r) / n;
        gap = gap.max(subgradient_violation(g, beta[j], lambda1));
    }
    if let Some(delta) = delta {
        for (i, &ri) in r.iter().enumerate() {
            gap = gap.max(subgradient_violation(ri / n, delta[i], lambda2));
        }
    }
    gap
}

#[inline]
fn subgradient_violation(grad: f64, x: f64, lambda: f64) -> f64 {
    if x > 0.0 {
        (grad - lambda).abs()
    } else if x < 0.0 {
        (grad + lambda).abs()
    } else {
        (grad.abs() - lambda).max(0.0)
    }
}

/// Optimality gap of a Robust-Lasso fit, recomputed from scratch.
pub fn kkt_residual(y: ArrayView1<f64>, a: ArrayView2<f64>, fit: &RobustFit) -> f64 {
    let r = &(&y - &a.dot(&fit.beta_hat)) - &fit.delta_hat;
    let at = a.t().to_owned();
    kkt_gap_raw(
        &at,
        r.view(),
        fit.beta_hat.view(),
        Some(fit.delta_hat.view()),
        fit.lambda1,
        fit.lambda2,
    )
}

pub fn lasso_kkt_residual(y: ArrayView1<f64>, a: ArrayView2<f64>, fit: &LassoFit) -> f64 {
    let r = &y - &a.dot(&fit.beta_hat);
    let at = a.t().to_owned();
    kkt_gap_raw(&at, r.view(), fit.beta_hat.view(), None, fit.lambda, 0.0)
}

/// Design matrix prepared for repeated solves (column-major copy and
/// column norms), e.g. along a regularization grid.
#[derive(Debug, Clone)]
pub struct Design {
    at: Array2<f64>,
    col_sq: Vec<f64>,
    n: usize,
}

impl Design {
    pub fn new(a: ArrayView2<f64>) -> Self {
        let n = a.nrows();
        let at = a.t().as_standard_layout().to_owned();
        let col_sq = at
            .rows()
            .into_iter()
            .map(|c| c.dot(&c) / n as f64)
            .collect();
        Self { at, col_sq, n }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.at.nrows()
    }

    fn residual(&self, y: ArrayView1<f64>, beta: &Array1<f64>, delta: Option<&Array1<f64>>) -> Array1<f64> {
        let mut r = y.to_owned();
        for (j, col) in self.at.rows().into_iter().enumerate() {
            if beta[j] != 0.0 {
                r.scaled_add(-beta[j], &col);
            }
        }
        if let Some(d) = delta {
            r -= d;
        }
        r
    }

    /// Core solver; `lambda2 = None` drops the δ block (plain Lasso).
    ///
    /// A cold start at `λ1` far below `λ_max = ‖Aᵀy‖∞/n` walks down a
    /// geometric path of larger `λ1` values first, warm-starting each solve.
    fn solve(
        &self,
        y: ArrayView1<f64>,
        lambda1: f64,
        lambda2: Option<f64>,
        warm: Option<(&Array1<f64>, &Array1<f64>)>,
        opts: &SolverOptions,
    ) -> Result<(Array1<f64>, Array1<f64>, usize, f64)> {
        let n = self.n;
        if y.len() != n {
            return param(format!("y has {} entries, A has {n} rows", y.len()));
        }
        if !(lambda1 >= 0.0) || lambda2.is_some_and(|l| !(l >= 0.0)) {
            return param("regularization parameters must be nonnegative");
        }
        if warm.is_some() {
            return self.solve_at(y, lambda1, lambda2, warm, opts);
        }
        let lambda_max = self.at.dot(&y).iter().fold(0.0f64, |m, v| m.max(v.abs())) / n as f64;
        if !(lambda1 < PATH_TRIGGER * lambda_max) {
            return self.solve_at(y, lambda1, lambda2, None, opts);
        }
        let mut state: Option<(Array1<f64>, Array1<f64>)> = None;
        let mut total = 0;
        let mut step = lambda_max * PATH_RATIO;
        while step > lambda1 / PATH_RATIO {
            let w = state.as_ref().map(|(b, d)| (b, d));
            let (b, d, it, _) = self.solve_at(y, step, lambda2, w, opts)?;
            total += it;
            state = Some((b, d));
            step *= PATH_RATIO;
        }
        let w = state.as_ref().map(|(b, d)| (b, d));
        let (b, d, it, gap) = self.solve_at(y, lambda1, lambda2, w, opts)?;
        Ok((b, d, total + it, gap))
    }

    fn solve_at(
        &self,
        y: ArrayView1<f64>,
        lambda1: f64,
        lambda2: Option<f64>,
        warm: Option<(&Array1<f64>, &Array1<f64>)>,
        opts: &SolverOptions,
    ) -> Result<(Array1<f64>, Array1<f64>, usize, f64)> {
        let (n, p) = (self.n, self.ncols());
        let nf = n as f64;
        let mut beta = Array1::zeros(p);
        let mut delta = Array1::zeros(if lambda2.is_some() { n } else { 0 });
        if let Some((b0, d0)) = warm {
            if b0.len() == p {
                beta.assign(b0);
            }
            if lambda2.is_some() && d0.len() == n {
                delta.assign(d0);
            }
        }
        let delta_thresh = lambda2.map(|l| nf * l);
        let scale = 1.0 + lambda1.max(lambda2.unwrap_or(0.0)).max(max_abs(y) / nf);
        let kkt_limit = opts.kkt_tol * scale;

        let mut r = self.residual(y, &beta, lambda2.map(|_| &delta));
        #[cfg(debug_assertions)]
        let mut last_obj = f64::INFINITY;
        let mut gap = f64::INFINITY;
        let mut sweeps = 0;
        let mut active: Vec<usize> = Vec::with_capacity(p);
        while sweeps < opts.max_sweeps {
            // full sweep; only these can certify convergence
            let max_change = self.sweep(None, &mut beta, &mut delta, &mut r, lambda1, delta_thresh);
            sweeps += 1;
            #[cfg(debug_assertions)]
            {
                let obj = r.dot(&r) / (2.0 * nf) + lambda1 * l1(beta.view()) + lambda2.unwrap_or(0.0) * l1(delta.view());
                debug_assert!(
                    obj <= last_obj + 1e-10 * (1.0 + last_obj.abs()),
                    "objective increased: {last_obj} -> {obj}"
                );
                last_obj = obj;
            }
            let size = 1.0 + max_abs(beta.view()).max(max_abs(delta.view()));
            if max_change < opts.tol_rel * size {
                // refresh the residual to shed accumulated rounding before the KKT check
                r = self.residual(y, &beta, lambda2.map(|_| &delta));
                let dv = lambda2.map(|_| delta.view());
                gap = kkt_gap_raw(&self.at, r.view(), beta.view(), dv, lambda1, lambda2.unwrap_or(0.0));
                if gap <= kkt_limit || max_change == 0.0 {
                    return Ok((beta, delta, sweeps, gap));
                }
            }
            active.clear();
            active.extend((0..p).filter(|&j| beta[j] != 0.0));
            while sweeps < opts.max_sweeps {
                let change = self.sweep(Some(&active), &mut beta, &mut delta, &mut r, lambda1, delta_thresh);
                sweeps += 1;
                #[cfg(debug_assertions)]
                {
                    let obj = r.dot(&r) / (2.0 * nf) + lambda1 * l1(beta.view()) + lambda2.unwrap_or(0.0) * l1(delta.view());
                    debug_assert!(
                        obj <= last_obj + 1e-10 * (1.0 + last_obj.abs()),
                        "objective increased: {last_obj} -> {obj}"
                    );
                    last_obj = obj;
                }
                let size = 1.0 + max_abs(beta.view()).max(max_abs(delta.view()));
                if change < opts.tol_rel * size {
                    break;
                }
            }
        }
        if !gap.is_finite() {
            let dv = lambda2.map(|_| delta.view());
            gap = kkt_gap_raw(&self.at, r.view(), beta.view(), dv, lambda1, lambda2.unwrap_or(0.0));
        }
        Err(Error::NonConvergence {
            iterations: opts.max_sweeps,
            kkt_gap: gap,
        })
    }

    /// One pass over the β coordinates in `active` (all when `None`), then
    /// over every δ coordinate. Returns the largest coordinate change.
    fn sweep(
        &self,
        active: Option<&[usize]>,
        beta: &mut Array1<f64>,
        delta: &mut Array1<f64>,
        r: &mut Array1<f64>,
        lambda1: f64,
        delta_thresh: Option<f64>,
    ) -> f64 {
        let nf = self.n as f64;
        let mut max_change: f64 = 0.0;
        let mut update = |j: usize| {
            let cs = self.col_sq[j];
            let old = beta[j];
            if cs == 0.0 {
                beta[j] = 0.0;
                return;
            }
            let col = self.at.row(j);
            let rho = col.dot(&*r) / nf + cs * old;
            let new = soft_threshold(rho, lambda1) / cs;
            if new != old {
                r.scaled_add(old - new, &col);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        };
        match active {
            Some(idx) => idx.iter().for_each(|&j| update(j)),
            None => (0..self.ncols()).for_each(&mut update),
        }
        if let Some(t) = delta_thresh {
            for i in 0..self.n {
                let old = delta[i];
                let target = r[i] + old;
                let new = soft_threshold(target, t);
                if new != old {
                    r[i] = target - new;
                    delta[i] = new;
                    max_change = max_change.max((new - old).abs());
                }
            }
        }
        max_change
    }

    pub fn lasso(&self, y: ArrayView1<f64>, lambda: f64, warm: Option<&Array1<f64>>, opts: &SolverOptions) -> Result<LassoFit> {
        let empty = Array1::zeros(0);
        let (beta, _, iterations, kkt_gap) = self.solve(y, lambda, None, warm.map(|b| (b, &empty)), opts)?;
        let objective = self.objective(y, &beta, None, lambda, 0.0);
        Ok(LassoFit {
            beta_hat: beta,
            lambda,
            iterations,
            kkt_gap,
            objective,
        })
    }

    pub fn robust_lasso(
        &self,
        y: ArrayView1<f64>,
        lambda1: f64,
        lambda2: f64,
        warm: Option<(&Array1<f64>, &Array1<f64>)>,
        opts: &SolverOptions,
    ) -> Result<RobustFit> {
        let (beta, delta, iterations, kkt_gap) = self.solve(y, lambda1, Some(lambda2), warm, opts)?;
        let objective = self.objective(y, &beta, Some(&delta), lambda1, lambda2);
        Ok(RobustFit {
            beta_hat: beta,
            delta_hat: delta,
            lambda1,
            lambda2,
            iterations,
            kkt_gap,
            objective,
        })
    }

    fn objective(&self, y: ArrayView1<f64>, beta: &Array1<f64>, delta: Option<&Array1<f64>>, l1w: f64, l2w: f64) -> f64 {
        let r = self.residual(y, beta, delta);
        r.dot(&r) / (2.0 * self.n as f64) + l1w * l1(beta.view()) + delta.map_or(0.0, |d| l2w * l1(d.view()))
    }
}

/// `argmin (1/2n')‖y − Aβ‖² + λ‖β‖₁`.
pub fn lasso(y: ArrayView1<f64>, a: ArrayView2<f64>, lambda: f64) -> Result<LassoFit> {
    Design::new(a).lasso(y, lambda, None, &SolverOptions::default())
}

/// Joint sparse fit of the signal β and the gross-error vector δ.
pub fn robust_lasso(y: ArrayView1<f64>, a: ArrayView2<f64>, lambda1: f64, lambda2: f64) -> Result<RobustFit> {
    Design::new(a).robust_lasso(y, lambda1, lambda2, None, &SolverOptions::default())
}
