//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the solver, debiasing or correction code under
//! test.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// `‖A‖_F²`, an upper bound on the largest squared singular value.
pub fn lipschitz_bound(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn robust_objective(y: ArrayView1<f64>, a: ArrayView2<f64>, beta: &Array1<f64>, delta: &Array1<f64>, l1: f64, l2: f64) -> f64 {
    let r = &(&y - &a.dot(beta)) - delta;
    r.dot(&r) / (2.0 * y.len() as f64) + l1 * beta.mapv(f64::abs).sum() + l2 * delta.mapv(f64::abs).sum()
}

/// FISTA with adaptive restart on the joint variable `(β, δ)`.
pub fn prox_grad_robust_lasso(y: ArrayView1<f64>, a: ArrayView2<f64>, l1: f64, l2: f64, iters: usize) -> (Array1<f64>, Array1<f64>, f64) {
    let (n, p) = a.dim();
    let nf = n as f64;
    let step = nf / (lipschitz_bound(a) + 1.0);
    let (mut b, mut d) = (Array1::<f64>::zeros(p), Array1::<f64>::zeros(n));
    let (mut bx, mut dx) = (b.clone(), d.clone());
    let mut t = 1.0f64;
    let mut prev = f64::INFINITY;
    for _ in 0..iters {
        let r = &(&y - &a.dot(&bx)) - &dx;
        let gb = a.t().dot(&r) / -nf;
        let gd = &r / -nf;
        let nb = (&bx - &(&gb * step)).mapv(|v| soft(v, step * l1));
        let nd = (&dx - &(&gd * step)).mapv(|v| soft(v, step * l2));
        let obj = robust_objective(y, a, &nb, &nd, l1, l2);
        if obj > prev {
            // restart momentum
            t = 1.0;
            bx = b.clone();
            dx = d.clone();
            prev = robust_objective(y, a, &b, &d, l1, l2);
            continue;
        }
        prev = obj;
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / tn;
        bx = &nb + &((&nb - &b) * mom);
        dx = &nd + &((&nd - &d) * mom);
        b = nb;
        d = nd;
        t = tn;
    }
    let obj = robust_objective(y, a, &b, &d, l1, l2);
    (b, d, obj)
}

/// Reference for the debiasing program restricted to the C3 box
/// `|(1/p) a_kᵀ w_i − 1{k=i}| ≤ μ3`. The program separates over rows of `W`;
/// each row is solved through its dual by projected gradient ascent started
/// at zero. Returns `(Σ‖w_i‖² of the primal iterate, dual lower bound on the
/// optimum, worst constraint violation of the primal iterate)`.
pub fn w_relaxation_reference(a: ArrayView2<f64>, mu3: f64, iters: usize) -> (f64, f64, f64) {
    let (n, p) = a.dim();
    let g = a.mapv(|v| v / p as f64);
    let lip = lipschitz_bound(g.view()).max(1e-300);
    let step = 1.0 / (2.0 * lip);
    let (mut primal, mut dual, mut viol) = (0.0, 0.0, 0.0f64);
    for i in 0..n {
        let target = Array1::from_shape_fn(n, |k| if k == i { 1.0 } else { 0.0 });
        let upper = &target + mu3;
        let lower = &target - mu3;
        // multipliers of Gw ≤ u and Gw ≥ l; w = Gᵀ(ν_l − ν_u)
        let mut nu_u = Array1::<f64>::zeros(n);
        let mut nu_l = Array1::<f64>::zeros(n);
        let (mut yu, mut yl) = (nu_u.clone(), nu_l.clone());
        let mut t = 1.0f64;
        for _ in 0..iters {
            let w = g.t().dot(&(&yl - &yu));
            let gw = g.dot(&w);
            let nu_n = (&yu + &((&gw - &upper) * step)).mapv(|v| v.max(0.0));
            let nl_n = (&yl + &((&lower - &gw) * step)).mapv(|v| v.max(0.0));
            let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let mom = (t - 1.0) / tn;
            yu = &nu_n + &((&nu_n - &nu_u) * mom);
            yl = &nl_n + &((&nl_n - &nu_l) * mom);
            nu_u = nu_n;
            nu_l = nl_n;
            t = tn;
        }
        let w = g.t().dot(&(&nu_l - &nu_u));
        let ww = w.dot(&w);
        // dual of min ½‖w‖²: −½‖w(ν)‖² − ν_uᵀu + ν_lᵀl, doubled for Σ‖w‖²
        dual += 2.0 * (-0.5 * ww - nu_u.dot(&upper) + nu_l.dot(&lower));
        primal += ww;
        let gw = g.dot(&w);
        for k in 0..n {
            viol = viol.max(gw[k] - upper[k]).max(lower[k] - gw[k]);
        }
    }
    (primal, dual, viol)
}

/// Solves `min ‖y − A_S x‖` by normal equations and Gaussian elimination
/// with partial pivoting; returns the full-length vector.
pub fn least_squares_on_support(y: ArrayView1<f64>, a: ArrayView2<f64>, support: &[usize]) -> Array1<f64> {
    let s = support.len();
    let sub = Array2::from_shape_fn((a.nrows(), s), |(i, k)| a[[i, support[k]]]);
    let mut m = sub.t().dot(&sub);
    let mut rhs = sub.t().dot(&y);
    for col in 0..s {
        let piv = (col..s).max_by(|&i, &k| m[[i, col]].abs().total_cmp(&m[[k, col]].abs())).unwrap();
        for k in 0..s {
            m.swap([col, k], [piv, k]);
        }
        rhs.swap(col, piv);
        for row in col + 1..s {
            let f = m[[row, col]] / m[[col, col]];
            for k in col..s {
                m[[row, k]] -= f * m[[col, k]];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = Array1::<f64>::zeros(s);
    for row in (0..s).rev() {
        let tail: f64 = (row + 1..s).map(|k| m[[row, k]] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[[row, row]];
    }
    let mut full = Array1::zeros(a.ncols());
    for (k, &j) in support.iter().enumerate() {
        full[j] = x[k];
    }
    full
}

/// Every single-entry flip of `row`, preceded by `row` itself, scored by
/// `|z_i − candidate·β|`. Returns the winning candidate; ties keep the
/// earlier one.
pub fn brute_force_ssm(z_i: f64, row: ArrayView1<f64>, beta: ArrayView1<f64>) -> Array1<f64> {
    let mut best = row.to_owned();
    let mut best_err = (z_i - row.dot(&beta)).abs();
    for j in 0..row.len() {
        let mut cand = row.to_owned();
        cand[j] = 1.0 - cand[j];
        let err = (z_i - cand.dot(&beta)).abs();
        if err < best_err {
            best_err = err;
            best = cand;
        }
    }
    best
}
