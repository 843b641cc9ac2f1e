//! Closed-form debiasing of the Robust Lasso for centered Bernoulli designs.
//!
//! The debiasing matrix is `w_i = p(1 − μ3) a_i / ‖a_i‖²` row by row, which
//! makes the smoothing matrix `M = (1/p) A Wᵀ` have the constant diagonal
//! `1 − μ3`. The debiased MME estimate is `δ̂ + (I − M)(y − Aβ̂ − δ̂)` with
//! covariance `σ² (I − M)(I − M)ᵀ`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{param, Error, Result};
use crate::simkit::centering_scale;
use crate::solver::RobustFit;

/// Which constraint radii to use for the debiasing program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Radii {
    /// `μ3 = c_μ √(2 ln n'/p)` and friends, without `h` factors.
    #[default]
    Plain,
    /// The same radii multiplied by powers of `h = 1/(2θ(1-θ))`.
    HScaled,
}

/// Orientation and scale of the smoothing matrix `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// `M = (1/p) A Wᵀ`.
    #[default]
    AwtOverP,
    /// `M = (1/n') W Aᵀ`.
    WatOverN,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DebiasConfig {
    pub c_mu: f64,
    pub radii: Radii,
    pub smoothing: Smoothing,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        Self {
            c_mu: 2.0,
            radii: Radii::Plain,
            smoothing: Smoothing::AwtOverP,
        }
    }
}

/// The four constraint radii of the debiasing program for an `n' × p` design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusSet {
    pub c0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl RadiusSet {
    pub fn new(n_prime: usize, p: usize, theta: f64, cfg: &DebiasConfig) -> Self {
        let (n, pf) = (n_prime as f64, p as f64);
        let h = centering_scale(theta);
        let (k0, k1, k2) = match cfg.radii {
            Radii::Plain => (1.0, 1.0, 1.0),
            Radii::HScaled => (h * h, h * h, h * h * h),
        };
        Self {
            c0: 1.0 + k0 * (pf.ln() / n).sqrt(),
            mu1: 2.0 * k1 * (2.0 * pf.ln() / n).sqrt(),
            mu2: 4.0 * k2 * ((2.0 * n * pf).ln() / (n * pf)).sqrt() + 1.0 / n,
            mu3: cfg.c_mu * k1 * (2.0 * n.ln() / pf).sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DebiasOperator {
    pub w: Array2<f64>,
    pub radii: RadiusSet,
    pub h: f64,
    /// `max_{i≠k} |a_iᵀa_k| / ‖a_i‖²`.
    pub tau: f64,
    /// Whether `τ/(1+τ) ≤ μ3`, the condition for the closed form to be optimal.
    pub tau_feasible: bool,
    pub m: Array2<f64>,
    pub residual_maker: Array2<f64>,
    pub config: DebiasConfig,
}

impl DebiasOperator {
    pub fn mu3(&self) -> f64 {
        self.radii.mu3
    }
}

fn row_norms_sq(a: ArrayView2<f64>) -> Vec<f64> {
    a.rows().into_iter().map(|r| r.dot(&r)).collect()
}

pub fn closed_form_w(a: ArrayView2<f64>, theta: f64, cfg: &DebiasConfig) -> Result<DebiasOperator> {
    let (n, p) = a.dim();
    if n == 0 || p == 0 {
        return param("empty design");
    }
    let radii = RadiusSet::new(n, p, theta, cfg);
    if radii.mu3 >= 1.0 {
        return Err(Error::InfeasibleRegime { mu3: radii.mu3 });
    }
    let norms = row_norms_sq(a);
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateRow(i));
    }
    let mut w = a.to_owned();
    for (i, mut row) in w.rows_mut().into_iter().enumerate() {
        row *= p as f64 * (1.0 - radii.mu3) / norms[i];
    }
    let gram = a.dot(&a.t());
    let mut tau: f64 = 0.0;
    for i in 0..n {
        for k in 0..n {
            if i != k {
                tau = tau.max(gram[[i, k]].abs() / norms[i]);
            }
        }
    }
    let m = smoothing_matrix(a, w.view(), cfg.smoothing);
    let residual_maker = Array2::eye(n) - &m;
    Ok(DebiasOperator {
        w,
        radii,
        h: centering_scale(theta),
        tau,
        tau_feasible: tau / (1.0 + tau) <= radii.mu3,
        m,
        residual_maker,
        config: *cfg,
    })
}

pub fn smoothing_matrix(a: ArrayView2<f64>, w: ArrayView2<f64>, smoothing: Smoothing) -> Array2<f64> {
    match smoothing {
        Smoothing::AwtOverP => a.dot(&w.t()) / a.ncols() as f64,
        Smoothing::WatOverN => w.dot(&a.t()) / a.nrows() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCheck {
    pub lhs: f64,
    pub radius: f64,
    pub pass: bool,
}

/// Relative slack on each radius. The closed form meets C3 with equality on
/// the diagonal, so an exact comparison would be decided by round-off.
pub const CONSTRAINT_RTOL: f64 = 1e-9;

impl ConstraintCheck {
    fn new(lhs: f64, radius: f64) -> Self {
        Self {
            lhs,
            radius,
            pass: lhs <= radius * (1.0 + CONSTRAINT_RTOL),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    pub c0: ConstraintCheck,
    pub c1: ConstraintCheck,
    pub c2: ConstraintCheck,
    pub c3: ConstraintCheck,
}

impl ConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.c0.pass && self.c1.pass && self.c2.pass && self.c3.pass
    }
}

fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Evaluates the four debiasing constraints for an arbitrary `W`:
///
/// * C0 `max_j ‖w_{·j}‖²/n' ≤ c0`
/// * C1 `|I_p − (1/n') WᵀA|∞ ≤ μ1`
/// * C2 `|(1/p)(I − (1/n') AWᵀ) A|∞ ≤ μ2`
/// * C3 `|(1/p) AWᵀ − I|∞ ≤ μ3`
pub fn verify_constraints(w: ArrayView2<f64>, a: ArrayView2<f64>, theta: f64, cfg: &DebiasConfig) -> Result<ConstraintReport> {
    if w.dim() != a.dim() {
        return param(format!("W is {:?} but A is {:?}", w.dim(), a.dim()));
    }
    let (n, p) = a.dim();
    let (nf, pf) = (n as f64, p as f64);
    let radii = RadiusSet::new(n, p, theta, cfg);
    let c0 = w
        .axis_iter(Axis(1))
        .map(|c| c.dot(&c) / nf)
        .fold(0.0, f64::max);
    let c1 = max_abs(&(Array2::eye(p) - &(w.t().dot(&a) / nf)));
    let awt = a.dot(&w.t());
    let c2 = max_abs(&((Array2::eye(n) - &(&awt / nf)).dot(&a) / pf));
    let c3 = max_abs(&(&awt / pf - Array2::<f64>::eye(n)));
    Ok(ConstraintReport {
        c0: ConstraintCheck::new(c0, radii.c0),
        c1: ConstraintCheck::new(c1, radii.mu1),
        c2: ConstraintCheck::new(c2, radii.mu2),
        c3: ConstraintCheck::new(c3, radii.mu3),
    })
}

/// `Σ_j ‖w_{·j}‖²`.
pub fn w_objective(w: ArrayView2<f64>) -> f64 {
    w.iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedDelta {
    pub delta_w: Array1<f64>,
    /// `sqrt(diag Σ_δ)`.
    pub sigma_diag: Array1<f64>,
}

impl DebiasedDelta {
    pub fn standardized(&self) -> Array1<f64> {
        &self.delta_w / &self.sigma_diag
    }
}

pub fn debias_delta(
    y: ArrayView1<f64>,
    a: ArrayView2<f64>,
    op: &DebiasOperator,
    fit: &RobustFit,
    sigma: f64,
) -> Result<DebiasedDelta> {
    if !(sigma > 0.0) {
        return param(format!("noise level must be positive, got {sigma}"));
    }
    let resid = &(&y - &a.dot(&fit.beta_hat)) - &fit.delta_hat;
    let delta_w = &fit.delta_hat + &op.residual_maker.dot(&resid);
    let sigma_diag = op
        .residual_maker
        .rows()
        .into_iter()
        .map(|r| sigma * r.dot(&r).sqrt())
        .collect();
    Ok(DebiasedDelta { delta_w, sigma_diag })
}

/// Full `Σ_δ = σ²(I − M)(I − M)ᵀ`.
pub fn delta_covariance(op: &DebiasOperator, sigma: f64) -> Array2<f64> {
    op.residual_maker.dot(&op.residual_maker.t()) * (sigma * sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedBeta {
    pub beta_w: Array1<f64>,
    pub se: Array1<f64>,
    pub mu_beta: f64,
}

impl DebiasedBeta {
    pub fn z_scores(&self) -> Array1<f64> {
        &self.beta_w / &self.se
    }
}

/// Column analogue of the closed form: `m_j = n'(1 − μβ) a_{·j}/‖a_{·j}‖²`,
/// `β̂_W = β̂ + (1/n') Mβᵀ (y − Aβ̂)`, `se_j = σ‖m_j‖/n'`.
pub fn debias_beta(y: ArrayView1<f64>, a: ArrayView2<f64>, beta_hat: ArrayView1<f64>, sigma: f64) -> Result<DebiasedBeta> {
    if !(sigma > 0.0) {
        return param(format!("noise level must be positive, got {sigma}"));
    }
    let (n, p) = a.dim();
    let nf = n as f64;
    let mu_beta = 2.0 * (2.0 * (p as f64).ln() / nf).sqrt();
    let resid = &y - &a.dot(&beta_hat);
    let mut beta_w = Array1::zeros(p);
    let mut se = Array1::zeros(p);
    for (j, col) in a.axis_iter(Axis(1)).enumerate() {
        let norm_sq = col.dot(&col);
        if norm_sq == 0.0 {
            return Err(Error::DegenerateColumn(j));
        }
        let m_j = &col * (nf * (1.0 - mu_beta) / norm_sq);
        beta_w[j] = beta_hat[j] + m_j.dot(&resid) / nf;
        se[j] = sigma * m_j.dot(&m_j).sqrt() / nf;
    }
    Ok(DebiasedBeta { beta_w, se, mu_beta })
}
