//! Debiased Robust-Lasso testing of centered measurements and the iterative
//! detection loop that grows the flagged set `J`.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::debias::{closed_form_w, debias_delta, DebiasConfig, DebiasedDelta};
use crate::error::{param, Error, Result};
use crate::simkit::CenteredSystem;
use crate::solver::{select_lambdas, theory_lambdas, Design, LambdaGrid, RobustFit, SolverOptions};
use crate::stats::{normal_sf, upper_quantile};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_MAX_ITERATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sidedness {
    /// Reject when `stat > τ_{α/2}`, `p = 2(1 − Φ(stat))`.
    #[default]
    TwoSided,
    /// Reject when `stat > τ_α`, `p = 1 − Φ(stat)`.
    OneSided,
}

/// How each detection pass picks `(λ1, λ2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaStrategy {
    /// `4σ√(ln p)/√m` and `4σ√(ln m)/m` on the `m` rows being fitted.
    Theory,
    Grid {
        grid: LambdaGrid,
        /// Rerun the grid search on every reduced system instead of reusing
        /// the first pass's pair.
        reselect: bool,
    },
    Fixed { lambda1: f64, lambda2: f64 },
}

impl Default for LambdaStrategy {
    fn default() -> Self {
        LambdaStrategy::Grid {
            grid: LambdaGrid::default(),
            reselect: true,
        }
    }
}

impl LambdaStrategy {
    pub fn resolve(
        &self,
        y: ArrayView1<f64>,
        a: ArrayView2<f64>,
        theta: f64,
        sigma: f64,
        debias: &DebiasConfig,
    ) -> Result<(f64, f64)> {
        match *self {
            LambdaStrategy::Theory => Ok(theory_lambdas(sigma, a.ncols(), a.nrows(), 0)),
            LambdaStrategy::Grid { grid, .. } => {
                let c = select_lambdas(y, a, theta, &grid, sigma, debias)?;
                Ok((c.lambda1, c.lambda2))
            }
            LambdaStrategy::Fixed { lambda1, lambda2 } => Ok((lambda1, lambda2)),
        }
    }

    fn reselects(&self) -> bool {
        match *self {
            LambdaStrategy::Theory => true,
            LambdaStrategy::Grid { reselect, .. } => reselect,
            LambdaStrategy::Fixed { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Cap `r_U` on the number of flagged centered rows.
    pub r_upper: usize,
    pub alpha: f64,
    pub sidedness: Sidedness,
    pub lambda: LambdaStrategy,
    pub max_iterations: usize,
    pub debias: DebiasConfig,
    pub solver: SolverOptions,
}

impl DetectorConfig {
    pub fn new(r_upper: usize) -> Self {
        Self {
            r_upper,
            alpha: DEFAULT_ALPHA,
            sidedness: Sidedness::default(),
            lambda: LambdaStrategy::default(),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            debias: DebiasConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdrltOutcome {
    pub stats: Array1<f64>,
    pub pvalues: Array1<f64>,
    /// Rejected indices in increasing order.
    pub rejected: Vec<usize>,
}

pub fn odrlt_test(dd: &DebiasedDelta, alpha: f64, sidedness: Sidedness) -> Result<OdrltOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return param(format!("alpha must lie in (0,1), got {alpha}"));
    }
    if let Some(i) = dd.sigma_diag.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateVariance(i));
    }
    let stats: Array1<f64> = dd
        .delta_w
        .iter()
        .zip(dd.sigma_diag.iter())
        .map(|(d, s)| d.abs() / s)
        .collect();
    let (cut, tails) = match sidedness {
        Sidedness::TwoSided => (upper_quantile(alpha / 2.0), 2.0),
        Sidedness::OneSided => (upper_quantile(alpha), 1.0),
    };
    let pvalues = stats.mapv(|t| (tails * normal_sf(t)).min(1.0));
    let rejected = (0..stats.len()).filter(|&i| stats[i] > cut).collect();
    Ok(OdrltOutcome {
        stats,
        pvalues,
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Flagged centered indices, increasing.
    pub flagged: Vec<usize>,
    /// Statistic of each index from the last pass that tested it.
    pub stats: Array1<f64>,
    pub pvalues: Array1<f64>,
    pub r_hat: usize,
    /// Original rows of the flagged pairs, increasing.
    pub rows_b: Vec<usize>,
    pub iterations: usize,
    pub lambdas: (f64, f64),
    /// Robust-Lasso fit on the unflagged rows, in their increasing order.
    pub clean_fit: RobustFit,
}

impl DetectionResult {
    pub fn unflagged(&self) -> Vec<usize> {
        (0..self.stats.len()).filter(|i| self.flagged.binary_search(i).is_err()).collect()
    }
}

struct Pass {
    fit: RobustFit,
    outcome: OdrltOutcome,
}

fn run_pass(sys: &CenteredSystem, rows: &[usize], lambdas: (f64, f64), cfg: &DetectorConfig) -> Result<Pass> {
    let sub = sys.select_rows(rows);
    let fit = Design::new(sub.a.view()).robust_lasso(sub.y.view(), lambdas.0, lambdas.1, None, &cfg.solver)?;
    let op = closed_form_w(sub.a.view(), sub.theta, &cfg.debias)?;
    let dd = debias_delta(sub.y.view(), sub.a.view(), &op, &fit, sub.sigma_centered)?;
    let outcome = odrlt_test(&dd, cfg.alpha, cfg.sidedness)?;
    Ok(Pass { fit, outcome })
}

fn lambdas_for(sys: &CenteredSystem, rows: &[usize], cfg: &DetectorConfig) -> Result<(f64, f64)> {
    let sub = sys.select_rows(rows);
    cfg.lambda
        .resolve(sub.y.view(), sub.a.view(), sub.theta, sub.sigma_centered, &cfg.debias)
}

/// Iterative detection: flag on the full system, then keep testing the
/// unflagged remainder until it yields nothing new or `r_U` is reached.
/// When `|J|` overshoots `r_U` the strongest statistics are kept.
pub fn detect_mmes(sys: &CenteredSystem, cfg: &DetectorConfig) -> Result<DetectionResult> {
    let n = sys.n_prime();
    if cfg.r_upper >= n {
        return param(format!("r_U = {} must be below n' = {n}", cfg.r_upper));
    }
    let all: Vec<usize> = (0..n).collect();
    let first_lambdas = lambdas_for(sys, &all, cfg)?;
    let first = run_pass(sys, &all, first_lambdas, cfg)?;
    let mut stats = first.outcome.stats.clone();
    let mut pvalues = first.outcome.pvalues.clone();
    let mut flagged: Vec<usize> = first.outcome.rejected.clone();
    let mut clean: Option<(Vec<usize>, RobustFit)> = flagged.is_empty().then(|| (all.clone(), first.fit));
    let mut lambdas = first_lambdas;
    let mut iterations = 1;

    loop {
        if flagged.is_empty() || flagged.len() == cfg.r_upper {
            break;
        }
        if flagged.len() > cfg.r_upper {
            flagged.sort_by(|&i, &k| stats[k].total_cmp(&stats[i]).then(i.cmp(&k)));
            flagged.truncate(cfg.r_upper);
            break;
        }
        if iterations >= cfg.max_iterations {
            return Err(Error::DetectionLoopLimit(iterations));
        }
        flagged.sort_unstable();
        let rest: Vec<usize> = all.iter().copied().filter(|i| flagged.binary_search(i).is_err()).collect();
        if cfg.lambda.reselects() {
            lambdas = lambdas_for(sys, &rest, cfg)?;
        }
        let pass = match run_pass(sys, &rest, lambdas, cfg) {
            Ok(p) => p,
            // Too few rows remain for a valid debiasing matrix.
            Err(Error::InfeasibleRegime { .. }) => break,
            Err(e) => return Err(e),
        };
        iterations += 1;
        for (local, &global) in rest.iter().enumerate() {
            stats[global] = pass.outcome.stats[local];
            pvalues[global] = pass.outcome.pvalues[local];
        }
        if pass.outcome.rejected.is_empty() {
            clean = Some((rest, pass.fit));
            break;
        }
        flagged.extend(pass.outcome.rejected.iter().map(|&l| rest[l]));
    }
    flagged.sort_unstable();

    let rest: Vec<usize> = all.iter().copied().filter(|i| flagged.binary_search(i).is_err()).collect();
    let clean_fit = match clean {
        Some((rows, fit)) if rows == rest => fit,
        _ => {
            let sub = sys.select_rows(&rest);
            Design::new(sub.a.view()).robust_lasso(sub.y.view(), lambdas.0, lambdas.1, None, &cfg.solver)?
        }
    };
    Ok(DetectionResult {
        rows_b: sys.original_rows(&flagged),
        r_hat: flagged.len(),
        flagged,
        stats,
        pvalues,
        iterations,
        lambdas,
        clean_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::{center, gen_pooling, gen_signal};
    use ndarray::arr1;

    fn dd(delta_w: &[f64], sigma: &[f64]) -> DebiasedDelta {
        DebiasedDelta {
            delta_w: arr1(delta_w),
            sigma_diag: arr1(sigma),
        }
    }

    #[test]
    fn zero_statistics_reject_nothing() {
        let out = odrlt_test(&dd(&[0.0, 0.0, 0.0], &[1.0, 2.0, 0.5]), 0.05, Sidedness::TwoSided).unwrap();
        assert!(out.rejected.is_empty());
        assert!(out.pvalues.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn two_sided_threshold() {
        let out = odrlt_test(&dd(&[2.5, -1.0], &[1.0, 1.0]), 0.05, Sidedness::TwoSided).unwrap();
        assert_eq!(out.rejected, vec![0]);
        let reference = 2.0 * (1.0 - 0.993_790_334_674_223_7);
        assert!((out.pvalues[0] - reference).abs() < 1e-9, "{}", out.pvalues[0]);
        assert!((out.pvalues[0] - 0.01242).abs() < 1e-5);
    }

    #[test]
    fn one_sided_variant_uses_full_alpha() {
        let out = odrlt_test(&dd(&[1.8], &[1.0]), 0.05, Sidedness::OneSided).unwrap();
        assert_eq!(out.rejected, vec![0]);
        let out = odrlt_test(&dd(&[1.8], &[1.0]), 0.05, Sidedness::TwoSided).unwrap();
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn degenerate_variance_and_alpha() {
        assert_eq!(
            odrlt_test(&dd(&[1.0, 1.0], &[1.0, 0.0]), 0.05, Sidedness::TwoSided).unwrap_err(),
            Error::DegenerateVariance(1)
        );
        assert!(odrlt_test(&dd(&[1.0], &[1.0]), 1.0, Sidedness::TwoSided).is_err());
    }

    fn clean_system(seed: u64, sigma_tilde: f64) -> (CenteredSystem, Array1<f64>) {
        let pool = gen_pooling(80, 200, 0.5, seed).unwrap();
        let sig = gen_signal(200, 5, 100.0, 1000.0, seed).unwrap();
        let z = pool.b.dot(&sig.beta);
        (center(z.view(), &pool.b, 0.5, None, sigma_tilde).unwrap(), sig.beta)
    }

    #[test]
    fn noiseless_clean_system_flags_nothing() {
        let (sys, _) = clean_system(3, 1e-3);
        let mut cfg = DetectorConfig::new(8);
        cfg.lambda = LambdaStrategy::Fixed {
            lambda1: 1e-3,
            lambda2: 10.0,
        };
        let det = detect_mmes(&sys, &cfg).unwrap();
        assert!(det.flagged.is_empty(), "{:?}", det.flagged);
        assert_eq!(det.rows_b.len(), 0);
    }

    #[test]
    fn single_large_mme_is_flagged() {
        let (mut sys, _) = clean_system(4, 1.0);
        sys.y[0] += 5_000.0;
        let mut cfg = DetectorConfig::new(8);
        cfg.lambda = LambdaStrategy::Theory;
        let det = detect_mmes(&sys, &cfg).unwrap();
        assert!(det.flagged.contains(&0), "{:?}", det.flagged);
        assert_eq!(det.rows_b.len(), 2 * det.r_hat);
        assert!(det.r_hat <= cfg.r_upper);
    }

    #[test]
    fn overshoot_keeps_strongest() {
        let (mut sys, _) = clean_system(5, 1.0);
        let bumps = [9_000.0, 8_000.0, 7_000.0, 6_000.0, 5_000.0];
        for (k, b) in bumps.iter().enumerate() {
            sys.y[3 * k] += b;
        }
        let mut cfg = DetectorConfig::new(3);
        cfg.lambda = LambdaStrategy::Theory;
        let det = detect_mmes(&sys, &cfg).unwrap();
        assert_eq!(det.r_hat, 3);
        let mut order: Vec<usize> = (0..sys.n_prime()).collect();
        order.sort_by(|&i, &k| det.stats[k].total_cmp(&det.stats[i]));
        let mut top: Vec<usize> = order[..3].to_vec();
        top.sort_unstable();
        assert_eq!(det.flagged, top);
        assert_eq!(det.flagged, vec![0, 3, 6]);
    }

    #[test]
    fn r_upper_must_be_below_n_prime() {
        let (sys, _) = clean_system(6, 1.0);
        assert!(detect_mmes(&sys, &DetectorConfig::new(40)).is_err());
    }
}
