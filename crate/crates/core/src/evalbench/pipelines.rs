//! The four estimators compared in the experiments.
//!
//! Every pipeline centers `(z, B)` in identity order, fits, and declares the
//! support by two-sided debiased-β z-tests. RL, MMER and CAPE test against
//! the plain residual `y − Aβ̂` of their own system; ODRLT tests the
//! Robust-Lasso fit with the estimated MMEs removed (`y − Aβ̂ − δ̂`) and
//! reports no real-valued estimate.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::corrector::{cape, CapeConfig, CapeOutcome, PermPool, DEFAULT_EPSILON, DEFAULT_MAX_STAGES};
use crate::debias::debias_beta;
use crate::detector::{detect_mmes, DetectorConfig, DEFAULT_ALPHA};
use crate::error::{param, Error, Result};
use crate::simkit::{center, CenteredSystem, MmeModel};
use crate::solver::{Design, RobustFit};
use crate::stats::normal_sf;

/// Noise level used when the measurements carry none, relative to the RMS
/// measurement. Keeps the regularization and the z-tests well defined.
pub const NOISELESS_SIGMA_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Rl,
    Mmer,
    Cape,
    Odrlt,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Rl, Estimator::Mmer, Estimator::Cape, Estimator::Odrlt];
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Rl => "RL",
            Estimator::Mmer => "MMER",
            Estimator::Cape => "CAPE",
            Estimator::Odrlt => "ODRLT",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RL" => Ok(Estimator::Rl),
            "MMER" => Ok(Estimator::Mmer),
            "CAPE" => Ok(Estimator::Cape),
            "ODRLT" => Ok(Estimator::Odrlt),
            other => param(format!("unknown estimator '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub model: MmeModel,
    /// Level of the per-coordinate support tests.
    pub support_alpha: f64,
    pub max_stages: usize,
    pub epsilon: f64,
    pub perm_pool: PermPool,
    /// Seed of the CAPE stage shuffles.
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(r_upper: usize, model: MmeModel, seed: u64) -> Self {
        Self {
            detector: DetectorConfig::new(r_upper),
            model,
            support_alpha: DEFAULT_ALPHA,
            max_stages: DEFAULT_MAX_STAGES,
            epsilon: DEFAULT_EPSILON,
            perm_pool: PermPool::default(),
            seed,
        }
    }

    fn cape_config(&self) -> CapeConfig {
        CapeConfig {
            detector: self.detector,
            epsilon: self.epsilon,
            max_stages: self.max_stages,
            seed: self.seed,
            perm_pool: self.perm_pool,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Aux {
    None,
    Detection { rows_b: Vec<usize>, r_hat: usize },
    Cape(Box<CapeOutcome>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub estimator: Estimator,
    /// `None` for ODRLT, which only makes support decisions.
    pub beta_hat: Option<Array1<f64>>,
    /// Declared defectives, increasing.
    pub declared: Vec<usize>,
    pub aux: Aux,
}

/// `σ̃`, or a tiny multiple of the RMS measurement when `σ̃ = 0`.
pub fn effective_sigma(z: ArrayView1<f64>, sigma_tilde: f64) -> f64 {
    if sigma_tilde > 0.0 {
        return sigma_tilde;
    }
    let rms = (z.dot(&z) / z.len().max(1) as f64).sqrt();
    (NOISELESS_SIGMA_FRACTION * rms).max(f64::MIN_POSITIVE)
}

/// Coordinates whose two-sided debiased z-test rejects at level `alpha`.
pub fn declared_support(
    y: ArrayView1<f64>,
    a: ArrayView2<f64>,
    beta_hat: ArrayView1<f64>,
    sigma: f64,
    alpha: f64,
) -> Result<Vec<usize>> {
    let db = debias_beta(y, a, beta_hat, sigma)?;
    Ok(db
        .z_scores()
        .iter()
        .enumerate()
        .filter(|(_, z)| 2.0 * normal_sf(z.abs()) < alpha)
        .map(|(j, _)| j)
        .collect())
}

fn full_fit(sys: &CenteredSystem, cfg: &PipelineConfig) -> Result<RobustFit> {
    let det = &cfg.detector;
    let (l1, l2) = det
        .lambda
        .resolve(sys.y.view(), sys.a.view(), sys.theta, sys.sigma_centered, &det.debias)?;
    Design::new(sys.a.view()).robust_lasso(sys.y.view(), l1, l2, None, &det.solver)
}

fn centered(z: ArrayView1<f64>, b: ArrayView2<f64>, theta: f64, sigma_tilde: f64) -> Result<CenteredSystem> {
    center(z, &b.to_owned(), theta, None, effective_sigma(z, sigma_tilde))
}

/// Robust Lasso on the full centered system.
pub fn pipeline_rl(z: ArrayView1<f64>, b: ArrayView2<f64>, theta: f64, sigma_tilde: f64, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let sys = centered(z, b, theta, sigma_tilde)?;
    let fit = full_fit(&sys, cfg)?;
    let declared = declared_support(sys.y.view(), sys.a.view(), fit.beta_hat.view(), sys.sigma_centered, cfg.support_alpha)?;
    Ok(PipelineOutput {
        estimator: Estimator::Rl,
        beta_hat: Some(fit.beta_hat),
        declared,
        aux: Aux::None,
    })
}

/// Detect, discard the flagged centered rows, and keep the fit on the rest.
pub fn pipeline_mmer(z: ArrayView1<f64>, b: ArrayView2<f64>, theta: f64, sigma_tilde: f64, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let sys = centered(z, b, theta, sigma_tilde)?;
    let det = detect_mmes(&sys, &cfg.detector)?;
    let sub = sys.select_rows(&det.unflagged());
    let beta = det.clean_fit.beta_hat;
    let declared = declared_support(sub.y.view(), sub.a.view(), beta.view(), sub.sigma_centered, cfg.support_alpha)?;
    Ok(PipelineOutput {
        estimator: Estimator::Mmer,
        beta_hat: Some(beta),
        declared,
        aux: Aux::Detection {
            rows_b: det.rows_b,
            r_hat: det.r_hat,
        },
    })
}

/// Multi-stage correction, then the Robust Lasso on the corrected design.
pub fn pipeline_cape(z: ArrayView1<f64>, b: ArrayView2<f64>, theta: f64, sigma_tilde: f64, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let sigma = effective_sigma(z, sigma_tilde);
    let out = cape(z, b, theta, cfg.model, sigma, &cfg.cape_config())?;
    let sys = &out.system;
    let beta = out.fit.beta_hat.clone();
    let declared = declared_support(sys.y.view(), sys.a.view(), beta.view(), sys.sigma_centered, cfg.support_alpha)?;
    Ok(PipelineOutput {
        estimator: Estimator::Cape,
        beta_hat: Some(beta),
        declared,
        aux: Aux::Cape(Box::new(out)),
    })
}

/// Support decisions from the debiased Robust-Lasso fit, MMEs removed.
pub fn pipeline_odrlt(z: ArrayView1<f64>, b: ArrayView2<f64>, theta: f64, sigma_tilde: f64, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let sys = centered(z, b, theta, sigma_tilde)?;
    let fit = full_fit(&sys, cfg)?;
    let cleaned = &sys.y - &fit.delta_hat;
    let declared = declared_support(cleaned.view(), sys.a.view(), fit.beta_hat.view(), sys.sigma_centered, cfg.support_alpha)?;
    Ok(PipelineOutput {
        estimator: Estimator::Odrlt,
        beta_hat: None,
        declared,
        aux: Aux::None,
    })
}

pub fn run_pipeline(
    estimator: Estimator,
    z: ArrayView1<f64>,
    b: ArrayView2<f64>,
    theta: f64,
    sigma_tilde: f64,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    match estimator {
        Estimator::Rl => pipeline_rl(z, b, theta, sigma_tilde, cfg),
        Estimator::Mmer => pipeline_mmer(z, b, theta, sigma_tilde, cfg),
        Estimator::Cape => pipeline_cape(z, b, theta, sigma_tilde, cfg),
        Estimator::Odrlt => pipeline_odrlt(z, b, theta, sigma_tilde, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::LambdaStrategy;
    use crate::simkit::{forward, gen_pooling, gen_signal, NoiseConfig};

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
        }
        assert!("LASSO".parse::<Estimator>().is_err());
    }

    #[test]
    fn effective_sigma_floor() {
        let z = ndarray::arr1(&[3.0, 4.0]);
        assert_eq!(effective_sigma(z.view(), 0.5), 0.5);
        let s = effective_sigma(z.view(), 0.0);
        assert!((s - NOISELESS_SIGMA_FRACTION * (12.5f64).sqrt()).abs() < 1e-18);
    }

    #[test]
    fn mmer_with_everything_flagged_uses_remaining_rows() {
        let pool = gen_pooling(40, 80, 0.5, 3).unwrap();
        let sig = gen_signal(80, 3, 100.0, 1000.0, 4).unwrap();
        let m = forward(&pool.b, &sig, NoiseConfig::Gaussian { f_sigma: 0.01 }, 5).unwrap();
        let mut cfg = PipelineConfig::new(4, MmeModel::Ssm, 6);
        cfg.detector.lambda = LambdaStrategy::Theory;
        // α = 1 rejects every index, so the cap binds
        cfg.detector.alpha = 0.999_999;
        let out = pipeline_mmer(m.z.view(), pool.b.view(), 0.5, m.sigma_tilde, &cfg).unwrap();
        let Aux::Detection { r_hat, rows_b } = out.aux else { panic!() };
        assert_eq!(r_hat, 4);
        assert_eq!(rows_b.len(), 8);
    }
}
