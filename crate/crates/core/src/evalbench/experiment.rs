//! Seeded simulation sweeps over the estimator pipelines.
//!
//! Seeding follows the data-generation protocol: the pooling matrix is drawn
//! once per experiment (once per sweep value when `n` varies), the signal
//! once (once per sweep value when the sparsity varies), the injected MMEs
//! once per sweep value, and the noise once per trial.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use super::metrics::{rrmse, sens_spec};
use super::pipelines::{run_pipeline, Aux, Estimator, PipelineConfig, PipelineOutput};
use crate::corrector::{PermPool, DEFAULT_EPSILON, DEFAULT_MAX_STAGES};
use crate::detector::{LambdaStrategy, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::simkit::{
    center, forward, gen_pooling, gen_signal, inject_mmes, MeasurementSet, MmeModel, MmeRecord, NoiseConfig, SignalVector,
    DEFAULT_PCR_Q,
};
use crate::solver::LambdaGrid;
use crate::stats::{mean, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    Ea,
    Eb,
    Ec,
    Ed,
    Zeta,
    LogSigma,
    LogN,
    Multistage,
    Convergence,
}

impl Setting {
    pub const ALL: [Setting; 9] = [
        Setting::Ea,
        Setting::Eb,
        Setting::Ec,
        Setting::Ed,
        Setting::Zeta,
        Setting::LogSigma,
        Setting::LogN,
        Setting::Multistage,
        Setting::Convergence,
    ];
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Ea => "EA",
            Setting::Eb => "EB",
            Setting::Ec => "EC",
            Setting::Ed => "ED",
            Setting::Zeta => "ZETA",
            Setting::LogSigma => "LOG_SIGMA",
            Setting::LogN => "LOG_N",
            Setting::Multistage => "MULTISTAGE",
            Setting::Convergence => "CONVERGENCE",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Setting::ALL
            .into_iter()
            .find(|k| k.to_string() == up)
            .ok_or_else(|| Error::Config(format!("unknown setting '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepVar {
    FAdv,
    N,
    FSigma,
    FSp,
    /// `ζ = f_adv` with `r_U = r`.
    Zeta,
    /// Absolute MME count.
    R,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::FAdv => "f_adv",
            SweepVar::N => "n",
            SweepVar::FSigma => "f_sigma",
            SweepVar::FSp => "f_sp",
            SweepVar::Zeta => "zeta",
            SweepVar::R => "r",
        }
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepVar::FAdv, SweepVar::N, SweepVar::FSigma, SweepVar::FSp, SweepVar::Zeta, SweepVar::R]
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown sweep variable '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian,
    LognormalPcr { q: f64 },
}

/// How the pipelines of one trial choose `(λ1, λ2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    /// Theory values on whatever rows are being fitted.
    Theory,
    /// Grid search once on the full centered system, then reused everywhere.
    GridOnce(LambdaGrid),
    /// Grid search on every fit.
    GridEveryFit(LambdaGrid),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub sweep: SweepVar,
    pub sweep_values: Vec<f64>,
    pub p: usize,
    pub n: usize,
    pub f_sp: f64,
    pub f_adv: f64,
    /// Fixed MME count overriding `f_adv`.
    pub r: Option<usize>,
    pub f_sigma: f64,
    pub theta: f64,
    pub model: MmeModel,
    /// `r_U = round(ζ n)`, unless the sweep matches it to `r`.
    pub zeta: f64,
    pub noise: NoiseModel,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub lambda: LambdaPolicy,
    pub alpha: f64,
    pub max_stages: usize,
    pub epsilon: f64,
    pub perm_pool: PermPool,
    pub signal_low: f64,
    pub signal_high: f64,
    /// Wall-clock runtimes make the per-trial CSV non-reproducible; without
    /// them the runtime column is left empty.
    pub record_timing: bool,
}

fn steps(first: f64, step: f64, count: usize) -> Vec<f64> {
    // integer multiples keep the printed values clean
    (0..count).map(|k| ((first + k as f64 * step) * 1e9).round() / 1e9).collect()
}

impl ExperimentConfig {
    /// Defaults of a named setting.
    pub fn for_setting(setting: Setting) -> Self {
        let mut c = ExperimentConfig {
            setting,
            sweep: SweepVar::FAdv,
            sweep_values: steps(0.02, 0.02, 5),
            p: 200,
            n: 80,
            f_sp: 0.05,
            f_adv: 0.02,
            r: None,
            f_sigma: 0.01,
            theta: 0.5,
            model: MmeModel::Ssm,
            zeta: 0.2,
            noise: NoiseModel::Gaussian,
            trials: 25,
            seed: 2024,
            estimators: Estimator::ALL.to_vec(),
            lambda: LambdaPolicy::Theory,
            alpha: DEFAULT_ALPHA,
            max_stages: DEFAULT_MAX_STAGES,
            epsilon: DEFAULT_EPSILON,
            perm_pool: PermPool::default(),
            signal_low: 100.0,
            signal_high: 1000.0,
            record_timing: true,
        };
        match setting {
            Setting::Ea => {}
            Setting::Eb => {
                c.sweep = SweepVar::N;
                c.sweep_values = steps(50.0, 10.0, 5);
            }
            Setting::Ec => {
                c.sweep = SweepVar::FSigma;
                c.sweep_values = steps(0.01, 0.01, 5);
                c.f_adv = 0.01;
            }
            Setting::Ed => {
                c.sweep = SweepVar::FSp;
                c.sweep_values = steps(0.01, 0.03, 3);
                c.f_adv = 0.01;
            }
            Setting::Zeta => {
                c.sweep = SweepVar::Zeta;
                c.sweep_values = steps(0.02, 0.02, 15);
                c.theta = 0.1;
            }
            Setting::LogSigma | Setting::LogN => {
                c.p = 500;
                c.n = 400;
                c.f_sp = 10.0 / 500.0;
                c.r = Some(8);
                c.model = MmeModel::Perm;
                c.noise = NoiseModel::LognormalPcr { q: DEFAULT_PCR_Q };
                c.estimators = vec![Estimator::Rl, Estimator::Mmer, Estimator::Cape];
                if setting == Setting::LogSigma {
                    c.sweep = SweepVar::FSigma;
                    c.sweep_values = steps(0.002, 0.002, 5);
                } else {
                    c.sweep = SweepVar::N;
                    c.sweep_values = steps(250.0, 50.0, 5);
                    c.f_sigma = 0.01;
                }
            }
            Setting::Multistage => {
                c.sweep = SweepVar::R;
                c.sweep_values = vec![4.0];
                c.n = 100;
                c.f_sp = 5.0 / 200.0;
                c.trials = 20;
                c.estimators = vec![Estimator::Cape];
            }
            Setting::Convergence => {
                c.sweep = SweepVar::R;
                c.sweep_values = steps(0.0, 2.0, 6);
                c.model = MmeModel::Perm;
                c.trials = 1;
                c.epsilon = f64::NEG_INFINITY;
                c.estimators = vec![Estimator::Cape];
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sweep_values.is_empty() {
            return bad("no sweep values".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return bad("no estimators".into());
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta must lie in (0,1), got {}", self.theta));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0,1), got {}", self.alpha));
        }
        if self.max_stages == 0 {
            return bad("max_stages must be at least 1".into());
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad(format!("zeta must lie in (0,1), got {}", self.zeta));
        }
        if !(self.signal_low > 0.0 && self.signal_low < self.signal_high) {
            return bad("signal range must satisfy 0 < low < high".into());
        }
        for &v in &self.sweep_values {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("sweep value {v} is not a nonnegative number"));
            }
        }
        Ok(())
    }

    /// Resolved instance parameters at one sweep value.
    pub fn instance(&self, value: f64) -> Instance {
        let mut n = self.n;
        let mut f_adv = self.f_adv;
        let mut f_sp = self.f_sp;
        let mut f_sigma = self.f_sigma;
        let mut fixed_r = None;
        let mut matched = false;
        match self.sweep {
            SweepVar::FAdv => f_adv = value,
            SweepVar::N => n = value.round() as usize,
            SweepVar::FSigma => f_sigma = value,
            SweepVar::FSp => f_sp = value,
            SweepVar::Zeta => {
                f_adv = value;
                matched = true;
            }
            SweepVar::R => fixed_r = Some(value.round() as usize),
        }
        let s = ((f_sp * self.p as f64).round() as usize).max(1);
        let r = fixed_r.or(self.r).unwrap_or_else(|| mme_count(f_adv, n, self.model));
        let n_prime = n / 2;
        let cap = n_prime.saturating_sub(1);
        let r_upper = if matched { r } else { (self.zeta * n as f64).round() as usize }.min(cap);
        Instance {
            n,
            p: self.p,
            s,
            r,
            f_sigma,
            r_upper,
        }
    }
}

/// `round(f_adv n)`; permutation errors come in pairs, so PERM rounds to
/// an even count of at least 2 whenever `f_adv > 0`.
pub fn mme_count(f_adv: f64, n: usize, model: MmeModel) -> usize {
    let raw = f_adv * n as f64;
    match model {
        MmeModel::Perm if f_adv > 0.0 => (2.0 * (raw / 2.0).round()).max(2.0) as usize,
        _ => raw.round() as usize,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instance {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub r: usize,
    pub f_sigma: f64,
    pub r_upper: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub sweep_value: f64,
    pub estimator: Estimator,
    pub trial: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub rrmse: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub estimator: Estimator,
    pub sweep_value: f64,
    pub sensitivity: f64,
    pub sensitivity_std: f64,
    pub specificity: f64,
    pub specificity_std: f64,
    pub rrmse: Option<f64>,
    pub rrmse_std: Option<f64>,
    /// Successful trials.
    pub trials: usize,
    pub failed: usize,
    pub runtime_ms: Option<f64>,
}

/// Per-stage error counts of one CAPE run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageCounts {
    pub sweep_value: f64,
    pub trial: usize,
    pub stage: usize,
    /// Rows of `B̂` still differing from `B̃` when the stage starts.
    pub n_e: usize,
    /// Flagged rows that were already correct.
    pub n_ef: usize,
    /// Flagged rows that still carried an MME.
    pub n_et: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSummary {
    pub stage: usize,
    pub n_e: f64,
    pub n_ef: f64,
    pub n_et: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub sweep_value: f64,
    pub trial: usize,
    /// 0 is the uncorrected input.
    pub stage: usize,
    pub f_ape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    pub rows: Vec<MetricsRow>,
    pub stages: Vec<StageCounts>,
    pub traces: Vec<TracePoint>,
}

impl ExperimentReport {
    /// Stage-wise means of the CAPE counts over trials at one sweep value.
    pub fn stage_summary(&self, sweep_value: f64) -> Vec<StageSummary> {
        let mut out = Vec::new();
        for stage in 1..=self.config.max_stages {
            let rows: Vec<&StageCounts> = self
                .stages
                .iter()
                .filter(|c| c.stage == stage && c.sweep_value == sweep_value)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let k = rows.len() as f64;
            out.push(StageSummary {
                stage,
                n_e: rows.iter().map(|c| c.n_e as f64).sum::<f64>() / k,
                n_ef: rows.iter().map(|c| c.n_ef as f64).sum::<f64>() / k,
                n_et: rows.iter().map(|c| c.n_et as f64).sum::<f64>() / k,
            });
        }
        out
    }
}

struct Generated {
    b: Array2<f64>,
    b_tilde: Array2<f64>,
    beta: SignalVector,
    records: Vec<MmeRecord>,
}

fn generate(cfg: &ExperimentConfig, vi: usize, inst: &Instance) -> Result<Generated> {
    if inst.n < 4 || inst.p <= inst.n {
        return Err(Error::Config(format!("instance needs 4 <= n < p, got n = {}, p = {}", inst.n, inst.p)));
    }
    let s = cfg.seed;
    let matrix_seed = if cfg.sweep == SweepVar::N { derive_seed(s, &[1, vi as u64]) } else { derive_seed(s, &[1]) };
    let signal_seed = if cfg.sweep == SweepVar::FSp { derive_seed(s, &[2, vi as u64]) } else { derive_seed(s, &[2]) };
    let pool = gen_pooling(inst.n, inst.p, cfg.theta, matrix_seed)?;
    let beta = gen_signal(inst.p, inst.s, cfg.signal_low, cfg.signal_high, signal_seed)?;
    let inj = inject_mmes(&pool, &beta, cfg.model, inst.r, derive_seed(s, &[3, vi as u64]), true)?;
    Ok(Generated {
        b: pool.b,
        b_tilde: inj.b_tilde,
        beta,
        records: inj.records,
    })
}

/// Noise seed of a trial. The convergence study keeps the noise fixed
/// across MME counts.
fn noise_seed(cfg: &ExperimentConfig, vi: usize, trial: usize) -> u64 {
    let vi = if cfg.setting == Setting::Convergence { 0 } else { vi as u64 };
    derive_seed(cfg.seed, &[4, vi, trial as u64])
}

fn noise_config(cfg: &ExperimentConfig, f_sigma: f64) -> NoiseConfig {
    match cfg.noise {
        NoiseModel::Gaussian => NoiseConfig::Gaussian { f_sigma },
        NoiseModel::LognormalPcr { q } => NoiseConfig::LognormalPcr { q, f_sigma },
    }
}

struct TrialOutput {
    records: Vec<TrialRecord>,
    stages: Vec<StageCounts>,
    traces: Vec<TracePoint>,
}

fn pipeline_config(cfg: &ExperimentConfig, inst: &Instance, cape_seed: u64) -> PipelineConfig {
    let mut pc = PipelineConfig::new(inst.r_upper, cfg.model, cape_seed);
    pc.detector.alpha = cfg.alpha;
    pc.detector.lambda = match cfg.lambda {
        LambdaPolicy::Theory => LambdaStrategy::Theory,
        LambdaPolicy::GridOnce(grid) | LambdaPolicy::GridEveryFit(grid) => LambdaStrategy::Grid { grid, reselect: true },
    };
    pc.support_alpha = cfg.alpha;
    pc.max_stages = cfg.max_stages;
    pc.epsilon = cfg.epsilon;
    pc.perm_pool = cfg.perm_pool;
    pc
}

fn trial_pipeline_config(
    cfg: &ExperimentConfig,
    inst: &Instance,
    vi: usize,
    trial: usize,
    b: &Array2<f64>,
    m: &MeasurementSet,
) -> Result<PipelineConfig> {
    let mut pc = pipeline_config(cfg, inst, derive_seed(cfg.seed, &[5, vi as u64, trial as u64]));
    if let LambdaPolicy::GridOnce(_) = cfg.lambda {
        let sigma = super::pipelines::effective_sigma(m.z.view(), m.sigma_tilde);
        let sys = center(m.z.view(), b, cfg.theta, None, sigma)?;
        let (lambda1, lambda2) =
            pc.detector
                .lambda
                .resolve(sys.y.view(), sys.a.view(), cfg.theta, sys.sigma_centered, &pc.detector.debias)?;
        pc.detector.lambda = LambdaStrategy::Fixed { lambda1, lambda2 };
    }
    Ok(pc)
}

fn rows_differing(a: &Array2<f64>, b: &Array2<f64>) -> Vec<usize> {
    (0..a.nrows()).filter(|&i| a.row(i) != b.row(i)).collect()
}

fn run_trial(cfg: &ExperimentConfig, vi: usize, value: f64, inst: &Instance, gen: &Generated, trial: usize) -> Result<TrialOutput> {
    let seed = noise_seed(cfg, vi, trial);
    let m = forward(&gen.b_tilde, &gen.beta, noise_config(cfg, inst.f_sigma), seed)?;
    let pc = trial_pipeline_config(cfg, inst, vi, trial, &gen.b, &m)?;

    let mut out = TrialOutput {
        records: Vec::new(),
        stages: Vec::new(),
        traces: Vec::new(),
    };
    for &est in &cfg.estimators {
        let started = Instant::now();
        let result = run_pipeline(est, m.z.view(), gen.b.view(), cfg.theta, m.sigma_tilde, &pc);
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        let mut rec = TrialRecord {
            sweep_value: value,
            estimator: est,
            trial,
            sensitivity: None,
            specificity: None,
            rrmse: None,
            runtime_ms: cfg.record_timing.then_some(elapsed),
            seed,
            error: None,
        };
        match result {
            Ok(res) => {
                let (sens, spec) = sens_spec(&gen.beta.support, &res.declared, inst.p);
                rec.sensitivity = Some(sens);
                rec.specificity = Some(spec);
                rec.rrmse = match &res.beta_hat {
                    Some(b) => Some(rrmse(gen.beta.beta.view(), b.view())?),
                    None => None,
                };
                if let Aux::Cape(c) = &res.aux {
                    for st in &c.stages {
                        let wrong = rows_differing(&st.b_hat_start, &gen.b_tilde);
                        let n_et = st.flagged_rows.iter().filter(|i| wrong.binary_search(i).is_ok()).count();
                        out.stages.push(StageCounts {
                            sweep_value: value,
                            trial,
                            stage: st.stage,
                            n_e: wrong.len(),
                            n_ef: st.flagged_rows.len() - n_et,
                            n_et,
                        });
                    }
                    // stages after an early stop see the final design, unflagged
                    let final_wrong = rows_differing(&c.correction.b_hat, &gen.b_tilde).len();
                    for stage in c.stages.len() + 1..=cfg.max_stages {
                        out.stages.push(StageCounts {
                            sweep_value: value,
                            trial,
                            stage,
                            n_e: final_wrong,
                            n_ef: 0,
                            n_et: 0,
                        });
                    }
                    let trace = std::iter::once(c.correction.f_ape_initial).chain(c.correction.f_ape_trace.iter().copied());
                    out.traces.extend(trace.enumerate().map(|(stage, f_ape)| TracePoint {
                        sweep_value: value,
                        trial,
                        stage,
                        f_ape,
                    }));
                }
            }
            Err(e) => rec.error = Some(e.to_string()),
        }
        out.records.push(rec);
    }
    Ok(out)
}

fn aggregate(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for &value in &cfg.sweep_values {
        for &est in &cfg.estimators {
            let mine: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.sweep_value == value && r.estimator == est)
                .collect();
            let ok: Vec<&&TrialRecord> = mine.iter().filter(|r| r.error.is_none()).collect();
            let pick = |f: fn(&TrialRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            let sens = pick(|r| r.sensitivity);
            let spec = pick(|r| r.specificity);
            let err = pick(|r| r.rrmse);
            let rt = pick(|r| r.runtime_ms);
            let opt = |v: &[f64], g: fn(&[f64]) -> f64| (!v.is_empty()).then(|| g(v));
            rows.push(MetricsRow {
                estimator: est,
                sweep_value: value,
                sensitivity: opt(&sens, mean).unwrap_or(f64::NAN),
                sensitivity_std: opt(&sens, std_dev).unwrap_or(f64::NAN),
                specificity: opt(&spec, mean).unwrap_or(f64::NAN),
                specificity_std: opt(&spec, std_dev).unwrap_or(f64::NAN),
                rrmse: opt(&err, mean),
                rrmse_std: opt(&err, std_dev),
                trials: ok.len(),
                failed: mine.len() - ok.len(),
                runtime_ms: opt(&rt, mean),
            });
        }
    }
    rows
}

/// Everything produced by one end-to-end trial.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub instance: Instance,
    pub sweep_value: f64,
    pub b: Array2<f64>,
    pub b_tilde: Array2<f64>,
    pub beta: SignalVector,
    pub records: Vec<MmeRecord>,
    pub measurements: MeasurementSet,
    pub noise_seed: u64,
    pub outputs: Vec<(Estimator, Result<PipelineOutput>)>,
}

impl SimulationTrace {
    /// `(sensitivity, specificity, rrmse)` of one successful pipeline.
    pub fn metrics(&self, out: &PipelineOutput) -> (f64, f64, Option<f64>) {
        let (sens, spec) = sens_spec(&self.beta.support, &out.declared, self.instance.p);
        let err = out.beta_hat.as_ref().and_then(|b| rrmse(self.beta.beta.view(), b.view()).ok());
        (sens, spec, err)
    }
}

/// Trial 0 at the first sweep value, seeded exactly as in [`run_experiment`].
pub fn simulate_trial(cfg: &ExperimentConfig) -> Result<SimulationTrace> {
    cfg.validate()?;
    let value = cfg.sweep_values[0];
    let inst = cfg.instance(value);
    let gen = generate(cfg, 0, &inst)?;
    let seed = noise_seed(cfg, 0, 0);
    let m = forward(&gen.b_tilde, &gen.beta, noise_config(cfg, inst.f_sigma), seed)?;
    let pc = trial_pipeline_config(cfg, &inst, 0, 0, &gen.b, &m)?;
    let outputs = cfg
        .estimators
        .iter()
        .map(|&e| (e, run_pipeline(e, m.z.view(), gen.b.view(), cfg.theta, m.sigma_tilde, &pc)))
        .collect();
    Ok(SimulationTrace {
        instance: inst,
        sweep_value: value,
        b: gen.b,
        b_tilde: gen.b_tilde,
        beta: gen.beta,
        records: gen.records,
        measurements: m,
        noise_seed: seed,
        outputs,
    })
}

/// Runs every sweep value and trial on the current rayon pool.
///
/// Generation failures (for instance an MME count the adversarial injector
/// cannot realize) abort the experiment; pipeline failures are recorded in
/// the affected trial only.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    let mut generated = Vec::new();
    for (vi, &value) in cfg.sweep_values.iter().enumerate() {
        let inst = cfg.instance(value);
        generated.push((inst, generate(cfg, vi, &inst)?));
        jobs.extend((0..cfg.trials).map(|t| (vi, t)));
    }
    let results: Vec<Result<TrialOutput>> = jobs
        .par_iter()
        .map(|&(vi, t)| {
            let (inst, gen) = &generated[vi];
            run_trial(cfg, vi, cfg.sweep_values[vi], inst, gen, t)
        })
        .collect();

    let mut trials = Vec::new();
    let mut stages = Vec::new();
    let mut traces = Vec::new();
    for r in results {
        let r = r?;
        trials.extend(r.records);
        stages.extend(r.stages);
        traces.extend(r.traces);
    }
    let rows = aggregate(cfg, &trials);
    Ok(ExperimentReport {
        config: cfg.clone(),
        trials,
        rows,
        stages,
        traces,
    })
}
