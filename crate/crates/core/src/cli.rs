//! Command-line front end: `simulate`, `sweep` and `verify-w`.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or configuration
//! error, 3 infeasible instance generation. Human-readable numbers use six
//! significant digits; CSV files carry full precision.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::corrector::{write_decision_log, PermPool};
use crate::debias::{closed_form_w, verify_constraints, DebiasConfig, Radii, RadiusSet};
use crate::error::{Error, Result};
use crate::evalbench::{
    aggregate_csv, plot_data, run_experiment, simulate_trial, stage_table_csv, trace_csv, trials_csv, Aux,
    ExperimentConfig, ExperimentReport, LambdaPolicy, NoiseModel, Setting,
};
use crate::numfmt::{full, short};
use crate::rng::derive_seed;
use crate::simkit::{bernoulli_design, center, write_binary_matrix, write_records, MmeModel, DEFAULT_PCR_Q};
use crate::solver::LambdaGrid;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Overrides the output directory.
pub const ENV_OUT_DIR: &str = "GTMME_OUT_DIR";
/// Overrides the worker count.
pub const ENV_WORKERS: &str = "GTMME_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "gtmme", version, about = "Pooled-testing MME detection and correction experiments")]
struct Cli {
    /// Repeat for more progress output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One end-to-end trial with a full trace of every intermediate.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A named experiment setting.
    Sweep {
        #[arg(long)]
        setting: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
        /// SSM, ASM or PERM. MULTISTAGE runs all three when omitted.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Optional TOML file; command-line flags win over it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Leave the runtime column empty so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
    /// Closed-form debiasing matrix constraint report over random designs.
    VerifyW {
        /// Rows of the centered design.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `plain` or `h-scaled`.
        #[arg(long, default_value = "plain")]
        radii: String,
        #[arg(long, default_value_t = 2.0)]
        c_mu: f64,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    setting: Option<String>,
    sweep: Option<String>,
    sweep_values: Option<Vec<f64>>,
    p: Option<usize>,
    n: Option<usize>,
    f_sp: Option<f64>,
    f_adv: Option<f64>,
    r: Option<usize>,
    f_sigma: Option<f64>,
    theta: Option<f64>,
    model: Option<String>,
    zeta: Option<f64>,
    /// `gaussian` or `lognormal`.
    noise: Option<String>,
    q: Option<f64>,
    trials: Option<usize>,
    seed: Option<u64>,
    estimators: Option<Vec<String>>,
    /// `theory`, `grid-once` or `grid`.
    lambda: Option<String>,
    alpha: Option<f64>,
    max_stages: Option<usize>,
    epsilon: Option<f64>,
    /// `flagged` or `all`.
    perm_pool: Option<String>,
    signal_low: Option<f64>,
    signal_high: Option<f64>,
    record_timing: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    out: Option<PathBuf>,
    workers: Option<usize>,
    verbosity: Option<u8>,
}

/// Everything a command needs: the experiment plus artifact plumbing.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub verbosity: u8,
    pub config_path: Option<PathBuf>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))
}

fn apply_section(base: Option<Setting>, s: &ExperimentSection) -> Result<ExperimentConfig> {
    let setting = match &s.setting {
        Some(name) => name.parse()?,
        None => base.unwrap_or(Setting::Ea),
    };
    let mut c = ExperimentConfig::for_setting(setting);
    if let Some(v) = &s.sweep {
        c.sweep = v.parse()?;
    }
    macro_rules! copy {
        ($($f:ident),*) => {$(if let Some(v) = s.$f.clone() { c.$f = v; })*};
    }
    copy!(sweep_values, p, n, f_sp, f_adv, f_sigma, theta, zeta, trials, seed, alpha, max_stages, epsilon);
    copy!(signal_low, signal_high, record_timing);
    if s.r.is_some() {
        c.r = s.r;
    }
    if let Some(m) = &s.model {
        c.model = m.parse().map_err(|e: Error| cfg_err(e.to_string()))?;
    }
    if let Some(list) = &s.estimators {
        c.estimators = list.iter().map(|e| e.parse()).collect::<Result<_>>().map_err(|e| cfg_err(e.to_string()))?;
    }
    let q = s.q.unwrap_or(DEFAULT_PCR_Q);
    match s.noise.as_deref() {
        None => {
            if let NoiseModel::LognormalPcr { .. } = c.noise {
                c.noise = NoiseModel::LognormalPcr { q };
            }
        }
        Some("gaussian") => c.noise = NoiseModel::Gaussian,
        Some("lognormal") => c.noise = NoiseModel::LognormalPcr { q },
        Some(other) => return Err(cfg_err(format!("unknown noise model '{other}'"))),
    }
    c.lambda = match s.lambda.as_deref() {
        None => c.lambda,
        Some("theory") => LambdaPolicy::Theory,
        Some("grid-once") => LambdaPolicy::GridOnce(LambdaGrid::default()),
        Some("grid") => LambdaPolicy::GridEveryFit(LambdaGrid::default()),
        Some(other) => return Err(cfg_err(format!("unknown lambda policy '{other}'"))),
    };
    c.perm_pool = match s.perm_pool.as_deref() {
        None => c.perm_pool,
        Some("flagged") => PermPool::Flagged,
        Some("all") => PermPool::AllRows,
        Some(other) => return Err(cfg_err(format!("unknown perm pool '{other}'"))),
    };
    c.validate()?;
    Ok(c)
}

fn env_workers() -> Result<Option<usize>> {
    match std::env::var(ENV_WORKERS) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| cfg_err(format!("{ENV_WORKERS}={v} is not a worker count"))),
        Err(_) => Ok(None),
    }
}

/// Flags beat the environment, which beats the config file.
fn resolve_run(
    experiment: ExperimentConfig,
    file: &RunSection,
    out_flag: Option<PathBuf>,
    workers_flag: Option<usize>,
    verbosity: u8,
    config_path: Option<PathBuf>,
) -> Result<RunConfig> {
    let out_dir = out_flag
        .or_else(|| std::env::var_os(ENV_OUT_DIR).map(PathBuf::from))
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("gtmme-out"));
    let workers = match workers_flag {
        Some(w) => w,
        None => env_workers()?.or(file.workers).unwrap_or(1),
    };
    if workers == 0 {
        return Err(cfg_err("worker count must be at least 1"));
    }
    Ok(RunConfig {
        experiment,
        out_dir,
        workers,
        verbosity: verbosity.max(file.verbosity.unwrap_or(0)),
        config_path,
    })
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Io(_) => EXIT_USAGE,
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        _ => EXIT_NUMERICAL,
    }
}

/// Single funnel for every artifact written by a command.
struct Writer {
    root: PathBuf,
}

impl Writer {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| cfg_err(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn put(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, contents).map_err(|e| cfg_err(format!("cannot write {}: {e}", path.display())))
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| cfg_err(e.to_string()))
}

fn cmd_simulate(config: &Path, seed: Option<u64>, out: Option<PathBuf>, verbose: u8, stdout: &mut dyn Write) -> Result<i32> {
    let file = read_file_config(config)?;
    let mut exp = apply_section(None, &file.experiment)?;
    if let Some(s) = seed {
        exp.seed = s;
    }
    let run = resolve_run(exp, &file.run, out, None, verbose, Some(config.to_path_buf()))?;
    let trace = thread_pool(run.workers)?.install(|| simulate_trial(&run.experiment))?;
    let w = Writer::new(&run.out_dir)?;

    w.put("B.txt", &write_binary_matrix(&trace.b))?;
    w.put("B_tilde.txt", &write_binary_matrix(&trace.b_tilde))?;
    w.put("mmes.csv", &write_records(&trace.records))?;
    let mut beta = String::from("index,value\n");
    for &j in &trace.beta.support {
        beta.push_str(&format!("{j},{}\n", full(trace.beta.beta[j])));
    }
    w.put("beta.csv", &beta)?;
    let mut z = String::from("row,z\n");
    for (i, v) in trace.measurements.z.iter().enumerate() {
        z.push_str(&format!("{i},{}\n", full(*v)));
    }
    w.put("z.csv", &z)?;

    let mut metrics = String::from("estimator,sensitivity,specificity,rrmse,error\n");
    let mut failed = false;
    writeln!(stdout, "n={} p={} s={} r={} r_U={} sigma={}", trace.instance.n, trace.instance.p, trace.instance.s, trace.instance.r, trace.instance.r_upper, short(trace.measurements.sigma_tilde))?;
    for (est, res) in &trace.outputs {
        match res {
            Ok(out) => {
                let (sens, spec, err) = trace.metrics(out);
                metrics.push_str(&format!("{est},{},{},{},\n", full(sens), full(spec), err.map(full).unwrap_or_default()));
                writeln!(
                    stdout,
                    "{est:<6} sensitivity {} specificity {} rrmse {}",
                    short(sens),
                    short(spec),
                    err.map(short).unwrap_or_else(|| "-".into())
                )?;
                match &out.aux {
                    Aux::Cape(c) => {
                        let mut stages = String::from("stage,r_hat,f_ape,flagged_rows\n");
                        for st in &c.stages {
                            let rows: Vec<String> = st.flagged_rows.iter().map(|r| r.to_string()).collect();
                            stages.push_str(&format!("{},{},{},{}\n", st.stage, st.r_hat, full(st.f_ape), rows.join(";")));
                        }
                        w.put("cape_stages.csv", &stages)?;
                        w.put("B_hat.txt", &write_binary_matrix(&c.correction.b_hat))?;
                        w.put("decisions.csv", &write_decision_log(&c.correction.decisions))?;
                        if let Some(e) = &c.aborted {
                            writeln!(stdout, "CAPE stage loop stopped early: {e}")?;
                        }
                    }
                    Aux::Detection { rows_b, .. } => {
                        let rows: Vec<String> = rows_b.iter().map(|r| r.to_string()).collect();
                        w.put("mmer_flagged_rows.txt", &(rows.join("\n") + "\n"))?;
                    }
                    Aux::None => {}
                }
            }
            Err(e) => {
                failed = true;
                metrics.push_str(&format!("{est},,,,{}\n", e.to_string().replace(',', ";")));
                writeln!(stdout, "{est:<6} failed: {e}")?;
            }
        }
    }
    w.put("metrics.csv", &metrics)?;
    Ok(if failed { EXIT_NUMERICAL } else { EXIT_OK })
}

fn write_report(w: &Writer, prefix: &str, rep: &ExperimentReport) -> Result<()> {
    w.put(&format!("{prefix}/trials.csv"), &trials_csv(rep))?;
    w.put(&format!("{prefix}/aggregate.csv"), &aggregate_csv(rep))?;
    for (name, body) in plot_data(rep) {
        w.put(&format!("{prefix}/plot/{name}"), &body)?;
    }
    match rep.config.setting {
        Setting::Multistage => w.put(&format!("{prefix}/stages.csv"), &stage_table_csv(rep))?,
        Setting::Convergence => w.put(&format!("{prefix}/trace.csv"), &trace_csv(rep))?,
        _ => {}
    }
    Ok(())
}

fn print_summary(rep: &ExperimentReport, stdout: &mut dyn Write) -> Result<()> {
    let c = &rep.config;
    writeln!(stdout, "{} {} ({} trials)", c.setting, c.model, c.trials)?;
    writeln!(stdout, "{:>10} {:>6} {:>11} {:>11} {:>11} {:>6}", c.sweep.name(), "est", "sens", "spec", "rrmse", "failed")?;
    for r in &rep.rows {
        writeln!(
            stdout,
            "{:>10} {:>6} {:>11} {:>11} {:>11} {:>6}",
            short(r.sweep_value),
            r.estimator.to_string(),
            short(r.sensitivity),
            short(r.specificity),
            r.rrmse.map(short).unwrap_or_else(|| "-".into()),
            r.failed
        )?;
    }
    if c.setting == Setting::Multistage {
        for &v in &c.sweep_values {
            writeln!(stdout, "{:>6} {:>8} {:>8} {:>8}", "stage", "N_E", "N_EF", "N_ET")?;
            for s in rep.stage_summary(v) {
                writeln!(stdout, "{:>6} {:>8} {:>8} {:>8}", s.stage, short(s.n_e), short(s.n_ef), short(s.n_et))?;
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    setting: &str,
    trials: Option<usize>,
    theta: Option<f64>,
    model: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    config: Option<PathBuf>,
    no_timing: bool,
    verbose: u8,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let setting: Setting = setting.parse()?;
    let file = match &config {
        Some(p) => read_file_config(p)?,
        None => FileConfig::default(),
    };
    let mut section = file.experiment;
    section.setting = Some(setting.to_string());
    let mut exp = apply_section(Some(setting), &section)?;
    if let Some(t) = trials {
        exp.trials = t;
    }
    if let Some(t) = theta {
        exp.theta = t;
    }
    if let Some(s) = seed {
        exp.seed = s;
    }
    if no_timing {
        exp.record_timing = false;
    }
    let models: Vec<MmeModel> = match model {
        Some(m) => vec![m.parse().map_err(|e: Error| cfg_err(e.to_string()))?],
        None if setting == Setting::Multistage && section.model.is_none() => MmeModel::ALL.to_vec(),
        None => vec![exp.model],
    };
    exp.validate()?;
    let run = resolve_run(exp, &file.run, out, workers, verbose, config)?;
    let pool = thread_pool(run.workers)?;
    let w = Writer::new(&run.out_dir)?;
    let mut failures = 0;
    for m in models {
        let mut cfg = run.experiment.clone();
        cfg.model = m;
        if run.verbosity > 0 {
            eprintln!("running {} {} with {} worker(s)", cfg.setting, m, run.workers);
        }
        let rep = pool.install(|| run_experiment(&cfg))?;
        failures += rep.rows.iter().map(|r| r.failed).sum::<usize>();
        write_report(&w, &format!("{}/{}", cfg.setting, m), &rep)?;
        print_summary(&rep, stdout)?;
    }
    if failures > 0 {
        writeln!(stdout, "{failures} trial(s) failed; see the empty rows of trials.csv")?;
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(n: usize, p: usize, theta: f64, seeds: usize, seed: u64, radii: &str, c_mu: f64, stdout: &mut dyn Write) -> Result<i32> {
    if n == 0 || p == 0 || seeds == 0 {
        return Err(cfg_err("n, p and seeds must be positive"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(cfg_err(format!("theta must lie in (0,1), got {theta}")));
    }
    let cfg = DebiasConfig {
        c_mu,
        radii: match radii {
            "plain" => Radii::Plain,
            "h-scaled" => Radii::HScaled,
            other => return Err(cfg_err(format!("unknown radii '{other}'"))),
        },
        ..DebiasConfig::default()
    };
    let rs = RadiusSet::new(n, p, theta, &cfg);
    writeln!(stdout, "n'={n} p={p} theta={} c0={} mu1={} mu2={} mu3={}", short(theta), short(rs.c0), short(rs.mu1), short(rs.mu2), short(rs.mu3))?;
    let mut passes = [0usize; 5];
    let mut feasible = 0;
    for k in 0..seeds {
        let b = bernoulli_design(2 * n, p, theta, derive_seed(seed, &[k as u64]))?;
        let sys = center(ndarray::Array1::zeros(2 * n).view(), &b, theta, None, 0.0)?;
        let op = match closed_form_w(sys.a.view(), theta, &cfg) {
            Ok(op) => op,
            Err(Error::InfeasibleRegime { mu3 }) => {
                writeln!(stdout, "seed {k}: infeasible, mu3 = {} >= 1", short(mu3))?;
                continue;
            }
            Err(Error::DegenerateRow(i)) => {
                writeln!(stdout, "seed {k}: centered row {i} is zero")?;
                continue;
            }
            Err(e) => return Err(e),
        };
        feasible += 1;
        let rep = verify_constraints(op.w.view(), sys.a.view(), theta, &cfg)?;
        let checks = [rep.c0, rep.c1, rep.c2, rep.c3];
        for (slot, c) in passes.iter_mut().zip(checks.iter()) {
            *slot += c.pass as usize;
        }
        passes[4] += rep.all_pass() as usize;
        let mark = |b: bool| if b { "pass" } else { "FAIL" };
        writeln!(
            stdout,
            "seed {k}: C0 {} {} C1 {} {} C2 {} {} C3 {} {} tau {}",
            short(rep.c0.lhs),
            mark(rep.c0.pass),
            short(rep.c1.lhs),
            mark(rep.c1.pass),
            short(rep.c2.lhs),
            mark(rep.c2.pass),
            short(rep.c3.lhs),
            mark(rep.c3.pass),
            short(op.tau)
        )?;
    }
    let rate = |k: usize| short(k as f64 / seeds as f64);
    writeln!(
        stdout,
        "pass rates over {seeds} seeds: C0 {} C1 {} C2 {} C3 {} all {} (infeasible {})",
        rate(passes[0]),
        rate(passes[1]),
        rate(passes[2]),
        rate(passes[3]),
        rate(passes[4]),
        seeds - feasible
    )?;
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command, returning the
/// exit code. Reports go to `stdout`, errors to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Simulate { config, seed, out } => cmd_simulate(&config, seed, out, verbose, stdout),
        Command::Sweep {
            setting,
            trials,
            theta,
            model,
            seed,
            out,
            workers,
            config,
            no_timing,
        } => cmd_sweep(&setting, trials, theta, model.as_deref(), seed, out, workers, config, no_timing, verbose, stdout),
        Command::VerifyW {
            n,
            p,
            theta,
            seeds,
            seed,
            radii,
            c_mu,
        } => cmd_verify(n, p, theta, seeds, seed, &radii, c_mu, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbench::{Estimator, SweepVar};

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        let (code, _, err) = run_str(&["gtmme", "simulate", "--config", "/nonexistent/run.toml"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("/nonexistent/run.toml"), "{err}");
    }

    #[test]
    fn unknown_setting_is_a_usage_error() {
        let (code, _, err) = run_str(&["gtmme", "sweep", "--setting", "EE"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("EE"));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(run_str(&["gtmme", "frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["gtmme", "verify-w", "--n", "4"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["gtmme", "--help"]).0, EXIT_OK);
    }

    #[test]
    fn verify_reports_infeasible_regime() {
        let (code, out, _) = run_str(&["gtmme", "verify-w", "--n", "40", "--p", "10", "--theta", "0.5", "--seeds", "2"]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out.matches("infeasible, mu3").count(), 2, "{out}");
    }

    #[test]
    fn config_sections_override_setting_defaults() {
        let f: FileConfig = toml::from_str(
            "[experiment]\nsetting = \"EC\"\nn = 60\nmodel = \"asm\"\nlambda = \"grid-once\"\nepsilon = -inf\n[run]\nworkers = 3\n",
        )
        .unwrap();
        let c = apply_section(None, &f.experiment).unwrap();
        assert_eq!((c.setting, c.sweep, c.n, c.model), (Setting::Ec, SweepVar::FSigma, 60, MmeModel::Asm));
        assert!(matches!(c.lambda, LambdaPolicy::GridOnce(_)));
        assert_eq!(c.epsilon, f64::NEG_INFINITY);
        assert_eq!(f.run.workers, Some(3));
        assert!(toml::from_str::<FileConfig>("[experiment]\nbogus = 1\n").is_err());
        let bad: FileConfig = toml::from_str("[experiment]\ntheta = 1.5\n").unwrap();
        assert!(matches!(apply_section(None, &bad.experiment), Err(Error::Config(_))));
    }

    #[test]
    fn estimator_list_parses() {
        let f: FileConfig = toml::from_str("[experiment]\nestimators = [\"rl\", \"CAPE\"]\n").unwrap();
        let c = apply_section(None, &f.experiment).unwrap();
        assert_eq!(c.estimators, vec![Estimator::Rl, Estimator::Cape]);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Infeasible { attempts: 1, reason: "x".into() }), EXIT_INFEASIBLE);
        assert_eq!(exit_code(&Error::NonConvergence { iterations: 1, kkt_gap: 1.0 }), EXIT_NUMERICAL);
    }
}
