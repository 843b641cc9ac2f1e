//! CSV and plot-data serialization of experiment reports.

use super::experiment::{ExperimentReport, MetricsRow, StageSummary};
use crate::numfmt::full;

pub const TRIAL_HEADER: &str = "setting,sweep_name,sweep_value,estimator,trial,sensitivity,specificity,rrmse,runtime_ms,seed";

pub const AGGREGATE_HEADER: &str = "setting,sweep_name,sweep_value,estimator,trials,failed,sensitivity_mean,sensitivity_std,specificity_mean,specificity_std,rrmse_mean,rrmse_std,runtime_ms_mean";

fn opt(v: Option<f64>) -> String {
    v.map(full).unwrap_or_default()
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        full(v)
    }
}

/// One line per (sweep value, trial, estimator); failed trials leave the
/// metric fields empty.
pub fn trials_csv(rep: &ExperimentReport) -> String {
    let c = &rep.config;
    let mut out = String::from(TRIAL_HEADER);
    out.push('\n');
    for t in &rep.trials {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            c.setting,
            c.sweep.name(),
            full(t.sweep_value),
            t.estimator,
            t.trial,
            opt(t.sensitivity),
            opt(t.specificity),
            opt(t.rrmse),
            opt(t.runtime_ms),
            t.seed
        ));
    }
    out
}

pub fn aggregate_csv(rep: &ExperimentReport) -> String {
    let c = &rep.config;
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in &rep.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.setting,
            c.sweep.name(),
            full(r.sweep_value),
            r.estimator,
            r.trials,
            r.failed,
            num(r.sensitivity),
            num(r.sensitivity_std),
            num(r.specificity),
            num(r.specificity_std),
            opt(r.rrmse),
            opt(r.rrmse_std),
            opt(r.runtime_ms)
        ));
    }
    out
}

/// `(file name, contents)` pairs: two whitespace-separated columns
/// (sweep value, mean) per estimator and metric.
pub fn plot_data(rep: &ExperimentReport) -> Vec<(String, String)> {
    let c = &rep.config;
    let metrics: [(&str, fn(&MetricsRow) -> Option<f64>); 3] = [
        ("sensitivity", |r| Some(r.sensitivity)),
        ("specificity", |r| Some(r.specificity)),
        ("rrmse", |r| r.rrmse),
    ];
    let mut files = Vec::new();
    for &est in &c.estimators {
        for (name, get) in metrics {
            let rows: Vec<&MetricsRow> = rep.rows.iter().filter(|r| r.estimator == est).collect();
            if rows.iter().all(|r| get(r).is_none()) {
                continue;
            }
            let mut body = format!("# {} {} {}\n# {} mean\n", c.setting, est, name, c.sweep.name());
            for r in rows {
                if let Some(v) = get(r).filter(|v| !v.is_nan()) {
                    body.push_str(&format!("{} {}\n", full(r.sweep_value), full(v)));
                }
            }
            files.push((format!("{}_{}_{}.dat", c.setting, est, name), body));
        }
    }
    files
}

pub fn stage_table_csv(rep: &ExperimentReport) -> String {
    let mut out = String::from("model,sweep_value,stage,n_e,n_ef,n_et\n");
    for &v in &rep.config.sweep_values {
        for StageSummary { stage, n_e, n_ef, n_et } in rep.stage_summary(v) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rep.config.model,
                full(v),
                stage,
                full(n_e),
                full(n_ef),
                full(n_et)
            ));
        }
    }
    out
}

/// Stopping-function values with their natural logarithm.
pub fn trace_csv(rep: &ExperimentReport) -> String {
    let mut out = format!("{},trial,stage,f_ape,ln_f_ape\n", rep.config.sweep.name());
    for t in &rep.traces {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            full(t.sweep_value),
            t.trial,
            t.stage,
            full(t.f_ape),
            full(t.f_ape.ln())
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbench::experiment::{run_experiment, ExperimentConfig, Setting};
    use crate::evalbench::pipelines::Estimator;

    fn small() -> ExperimentReport {
        let mut c = ExperimentConfig::for_setting(Setting::Ea);
        c.sweep_values = vec![0.02];
        c.trials = 2;
        c.estimators = vec![Estimator::Rl, Estimator::Odrlt];
        c.record_timing = false;
        run_experiment(&c).unwrap()
    }

    #[test]
    fn trial_csv_shape() {
        let rep = small();
        let csv = trials_csv(&rep);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRIAL_HEADER);
        assert_eq!(lines.len(), 1 + 4);
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), 10);
            assert!(l.starts_with("EA,f_adv,2.0000000000000000e-2,"));
        }
        // ODRLT has no rrmse and timing is off
        let odrlt = lines.iter().find(|l| l.contains(",ODRLT,")).unwrap();
        let f: Vec<&str> = odrlt.split(',').collect();
        assert_eq!((f[7], f[8]), ("", ""));
    }

    #[test]
    fn aggregate_and_plot_files() {
        let rep = small();
        assert_eq!(aggregate_csv(&rep).lines().count(), 3);
        let names: Vec<String> = plot_data(&rep).into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"EA_RL_rrmse.dat".to_string()));
        assert!(!names.contains(&"EA_ODRLT_rrmse.dat".to_string()));
        assert_eq!(names.len(), 5);
    }
}
