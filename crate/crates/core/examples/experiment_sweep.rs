//! A reduced EA sweep run through the experiment harness, printed as the
//! aggregate table and the gnuplot file list a full run would write.

use gtmme::evalbench::{aggregate_csv, plot_data, run_experiment, ExperimentConfig, Setting};

fn main() -> gtmme::Result<()> {
    let mut cfg = ExperimentConfig::for_setting(Setting::Ea);
    cfg.sweep_values = vec![0.02, 0.06, 0.1];
    cfg.trials = 3;
    cfg.record_timing = false;
    let report = run_experiment(&cfg)?;

    for row in &report.rows {
        println!(
            "f_adv {:<5} {:<6} sens {:.3} spec {:.3} rrmse {}",
            row.sweep_value,
            row.estimator.to_string(),
            row.sensitivity,
            row.specificity,
            row.rrmse.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
        );
    }
    println!("\n{}", aggregate_csv(&report).lines().next().unwrap());
    for (name, _) in plot_data(&report) {
        println!("  {name}");
    }
    Ok(())
}
