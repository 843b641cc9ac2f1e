//! Iterative MME detection, then the refit on the rows that survive.

use gtmme::detector::{detect_mmes, DetectorConfig, LambdaStrategy};
use gtmme::simkit::{center, forward, gen_pooling, gen_signal, inject_mmes, MmeModel, NoiseConfig};

fn main() -> gtmme::Result<()> {
    let (n, p, r) = (240, 300, 6);
    let pool = gen_pooling(n, p, 0.5, 21)?;
    let signal = gen_signal(p, 5, 100.0, 1000.0, 22)?;
    let inj = inject_mmes(&pool, &signal, MmeModel::Perm, r, 23, true)?;
    let meas = forward(&inj.b_tilde, &signal, NoiseConfig::Gaussian { f_sigma: 0.01 }, 24)?;
    let sys = center(meas.z.view(), &pool.b, 0.5, None, meas.sigma_tilde)?;

    let mut cfg = DetectorConfig::new(sys.n_prime() / 5);
    cfg.lambda = LambdaStrategy::Theory;
    let det = detect_mmes(&sys, &cfg)?;

    let mut truth = inj.rows();
    truth.sort_unstable();
    println!("true MME rows      {truth:?}");
    println!("flagged pair rows  {:?}", det.rows_b);
    let caught = truth.iter().filter(|r| det.rows_b.contains(r)).count();
    println!("{caught}/{} MME rows inside flagged pairs, r_hat {}, {} passes", truth.len(), det.r_hat, det.iterations);

    let fit = &det.clean_fit;
    let top: Vec<(usize, f64)> = signal.support.iter().map(|&j| (j, fit.beta_hat[j])).collect();
    println!("refit on {} rows, beta on the true support {top:.1?}", det.unflagged().len());
    Ok(())
}
