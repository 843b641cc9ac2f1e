//! Build a pooling design, a sparse viral-load vector, corrupt a few rows of
//! the design under each MME model, and look at what the lab would measure.
//!
//! ```text
//! cargo run --release --example pooling_and_mmes
//! ```

use gtmme::simkit::{center, forward, gen_pooling, gen_signal, inject_mmes, MmeModel, NoiseConfig};

fn main() -> gtmme::Result<()> {
    let (n, p, s, r) = (60, 150, 6, 4);
    let pool = gen_pooling(n, p, 0.5, 11)?;
    let signal = gen_signal(p, s, 100.0, 1000.0, 12)?;
    println!("{n} pools over {p} samples, defectives at {:?}", signal.support);

    for model in MmeModel::ALL {
        let inj = inject_mmes(&pool, &signal, model, r, 13, true)?;
        let changed = (0..n).filter(|&i| inj.b_tilde.row(i) != pool.b.row(i)).count();
        println!("\n{model}: {changed} rows of B differ from the intended design");
        for rec in &inj.records {
            println!("  row {:>2} detail {:>3} delta {:>9.2}", rec.row, rec.detail, rec.delta_tilde);
        }
    }

    let inj = inject_mmes(&pool, &signal, MmeModel::Ssm, r, 13, true)?;
    let meas = forward(&inj.b_tilde, &signal, NoiseConfig::Gaussian { f_sigma: 0.01 }, 14)?;
    println!("\nnoise sd {:.3}, first measurements {:.1?}", meas.sigma_tilde, &meas.z.as_slice().unwrap()[..5]);

    // pair differencing removes the nonzero mean of the Bernoulli design
    let sys = center(meas.z.view(), &pool.b, 0.5, None, meas.sigma_tilde)?;
    println!(
        "centered system: {} x {}, entries in {{-h, 0, h}} with h = {}, sd {:.3}",
        sys.n_prime(),
        sys.p(),
        sys.h,
        sys.sigma_centered
    );
    Ok(())
}
