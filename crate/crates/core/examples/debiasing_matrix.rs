//! The closed-form debiasing matrix: its constraint report on random designs
//! and the standardized MME statistics it yields.

use gtmme::debias::{closed_form_w, debias_delta, verify_constraints, DebiasConfig};
use gtmme::simkit::{center, forward, gen_pooling, gen_signal, inject_mmes, MmeModel, NoiseConfig};
use gtmme::solver::{robust_lasso, theory_lambdas};

fn main() -> gtmme::Result<()> {
    let cfg = DebiasConfig::default();

    let pool = gen_pooling(80, 400, 0.5, 5)?;
    let z0 = ndarray::Array1::zeros(80);
    let a = center(z0.view(), &pool.b, 0.5, None, 0.0)?.a;
    let op = closed_form_w(a.view(), 0.5, &cfg)?;
    let rep = verify_constraints(op.w.view(), a.view(), 0.5, &cfg)?;
    for (name, c) in [("C0", rep.c0), ("C1", rep.c1), ("C2", rep.c2), ("C3", rep.c3)] {
        println!("{name} {:.4} <= {:.4} {}", c.lhs, c.radius, if c.pass { "ok" } else { "violated" });
    }
    println!("tau {:.4}, closed form optimal: {}", op.tau, op.tau_feasible);

    let (n, p) = (200, 300);
    let pool = gen_pooling(n, p, 0.5, 6)?;
    let signal = gen_signal(p, 5, 100.0, 1000.0, 7)?;
    let inj = inject_mmes(&pool, &signal, MmeModel::Ssm, 6, 8, true)?;
    let meas = forward(&inj.b_tilde, &signal, NoiseConfig::Gaussian { f_sigma: 0.01 }, 9)?;
    let sys = center(meas.z.view(), &pool.b, 0.5, None, meas.sigma_tilde)?;
    let (l1, l2) = theory_lambdas(sys.sigma_centered, p, sys.n_prime(), 0);
    let fit = robust_lasso(sys.y.view(), sys.a.view(), l1, l2)?;
    let op = closed_form_w(sys.a.view(), 0.5, &cfg)?;
    let t = debias_delta(sys.y.view(), sys.a.view(), &op, &fit, sys.sigma_centered)?.standardized();

    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&i, &k| t[k].abs().total_cmp(&t[i].abs()));
    let bad = inj.rows();
    println!("\nlargest |T_i| (centered row, original pair, statistic):");
    for &i in &order[..8] {
        let pair = sys.original_rows(&[i]);
        let hit = pair.iter().any(|r| bad.contains(r));
        println!("  {i:>3} {pair:?} {:>8.2}{}", t[i], if hit { "  <- MME" } else { "" });
    }
    Ok(())
}
