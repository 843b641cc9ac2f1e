use gtmme::corrector::f_ape;
use gtmme::debias::{closed_form_w, DebiasConfig};
use gtmme::evalbench::sens_spec;
use gtmme::simkit::{
    center, gen_pooling, gen_signal, inject_mmes, parse_binary_matrix, parse_records, write_binary_matrix, write_records, MmeModel,
};
use proptest::prelude::*;

fn sorted_rows(b: &ndarray::Array2<f64>) -> Vec<Vec<u8>> {
    let mut rows: Vec<Vec<u8>> = b.rows().into_iter().map(|r| r.iter().map(|&v| v as u8).collect()).collect();
    rows.sort();
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn centering_commutes_with_the_forward_model(seed in 0u64..10_000, theta in 0.1f64..0.9, n in 6usize..30) {
        let p = n + 10;
        let pool = gen_pooling(n, p, theta, seed).unwrap();
        let sig = gen_signal(p, 3, 1.0, 10.0, seed + 1).unwrap();
        let z = pool.b.dot(&sig.beta);
        let sys = center(z.view(), &pool.b, theta, None, 0.0).unwrap();
        let gap = (&sys.y - &sys.a.dot(&sig.beta)).mapv(f64::abs).fold(0.0, |m: f64, &v| m.max(v));
        prop_assert!(gap < 1e-9 * (1.0 + z.mapv(f64::abs).sum()));
    }

    #[test]
    fn injections_touch_exactly_r_rows(seed in 0u64..10_000, half in 1usize..5) {
        let (n, p, r) = (40, 60, 2 * half);
        let pool = gen_pooling(n, p, 0.5, seed).unwrap();
        let sig = gen_signal(p, 6, 100.0, 1000.0, seed + 1).unwrap();
        for model in MmeModel::ALL {
            let inj = inject_mmes(&pool, &sig, model, r, seed + 2, true).unwrap();
            let changed: Vec<usize> = (0..n).filter(|&i| inj.b_tilde.row(i) != pool.b.row(i)).collect();
            prop_assert_eq!(changed.len(), r);
            for rec in &inj.records {
                let d = (&inj.b_tilde.row(rec.row) - &pool.b.row(rec.row)).dot(&sig.beta);
                prop_assert!((d - rec.delta_tilde).abs() < 1e-9 && d != 0.0);
            }
            if model == MmeModel::Perm {
                prop_assert_eq!(sorted_rows(&inj.b_tilde), sorted_rows(&pool.b));
            }
        }
    }

    #[test]
    fn stopping_function_vanishes_on_consistent_data(seed in 0u64..10_000) {
        let pool = gen_pooling(20, 30, 0.5, seed).unwrap();
        let sig = gen_signal(30, 4, 100.0, 1000.0, seed + 1).unwrap();
        let z = pool.b.dot(&sig.beta);
        prop_assert_eq!(f_ape(z.view(), pool.b.view(), sig.beta.view()), 0.0);
        let shifted = &z + 1.0;
        prop_assert!((f_ape(shifted.view(), pool.b.view(), sig.beta.view()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn closed_form_diagonal_is_constant(seed in 0u64..10_000, n in 20usize..60) {
        let pool = gen_pooling(2 * n, 400, 0.5, seed).unwrap();
        let a = center(ndarray::Array1::zeros(2 * n).view(), &pool.b, 0.5, None, 0.0).unwrap().a;
        if let Ok(op) = closed_form_w(a.view(), 0.5, &DebiasConfig::default()) {
            for i in 0..n {
                prop_assert!((op.m[[i, i]] - (1.0 - op.mu3())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn text_formats_round_trip(seed in 0u64..10_000) {
        let pool = gen_pooling(12, 20, 0.3, seed).unwrap();
        prop_assert_eq!(parse_binary_matrix(&write_binary_matrix(&pool.b)).unwrap(), pool.b.clone());
        let sig = gen_signal(20, 3, 100.0, 1000.0, seed + 1).unwrap();
        let inj = inject_mmes(&pool, &sig, MmeModel::Asm, 3, seed + 2, true).unwrap();
        prop_assert_eq!(parse_records(&write_records(&inj.records)).unwrap(), inj.records);
    }

    #[test]
    fn sensitivity_and_specificity_are_rates(truth in proptest::collection::btree_set(0usize..30, 0..30), said in proptest::collection::btree_set(0usize..30, 0..30)) {
        let t: Vec<usize> = truth.into_iter().collect();
        let d: Vec<usize> = said.into_iter().collect();
        let (sens, spec) = sens_spec(&t, &d, 30);
        prop_assert!((0.0..=1.0).contains(&sens) && (0.0..=1.0).contains(&spec));
        prop_assert_eq!(sens_spec(&t, &t, 30), (1.0, 1.0));
    }
}
