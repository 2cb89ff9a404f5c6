//! Future information must never reach a feature row, and every split keeps
//! training targets strictly before evaluation targets.

mod support;

use proptest::prelude::*;
use steamflood_core::features::build_matrix;
use support::leakage::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn steam_outside_lag_window_is_invisible(p in pad(14), cfg in config(), pick in any::<prop::sample::Index>(), noise in prop::collection::vec(0.0f64..500.0, 64)) {
        steam_case(&p, cfg, pick, &noise)?;
    }

    #[test]
    fn production_fields_after_decision_day_are_invisible(p in pad(14), cfg in config(), pick in any::<prop::sample::Index>(), seed in any::<u64>()) {
        production_case(&p, cfg, pick, seed)?;
    }

    #[test]
    fn identical_inputs_give_identical_matrices(p in pad(14), cfg in config()) {
        let (steam, prod) = tables(&p);
        let a = build_matrix(&steam, &prod, cfg).unwrap();
        let b = build_matrix(&steam, &prod, cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        prop_assert_eq!(ca, cb);
        let width = cfg.t * N_INFILL + cfg.k + usize::from(cfg.include_oil_lags) * cfg.k + 1 + N_PROD + 2;
        prop_assert_eq!(a.spec.names.len(), width);
    }

    #[test]
    fn splits_order_targets_strictly(p in pad(30), t in 1usize..=4, k in 1usize..=4, n_folds in 1usize..=5, frac in 0.5f64..0.95) {
        splits_case(&p, t, k, n_folds, frac)?;
    }
}
