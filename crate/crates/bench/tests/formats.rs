//! Round-trip properties of the file formats.

use permucate::linalg::DesignMatrix;
use permucate::{Dataset, Method, RiskKind};
use permucate_bench::config::Experiment;
use permucate_bench::{parse_config, parse_dataset, parse_results, write_dataset, write_results, ResultRow};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE), Just(1e300), Just(-1e-300)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trip(
        n in 1usize..20,
        d in 1usize..5,
        vals in prop::collection::vec(finite(), 200),
        labels in prop::collection::vec(0u8..2, 20),
        with_tau in any::<bool>(),
    ) {
        let x = DesignMatrix::from_row_slice(n, d, &vals[..n * d]).unwrap();
        let y = vals[100..100 + n].to_vec();
        let data = Dataset::new(x, labels[..n].to_vec(), y).unwrap();
        let tau: Option<Vec<f64>> = with_tau.then(|| vals[150..150 + n].to_vec());
        let back = parse_dataset(&write_dataset(&data, tau.as_deref()).unwrap()).unwrap();
        prop_assert_eq!(back.data.x, data.x);
        prop_assert_eq!(back.data.a, data.a);
        prop_assert_eq!(back.data.y, data.y);
        prop_assert_eq!(back.tau_oracle, tau);
    }

    #[test]
    fn results_round_trip(
        psi in finite(),
        opt in prop::option::of(finite()),
        seed in 0usize..100,
        variable in 0usize..200,
        exp in 0usize..5,
        loco in any::<bool>(),
    ) {
        let row = ResultRow {
            experiment: Experiment::ALL[exp],
            dgp: "hl".into(),
            d: 50,
            n: 300,
            seed,
            fold: seed % 5,
            variable,
            method: if loco { Method::Loco } else { Method::Permucate },
            risk: RiskKind::RRisk,
            psi,
            wald: opt,
            p_value: opt.map(f64::abs),
            delta_beta: None,
            nu_var: opt,
            wall_time_ms: None,
        };
        let rows = vec![row.clone(), row];
        prop_assert_eq!(parse_results(&write_results(&rows)).unwrap(), rows);
    }

    #[test]
    fn config_never_panics(text in "[a-z_ =,.#0-9\n]{0,120}") {
        let _ = parse_config(&text);
    }

    #[test]
    fn config_seed_and_grid(seed in any::<u64>(), grid in prop::collection::btree_set(10usize..100_000, 1..6)) {
        let list = grid.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", ");
        let cfg = parse_config(&format!("master_seed = {seed}\nn_grid = {list}\n")).unwrap();
        prop_assert_eq!(cfg.master_seed, seed);
        prop_assert_eq!(cfg.n_grid, grid.into_iter().collect::<Vec<_>>());
    }
}
