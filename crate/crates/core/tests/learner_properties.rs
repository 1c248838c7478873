use permucate::dgp::sample_hp;
use permucate::learners::{
    expand_polynomial, fit_classifier, fit_gbt, fit_regressor, fit_stacked, GbtLoss, LearnerSpec, PolynomialMap,
};
use permucate::{DesignMatrix, DgpSpec};
use proptest::prelude::*;

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / a.len() as f64
}

#[test]
fn stacking_is_no_worse_than_its_bases_on_hp() {
    let data = sample_hp(&DgpSpec::hp(10, 3), 1000, 1).unwrap();
    let train: Vec<usize> = (0..800).collect();
    let test: Vec<usize> = (800..1000).collect();
    let (xtr, xte) = (data.x.select_rows(&train), data.x.select_rows(&test));
    let ytr: Vec<f64> = train.iter().map(|&i| data.y[i]).collect();
    let yte: Vec<f64> = test.iter().map(|&i| data.y[i]).collect();
    let bases = vec![LearnerSpec::gbt_regress(), LearnerSpec::ridge_cv()];
    let stacked = fit_stacked(&xtr, &ytr, &bases, 0).unwrap();
    let stacked_mse = mse(&stacked.predict(&xte).unwrap(), &yte);
    let best = bases
        .iter()
        .map(|s| mse(&fit_regressor(&xtr, &ytr, s, 0).unwrap().predict(&xte).unwrap(), &yte))
        .fold(f64::INFINITY, f64::min);
    assert!(stacked_mse <= 1.1 * best, "stacked {stacked_mse} vs best base {best}");
}

#[test]
fn cubic_expansion_of_ten_inputs() {
    let map = PolynomialMap::new(10, 3, true).unwrap();
    assert_eq!(map.output_dim(), 285);
    let x = DesignMatrix::from_rows(&[vec![1.0; 10]]).unwrap();
    assert_eq!(expand_polynomial(&x, &map).unwrap().ncols(), 285);
}

#[test]
fn fits_do_not_depend_on_thread_count() {
    let data = sample_hp(&DgpSpec::hp(6, 3), 300, 2).unwrap();
    let spec = LearnerSpec::stacked(vec![LearnerSpec::gbt_regress().with_rounds(20), LearnerSpec::ridge_cv()]);
    let fit = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit_regressor(&data.x, &data.y, &spec, 5).unwrap().predict(&data.x).unwrap())
    };
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(fit(1)), bits(fit(4)));
}

fn rows(flat: &[f64], d: usize) -> DesignMatrix {
    DesignMatrix::from_row_slice(flat.len() / d, d, flat).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn probabilities_stay_clipped(
        flat in prop::collection::vec(-50.0f64..50.0, 40..120),
        labels in prop::collection::vec(0u8..2, 20..60),
        kind in 0usize..2,
    ) {
        let d = 2;
        let n = (flat.len() / d).min(labels.len());
        let x = rows(&flat[..n * d], d);
        let mut a = labels[..n].to_vec();
        a[0] = 0;
        a[1] = 1;
        let spec = if kind == 0 { LearnerSpec::logistic_cv().with_penalty(1e-3) } else { LearnerSpec::gbt_classify().with_rounds(10) };
        let model = fit_classifier(&x, &a, &spec, 0).unwrap();
        let far = rows(&[1e6, -1e6, -1e6, 1e6, 0.0, 0.0], d);
        for p in model.predict_proba(&x).unwrap().into_iter().chain(model.predict_proba(&far).unwrap()) {
            prop_assert!((0.01..=0.99).contains(&p), "{}", p);
        }
    }

    #[test]
    fn boosting_loss_is_monotone(
        flat in prop::collection::vec(-3.0f64..3.0, 60..150),
        target in prop::collection::vec(-3.0f64..3.0, 30..50),
    ) {
        let d = 3;
        let n = (flat.len() / d).min(target.len());
        let x = rows(&flat[..n * d], d);
        let spec = LearnerSpec::gbt_regress().with_rounds(15);
        let m = fit_gbt(&x, &target[..n], &spec, GbtLoss::Squared, 0).unwrap();
        prop_assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let labels: Vec<f64> = target[..n].iter().map(|&t| f64::from(t > 0.0)).collect();
        prop_assume!(labels.contains(&0.0) && labels.contains(&1.0));
        let m = fit_gbt(&x, &labels, &LearnerSpec::gbt_classify().with_rounds(15), GbtLoss::Logistic, 0).unwrap();
        prop_assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
