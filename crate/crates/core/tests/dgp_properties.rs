use permucate::dgp::{build_oracle, oracle_eval, sample, sample_hl, sample_hp, sample_ld, OracleQuantity};
use permucate::learners::PolynomialMap;
use permucate::stats::{correlation, mean, variance};
use permucate::{DesignMatrix, DgpSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn expit(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[test]
fn ld_correlation_matrix() {
    let data = sample_ld(50_000, 11).unwrap();
    for j in 0..6 {
        for k in (j + 1)..6 {
            let want = if j / 2 == k / 2 { 0.5 } else { 0.0 };
            let got = correlation(&data.x.column(j), &data.x.column(k));
            assert!((got - want).abs() < 0.02, "corr(x{}, x{}) = {got}", j + 1, k + 1);
        }
    }
}

#[test]
fn hl_common_correlation() {
    let spec = DgpSpec::hl(8, 3);
    let data = sample_hl(&spec, 50_000, 3).unwrap();
    for j in 0..8 {
        for k in (j + 1)..8 {
            let got = correlation(&data.x.column(j), &data.x.column(k));
            assert!((got - spec.rho).abs() < 0.02, "corr(x{}, x{}) = {got}", j + 1, k + 1);
        }
    }
}

#[test]
fn ld_mean_propensity_matches_independent_integration() {
    // Independent Monte-Carlo under the stated law: (X1, X2) a correlated pair, X5 free.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let m = 400_000;
    let mut acc = 0.0;
    for _ in 0..m {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let x5: f64 = StandardNormal.sample(&mut rng);
        let x2 = 0.5 * z1 + 0.75f64.sqrt() * z2;
        acc += expit(-0.4 * z1 + 0.1 * z1 * x2 + 0.25 * x5);
    }
    let reference = acc / m as f64;
    let data = sample_ld(50_000, 5).unwrap();
    let got = mean(&oracle_eval(&data, OracleQuantity::Pi).unwrap());
    // E[eta] = 0.1 E[X1 X2] = 0.05 puts the mean slightly above one half
    assert!((reference - 0.5111).abs() < 0.002, "reference {reference}");
    assert!((got - reference).abs() < 0.01, "sampled {got} vs integrated {reference}");
}

#[test]
fn ld_oracle_rows() {
    let mut data = sample_ld(2, 0).unwrap();
    data.x = DesignMatrix::from_rows(&[vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0], vec![0.0; 6]]).unwrap();
    assert_eq!(oracle_eval(&data, OracleQuantity::Tau).unwrap(), vec![4.0, 0.0]);
    assert_eq!(oracle_eval(&data, OracleQuantity::Pi).unwrap()[1], 0.5);
}

#[test]
fn hl_coefficients_are_sparse_signs() {
    for seed_coeffs in 0..5 {
        let spec = DgpSpec {
            seed_coeffs,
            ..DgpSpec::hl(30, 6)
        };
        let o = build_oracle(&spec).unwrap();
        for (link, set) in [
            (&o.tau_link, &o.important.tau),
            (&o.mu0_link, &o.important.mu0),
            (&o.pi_link, &o.important.pi),
        ] {
            assert_eq!(set.len(), 6);
            let beta = link.linear_coefficients(30);
            for (j, b) in beta.iter().enumerate() {
                if set.contains(&j) {
                    assert!(*b == 1.0 || *b == -1.0, "coefficient {b}");
                } else {
                    assert_eq!(*b, 0.0);
                }
            }
        }
    }
}

#[test]
fn hp_monomials_stay_inside_their_sets() {
    let spec = DgpSpec::hp(12, 4);
    let o = build_oracle(&spec).unwrap();
    let count = PolynomialMap::new(4, 3, true).unwrap().output_dim();
    for (link, set) in [(&o.pi_link, &o.important.pi), (&o.tau_link, &o.important.tau)] {
        assert_eq!(link.terms.len(), count);
        for (m, c) in &link.terms {
            assert!(m.iter().all(|j| set.contains(j)), "{m:?} outside {set:?}");
            assert!(c.abs() == 1.0);
        }
        // any monomial touching an index outside the set has no weight
        let outside = (0..12).find(|j| !set.contains(j)).unwrap();
        assert_eq!(link.coefficient(&[set[0], set[0], outside]), 0.0);
        assert_eq!(link.coefficient(&[outside]), 0.0);
    }
}

#[test]
fn hp_zero_quantile_subtracts_minimum_propensity() {
    let base = DgpSpec::hp(10, 3);
    let zero = DgpSpec {
        treat_quantile: 0.0,
        ..base.clone()
    };
    let d0 = sample_hp(&zero, 5000, 9).unwrap();
    let d1 = sample_hp(&base, 5000, 9).unwrap();
    let (o0, o1) = (d0.oracle().unwrap(), d1.oracle().unwrap());
    let raw = o0.pi_unshifted(&d0.x);
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(o0.pi_shift, min);
    assert!(o0.pi_shift <= o1.pi_shift);
    // same covariates and uniforms: the smaller shift never lowers a propensity
    assert_eq!(d0.x.matrix(), d1.x.matrix());
    let (p0, p1) = (o0.pi(&d0.x), o1.pi(&d1.x));
    assert!(p0.iter().zip(&p1).all(|(a, b)| a >= b));
    assert!(d0.treated_count() >= d1.treated_count());
}

#[test]
fn hp_full_effect_without_noise_is_exact_on_treated() {
    let spec = DgpSpec {
        effect_size: 1.0,
        noise_sd: 0.0,
        ..DgpSpec::hp(8, 3)
    };
    let data = sample_hp(&spec, 500, 4).unwrap();
    let tau = oracle_eval(&data, OracleQuantity::Tau).unwrap();
    let mut treated = 0;
    for i in 0..data.n() {
        if data.a[i] == 1 {
            treated += 1;
            assert_eq!(data.y[i], tau[i] + 0.0);
        }
    }
    assert!(treated > 0);
}

#[test]
fn outcome_residuals_are_pure_noise() {
    for spec in [DgpSpec::hl(20, 5), DgpSpec::hp(10, 3)] {
        let data = sample(&spec, 50_000, 8).unwrap();
        let tau = oracle_eval(&data, OracleQuantity::Tau).unwrap();
        let mu0 = oracle_eval(&data, OracleQuantity::Mu0).unwrap();
        let resid: Vec<f64> = (0..data.n()).map(|i| data.y[i] - mu0[i] - f64::from(data.a[i]) * tau[i]).collect();
        let v = variance(&resid, 1);
        let want = spec.noise_sd * spec.noise_sd;
        assert!((v / want - 1.0).abs() < 0.05, "{}: residual variance {v}", spec.kind.name());
        for j in 0..3 {
            assert!(correlation(&resid, &data.x.column(j)).abs() < 0.02);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), n in 1usize..60, which in 0usize..4) {
        let spec = match which {
            0 => DgpSpec::ld(),
            1 => DgpSpec::hl(9, 3),
            2 => DgpSpec::hp(6, 2),
            _ => DgpSpec::linear(vec![1.0, 0.0, -2.0]),
        };
        let a = sample(&spec, n, seed).unwrap();
        let b = sample(&spec, n, seed).unwrap();
        prop_assert_eq!(a.x.matrix(), b.x.matrix());
        prop_assert_eq!(&a.a, &b.a);
        prop_assert_eq!(a.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let c = sample(&spec, n, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(a.x.matrix(), c.x.matrix());
    }

    #[test]
    fn propensities_are_probabilities(seed in any::<u64>()) {
        for spec in [DgpSpec::ld(), DgpSpec::hl(9, 3), DgpSpec::hp(6, 2)] {
            let data = sample(&spec, 50, seed).unwrap();
            let pi = oracle_eval(&data, OracleQuantity::Pi).unwrap();
            prop_assert!(pi.iter().all(|p| *p > 0.0 && *p < 1.0));
        }
    }
}
