use gpdgan::estimators::{profile_loglik, SHAPE_CLAMP};
use gpdgan::gpd::{ExceedanceSet, GpdParams};
use gpdgan::{mle_fit, mom_fit, RngStream};
use proptest::prelude::*;

fn draw(shape: f64, scale: f64, n: usize, seed: u64) -> ExceedanceSet {
    GpdParams::new(shape, scale).unwrap().sample(n, &mut RngStream::new(seed)).unwrap()
}

#[test]
fn mom_recovers_parameters_at_large_n() {
    let fit = mom_fit(&draw(0.2, 1.0, 100_000, 1)).unwrap();
    assert!((fit.params.shape() - 0.2).abs() < 0.03, "{:?}", fit.params);
    assert!((fit.params.scale() - 1.0).abs() < 0.03, "{:?}", fit.params);
}

#[test]
fn mle_recovers_parameters_at_ten_thousand() {
    let fit = mle_fit(&draw(0.2, 1.0, 10_000, 2)).unwrap();
    assert!((fit.params.shape() - 0.2).abs() < 0.05, "{:?}", fit.params);
    assert!((fit.params.scale() - 1.0).abs() < 0.05, "{:?}", fit.params);
}

#[test]
fn mle_dominates_mom_and_truth_in_likelihood() {
    let truth = GpdParams::new(0.2, 1.0).unwrap();
    for seed in 0..30 {
        for n in [10, 50, 500] {
            let data = truth.sample(n, &mut RngStream::new(seed)).unwrap();
            let mle = mle_fit(&data).unwrap();
            let ll = mle.params.log_likelihood(&data);
            let mom = mom_fit(&data).unwrap().params.log_likelihood(&data);
            assert!(ll >= mom - 1e-9, "seed {seed} n {n}: {ll} < {mom}");
            if !mle.diagnostics.shape_clamped {
                assert!(ll >= truth.log_likelihood(&data) - 1e-9, "seed {seed} n {n}");
            }
        }
    }
}

#[test]
fn errors_shrink_with_sample_size() {
    let (mut small_mom, mut large_mom, mut small_mle, mut large_mle) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..20 {
        let err = |p: GpdParams| (p.shape() - 0.2).abs() + (p.scale() - 1.0).abs();
        let small = draw(0.2, 1.0, 100, seed);
        let large = draw(0.2, 1.0, 100_000, seed);
        small_mom += err(mom_fit(&small).unwrap().params);
        large_mom += err(mom_fit(&large).unwrap().params);
        small_mle += err(mle_fit(&small).unwrap().params);
        large_mle += err(mle_fit(&large).unwrap().params);
    }
    assert!(large_mom < small_mom);
    assert!(large_mle < small_mle);
}

#[test]
fn profile_matches_direct_likelihood() {
    let data = draw(0.3, 1.5, 200, 4);
    let ymax = data.max().unwrap();
    for theta in [-0.9 / ymax, -0.1 / ymax, 0.0, 1e-6, 0.05, 0.4, 3.0] {
        let point = profile_loglik(theta, &data);
        assert!(point.is_feasible());
        let direct = GpdParams::new(point.shape.clamp(-1.0, 1.0), point.scale)
            .map(|p| p.log_likelihood(&data));
        if point.shape.abs() <= 1.0 {
            assert!((direct.unwrap() - point.log_likelihood).abs() < 1e-10 * point.log_likelihood.abs().max(1.0));
        }
    }
    let m = data.mean().unwrap();
    let n = data.n() as f64;
    assert!((profile_loglik(0.0, &data).log_likelihood - (-n * m.ln() - n)).abs() < 1e-9);
}

#[test]
fn infeasible_theta_is_sentinel() {
    let data = ExceedanceSet::new(vec![0.5, 2.0]).unwrap();
    let p = profile_loglik(-0.5, &data);
    assert!(!p.is_feasible());
    assert_eq!(p.log_likelihood, f64::NEG_INFINITY);
}

#[test]
fn mom_monte_carlo_example_has_target_moments() {
    // the hand-derived inverse of (mean 1, variance 2)
    let p = GpdParams::new(0.25, 0.75).unwrap();
    let data = p.sample(200_000, &mut RngStream::new(8)).unwrap();
    assert!((data.mean().unwrap() - 1.0).abs() < 0.02);
    assert!((data.variance().unwrap() - 2.0).abs() < 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimators_are_permutation_invariant(seed in any::<u64>(), n in 3usize..60, rot in 1usize..60) {
        let data = draw(0.1, 1.0, n, seed);
        let mut v = data.values().to_vec();
        v.rotate_left(rot % n);
        v.reverse();
        let shuffled = ExceedanceSet::new(v).unwrap();
        for (a, b) in [
            (mom_fit(&data).unwrap().params, mom_fit(&shuffled).unwrap().params),
            (mle_fit(&data).unwrap().params, mle_fit(&shuffled).unwrap().params),
        ] {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn estimates_respect_clamps(seed in any::<u64>(), n in 2usize..25, shape in -0.9f64..0.9) {
        let data = draw(shape, 1.0, n, seed);
        if let Ok(f) = mom_fit(&data) {
            prop_assert!(f.params.shape().abs() <= SHAPE_CLAMP && f.params.scale() > 0.0);
        }
        if let Ok(f) = mle_fit(&data) {
            prop_assert!(f.params.shape().abs() <= SHAPE_CLAMP && f.params.scale() > 0.0);
            prop_assert!(f.params.log_likelihood(&data).is_finite());
        }
    }
}
