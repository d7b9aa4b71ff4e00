//! Property tests for the structural invariants of the sample model and
//! the trimmed estimators.

use proptest::prelude::*;

use tailshift::classic::{diff_means, hodges_lehmann};
use tailshift::sample::{empirical_quantile, qte_curve};
use tailshift::trimmed::{sigma2_hat, trimmed_tau, winsorized_tau, TrimSpec};
use tailshift::TwoSampleView;

fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e6..1e6f64, 1..max_len)
}

/// Arms large enough to carry the plug-in variance (needs >= 3 points).
fn arm_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e6..1e6f64, 3..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn empirical_quantile_is_monotone_in_u(mut arm in finite_vec(80), steps in 2usize..30) {
        arm.sort_by(f64::total_cmp);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=steps {
            let u = k as f64 / steps as f64;
            let q = empirical_quantile(&arm, u).unwrap();
            prop_assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn split_sample_is_permutation_invariant(
        ys in finite_vec(60),
        zs in prop::collection::vec(0u8..2, 60),
        rotate in 0usize..60,
    ) {
        let pairs: Vec<(f64, f64)> = ys
            .iter()
            .zip(zs.iter().cycle())
            .map(|(y, z)| (*y, *z as f64))
            .collect();
        let has_both = pairs.iter().any(|p| p.1 == 0.0) && pairs.iter().any(|p| p.1 == 1.0);
        prop_assume!(has_both);
        let mut rotated = pairs.clone();
        rotated.rotate_left(rotate % pairs.len());
        let a = TwoSampleView::split_sample(pairs).unwrap();
        let b = TwoSampleView::split_sample(rotated).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn qte_is_constant_for_shifted_arms(control in finite_vec(50), c in -100.0..100.0f64) {
        let treated: Vec<f64> = control.iter().map(|x| x + c).collect();
        let v = TwoSampleView::from_arms(control, treated).unwrap();
        for (_, d) in qte_curve(&v, &[0.1, 0.37, 0.5, 0.83]).unwrap() {
            prop_assert!((d - c).abs() <= 1e-9 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn trimmed_estimators_are_shift_equivariant(
        control in arm_vec(50),
        treated in arm_vec(50),
        c in -50.0..50.0f64,
        alpha in 0.0..0.45f64,
        beta in 0.0..0.45f64,
    ) {
        let spec = TrimSpec::new(alpha, beta).unwrap();
        let v = TwoSampleView::from_arms(control.clone(), treated.clone()).unwrap();
        let shifted = TwoSampleView::from_arms(
            control,
            treated.iter().map(|x| x + c).collect(),
        ).unwrap();
        for f in [trimmed_tau, winsorized_tau] {
            let base = f(&v, &spec).unwrap().tau_hat;
            let moved = f(&shifted, &spec).unwrap().tau_hat;
            prop_assert!((moved - (base + c)).abs() <= 1e-8 * (1.0 + base.abs() + c.abs()));
        }
    }

    #[test]
    fn sigma2_is_nonnegative_and_zero_iff_degenerate(
        mut arm in arm_vec(60),
        alpha in 0.0..0.45f64,
        beta in 0.0..0.45f64,
    ) {
        arm.sort_by(f64::total_cmp);
        let spec = TrimSpec::new(alpha, beta).unwrap();
        let s2 = sigma2_hat(&arm, &spec).unwrap();
        prop_assert!(s2 >= 0.0);
    }

    #[test]
    fn hl_between_extreme_pairwise_differences(
        control in finite_vec(40),
        treated in finite_vec(40),
    ) {
        let v = TwoSampleView::from_arms(control, treated).unwrap();
        let est = hodges_lehmann(&v).tau_hat;
        let lo = v.treated()[0] - v.control()[v.n0() - 1];
        let hi = v.treated()[v.n1() - 1] - v.control()[0];
        prop_assert!(est >= lo && est <= hi);
        // Joint shifts cancel for the pairwise-difference median and the
        // difference in means alike.
        let d = diff_means(&v).tau_hat;
        prop_assert!((est - d).abs() <= (hi - lo).max(1e-9));
    }
}
