mod common;

use factsurv::logrank::logrank_test_times;
use factsurv::special::chi2_sf;
use proptest::prelude::*;

fn group() -> impl Strategy<Value = Vec<(u32, bool)>> {
    prop::collection::vec((1u32..=10, any::<bool>()), 1..25)
}

proptest! {
    #[test]
    fn label_swap_is_symmetric(a in group(), b in group()) {
        let r1 = logrank_test_times(&[("a".into(), a.clone()), ("b".into(), b.clone())]).unwrap();
        let r2 = logrank_test_times(&[("b".into(), b), ("a".into(), a)]).unwrap();
        prop_assert!((r1.statistic - r2.statistic).abs() < 1e-9 * r1.statistic.max(1.0));
        prop_assert!((r1.p_value - r2.p_value).abs() < 1e-12);
    }

    #[test]
    fn observed_totals_match_expected_totals(a in group(), b in group(), c in group()) {
        let r = logrank_test_times(&[("a".into(), a), ("b".into(), b), ("c".into(), c)]).unwrap();
        let o: f64 = r.groups.iter().map(|g| g.observed).sum();
        let e: f64 = r.groups.iter().map(|g| g.expected).sum();
        prop_assert!((o - e).abs() < 1e-9);
        prop_assert!(r.statistic >= 0.0);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn identical_groups_give_zero(a in group()) {
        let r = logrank_test_times(&[("a".into(), a.clone()), ("b".into(), a)]).unwrap();
        prop_assert!(r.statistic.abs() < 1e-12);
    }

    #[test]
    fn merging_exchangeable_groups_does_not_increase_statistic(a in group(), b in group()) {
        let three = logrank_test_times(&[("a".into(), a.clone()), ("b".into(), a.clone()), ("c".into(), b.clone())])
            .unwrap();
        let mut merged = a.clone();
        merged.extend(a);
        let two = logrank_test_times(&[("ab".into(), merged), ("c".into(), b)]).unwrap();
        prop_assert!(two.statistic <= three.statistic + 1e-9);
    }
}

#[test]
fn p_values_match_numeric_integration() {
    for &(x, df) in &[(0.5, 1), (2.882, 1), (3.84, 1), (10.0, 1), (1.0, 2), (7.5, 2), (4.0, 3), (12.0, 5)] {
        let p = chi2_sf(x, df);
        let q = common::chi2_sf_numeric(x, df);
        assert!((p - q).abs() < 1e-8, "chi2({x}, {df}): {p} vs {q}");
    }
}
