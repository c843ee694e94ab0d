use pbrl_core::eval_stats::{aggregate, performance_profile, stratified_bootstrap_ci, Metric, ScoreMatrix};
use pbrl_core::numerics::SeededRng;
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = ScoreMatrix> {
    (1usize..4, 2usize..7).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop::collection::vec(-50.0f64..150.0, n), m).prop_map(move |rows| {
            ScoreMatrix::new((0..m).map(|i| format!("t{i}")).collect(), rows).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn profile_is_a_survival_function(s in matrix(), mut taus in prop::collection::vec(-100.0f64..200.0, 1..20)) {
        taus.sort_by(f64::total_cmp);
        let p = performance_profile(&s, &taus).unwrap();
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(p.windows(2).all(|w| w[1] <= w[0]));
        let ends = performance_profile(&s, &[f64::NEG_INFINITY, f64::INFINITY]).unwrap();
        prop_assert_eq!(ends, vec![1.0, 0.0]);
        let lowest = s.flatten().into_iter().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(performance_profile(&s, &[lowest]).unwrap(), vec![1.0]);
    }

    #[test]
    fn iqm_is_bounded_and_ignores_the_top_score(s in matrix(), bump in 0.0f64..1e6) {
        let flat = s.flatten();
        prop_assume!(flat.len() >= 8);
        let iqm = aggregate(&s, Metric::Iqm, 50.0).unwrap();
        let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= iqm && iqm <= hi);
        let mut raised = s.clone();
        let (mut bm, mut bn) = (0, 0);
        for (m, row) in raised.scores.iter().enumerate() {
            for (n, &v) in row.iter().enumerate() {
                if v > raised.scores[bm][bn] { bm = m; bn = n; }
            }
        }
        raised.scores[bm][bn] += bump;
        prop_assert_eq!(aggregate(&raised, Metric::Iqm, 50.0).unwrap(), iqm);
    }

    #[test]
    fn optimality_gap_is_in_unit_interval(s in matrix(), eta in 1.0f64..100.0) {
        let g = aggregate(&s, Metric::OptimalityGap, eta).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&g) || s.flatten().iter().any(|&x| x < 0.0));
        let all_above = s.flatten().iter().all(|&x| x >= eta);
        prop_assert_eq!(g == 0.0, all_above);
    }

    #[test]
    fn mean_interval_contains_point(s in matrix(), seed in any::<u64>()) {
        let point = aggregate(&s, Metric::Mean, 50.0).unwrap();
        let (lo, hi) = stratified_bootstrap_ci(&s, Metric::Mean, 50.0, 400, 0.95, &mut SeededRng::new(seed)).unwrap();
        prop_assert!(lo <= hi);
        prop_assert!(lo <= point + 1e-9 && point <= hi + 1e-9);
    }

    #[test]
    fn resampling_stays_within_strata(seed in any::<u64>()) {
        // Task scores live in disjoint bands, so the per-task mean of any
        // resample must stay inside its own band; the overall mean then stays
        // inside the mean of the band bounds.
        let s = ScoreMatrix::new(
            vec!["low".into(), "high".into()],
            vec![vec![0.0, 1.0, 2.0], vec![100.0, 101.0, 102.0]],
        ).unwrap();
        let (lo, hi) = stratified_bootstrap_ci(&s, Metric::Mean, 50.0, 400, 0.99, &mut SeededRng::new(seed)).unwrap();
        prop_assert!(lo >= 50.0 && hi <= 52.0);
    }
}
