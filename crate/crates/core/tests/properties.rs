use isl::loss::{soft_count, soft_histogram};
use isl::metrics::{ksd, pinball};
use isl::nn::Matrix;
use isl::stats::{chi_square_uniformity, rank_statistic, RankHistogram};
use isl::timeseries::{empirical_quantile, Standardization};
use isl::TargetDistribution;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    -1e3..1e3f64
}

proptest! {
    #[test]
    fn rank_counts_strictly_smaller(y in finite(), s in prop::collection::vec(finite(), 0..30)) {
        let r = rank_statistic(y, &s);
        prop_assert!(r <= s.len());
        prop_assert_eq!(r, s.iter().filter(|&&v| v < y).count());
    }

    #[test]
    fn rank_is_permutation_invariant(y in finite(), mut s in prop::collection::vec(finite(), 1..20)) {
        let r = rank_statistic(y, &s);
        s.reverse();
        prop_assert_eq!(r, rank_statistic(y, &s));
    }

    #[test]
    fn soft_count_lies_in_zero_k(y in finite(), s in prop::collection::vec(finite(), 1..20), alpha in 0.1..50.0f64) {
        let c = soft_count(y, &s, alpha);
        prop_assert!(c >= 0.0 && c <= s.len() as f64);
    }

    #[test]
    fn soft_histogram_entries_are_probabilities(
        counts in prop::collection::vec(0.0..10.0f64, 1..40),
        nu in 0.05..2.0f64,
    ) {
        let q = soft_histogram(&counts, 10, nu);
        prop_assert_eq!(q.q.len(), 11);
        prop_assert!(q.q.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn chi_square_is_nonnegative_and_zero_on_flat(counts in prop::collection::vec(0u64..500, 2..12), flat in 1u64..200) {
        let k = counts.len() - 1;
        let h = RankHistogram { k, counts: counts.clone() };
        if h.total() > 0 {
            prop_assert!(chi_square_uniformity(&h, 0.05).unwrap().statistic >= 0.0);
        }
        let h = RankHistogram { k, counts: vec![flat; k + 1] };
        let r = chi_square_uniformity(&h, 0.05).unwrap();
        prop_assert!(r.statistic.abs() < 1e-9 && r.accept);
    }

    #[test]
    fn ksd_is_a_bounded_distance(mut s in prop::collection::vec(-10.0..10.0f64, 1..200), mu in -3.0..3.0f64) {
        let t = TargetDistribution::normal(mu, 1.0).unwrap();
        let d = ksd(&s, &t).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        s.reverse();
        prop_assert_eq!(d, ksd(&s, &t).unwrap());
    }

    #[test]
    fn quantile_inverts_cdf(u in 0.001..0.999f64, mu in -5.0..5.0f64, sd in 0.1..5.0f64) {
        for t in [
            TargetDistribution::normal(mu, sd).unwrap(),
            TargetDistribution::cauchy(mu, sd).unwrap(),
            TargetDistribution::uniform(mu, mu + sd).unwrap(),
            TargetDistribution::pareto(sd, 1.5).unwrap(),
        ] {
            let x = t.quantile(u).unwrap();
            prop_assert!((t.cdf(x) - u).abs() < 1e-9, "{} at {}", t, u);
        }
    }

    #[test]
    fn cdf_is_monotone(a in -50.0..50.0f64, b in -50.0..50.0f64) {
        let m: TargetDistribution = "mix:[normal:5,2;normal:-1,1]".parse().unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(m.cdf(lo) <= m.cdf(hi));
    }

    #[test]
    fn pinball_is_nonnegative(rho in 0.0..=1.0f64, y in finite(), q in finite()) {
        prop_assert!(pinball(rho, y, q) >= 0.0);
        prop_assert_eq!(pinball(rho, y, y), 0.0);
    }

    #[test]
    fn empirical_quantiles_are_ordered(v in prop::collection::vec(finite(), 1..100), a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(empirical_quantile(&s, lo) <= empirical_quantile(&s, hi));
        prop_assert!(empirical_quantile(&s, 0.0) == s[0] && empirical_quantile(&s, 1.0) == s[s.len() - 1]);
    }

    #[test]
    fn standardization_round_trips(v in prop::collection::vec(finite(), 4..40)) {
        let m = Matrix::from_vec(v.len() / 2, 2, v[..v.len() / 2 * 2].to_vec());
        let z = Standardization::fit(&m);
        let back = z.invert(&z.apply(&m));
        for (x, y) in m.data.iter().zip(&back.data) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}
