use isl::rng::{stream, Stream};
use isl::stats::{chi_square_uniformity, moment_uniformity_check, rank_statistic, RankHistogram};
use isl::TargetDistribution;

fn targets() -> Vec<TargetDistribution> {
    ["normal:0,1", "uniform:-1,1", "cauchy:0,1", "pareto:1,2", "mix:[normal:5,2;normal:-1,1]"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
}

#[test]
fn matched_model_ranks_are_uniform() {
    let mut rng = stream(21, Stream::Data);
    for p in targets() {
        let k = 5;
        let mut h = RankHistogram::new(k);
        for _ in 0..100_000 {
            let y = p.sample_one(&mut rng);
            let s = p.sample(k, &mut rng);
            h.add(rank_statistic(y, &s));
        }
        for (n, f) in h.frequencies().iter().enumerate() {
            assert!((f - 1.0 / 6.0).abs() < 0.01, "{p} bin {n}: {f}");
        }
        assert!(chi_square_uniformity(&h, 0.01).unwrap().accept, "{p}");
    }
}

#[test]
fn matched_model_moments_are_harmonic() {
    let mut rng = stream(22, Stream::Data);
    for p in targets() {
        let gen = p.sample(50_000, &mut rng);
        for m in moment_uniformity_check(&p, &gen, 5, 50_000, &mut rng).unwrap() {
            // the empirical cdf of the generator adds O(1/sqrt(50k)) bias
            assert!(m.z_score().abs() < 4.0, "{p} n={}: {} vs {}", m.n, m.estimate, m.expected);
        }
    }
}

#[test]
fn moment_check_detects_shifted_model() {
    let mut rng = stream(23, Stream::Data);
    let p = TargetDistribution::normal(2.0, 1.0).unwrap();
    let gen = TargetDistribution::normal(0.0, 1.0).unwrap().sample(100_000, &mut rng);
    let m = &moment_uniformity_check(&p, &gen, 1, 100_000, &mut rng).unwrap()[0];
    // E[Φ(Y)] for Y ~ N(2, 1) is Φ(2/√2)
    assert!((m.estimate - 0.9214).abs() < 0.005, "{}", m.estimate);
}
