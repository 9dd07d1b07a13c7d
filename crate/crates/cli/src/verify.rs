//! `verify`: Monte Carlo and quadrature checks of the rank-statistic theory.

use std::path::PathBuf;

use anyhow::{bail, Result};
use isl::rng::{substream, Stream};
use isl::stats::{chi_square_uniformity, q_k_pmf, rank_statistic, verify_tv_bound, RankHistogram};
use isl::TargetDistribution;
use serde::{Deserialize, Serialize};

use crate::manifest::{now, Artifacts, RunManifest};
use crate::{parse, resolve_out, Command, PropertyFailure};

/// Slack on the total-variation bound, matching the quadrature tolerance.
pub const BOUND_SLACK: f64 = 1e-6;
/// Per-bin tolerance between the oracle and simulated rank frequencies.
pub const ORACLE_TOL: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// `uniformity`, `oracle`, `bound` or `all`.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// K values for the uniformity suite.
    #[arg(long, default_value = "2,5,10")]
    pub k: String,
    /// Rank draws per uniformity case.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    /// Rank draws per oracle case.
    #[arg(long, default_value_t = 1_000_000)]
    pub oracle_draws: usize,
    #[arg(long, default_value_t = 0.01)]
    pub significance: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn dist(s: &str) -> TargetDistribution {
    s.parse().expect("built-in distribution")
}

pub fn uniformity_targets() -> Vec<TargetDistribution> {
    ["normal:0,1", "uniform:-1,1", "cauchy:0,1", "pareto:1,2"].into_iter().map(dist).collect()
}

/// `(p, p̃, K)` triples for the oracle cross-check.
pub fn oracle_cases() -> Vec<(TargetDistribution, TargetDistribution, usize)> {
    vec![
        (dist("uniform:0,1"), dist("uniform:0,2"), 1),
        (dist("normal:0,1"), dist("normal:0.5,1"), 5),
        (dist("normal:0,1"), dist("normal:0,1.5"), 10),
        (dist("cauchy:0,1"), dist("normal:0,2"), 4),
        (dist("pareto:1,2"), dist("pareto:1,3"), 3),
    ]
}

/// Perturbed `(p, p̃, K)` triples for the bound check.
pub fn bound_cases() -> Vec<(TargetDistribution, TargetDistribution, usize)> {
    vec![
        (dist("normal:0,1"), dist("normal:0.3,1"), 5),
        (dist("normal:0,1"), dist("normal:0,1.3"), 10),
        (dist("uniform:-1,1"), dist("uniform:-1,1.2"), 3),
        (dist("cauchy:0,1"), dist("cauchy:0.2,1"), 5),
        (dist("mix:[normal:5,2;normal:-1,1]"), dist("normal:2,3"), 7),
    ]
}

/// Rank histogram of `trials` draws of y ~ p against K draws of p̃.
pub fn simulate_ranks(p: &TargetDistribution, p_tilde: &TargetDistribution, k: usize, trials: usize, seed: u64, case: u64) -> RankHistogram {
    let mut rng = substream(seed, Stream::Custom(7), case);
    let mut h = RankHistogram::new(k);
    let mut buf = vec![0.0; k];
    for _ in 0..trials {
        let y = p.sample_one(&mut rng);
        for b in buf.iter_mut() {
            *b = p_tilde.sample_one(&mut rng);
        }
        h.add(rank_statistic(y, &buf));
    }
    h
}

pub fn uniformity_suite(ks: &[usize], trials: usize, significance: f64, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (i, p) in uniformity_targets().iter().enumerate() {
        for (j, &k) in ks.iter().enumerate() {
            let h = simulate_ranks(p, p, k, trials, seed, (i * 100 + j) as u64);
            let r = chi_square_uniformity(&h, significance)?;
            out.push(Check {
                suite: "uniformity".into(),
                name: format!("{p} K={k}"),
                pass: r.accept,
                detail: format!("chi2 {:.3} vs critical {:.3}", r.statistic, r.critical_value),
            });
        }
    }
    Ok(out)
}

pub fn oracle_suite(draws: usize, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (i, (p, pt, k)) in oracle_cases().iter().enumerate() {
        let pmf = q_k_pmf(p, |y| pt.cdf(y), *k)?;
        let freq = simulate_ranks(p, pt, *k, draws, seed, 10_000 + i as u64).frequencies();
        let worst = pmf.iter().zip(&freq).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        out.push(Check {
            suite: "oracle".into(),
            name: format!("{p} vs {pt} K={k}"),
            pass: worst <= ORACLE_TOL,
            detail: format!("max |oracle - simulated| = {worst:.5}"),
        });
    }
    Ok(out)
}

pub fn bound_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (p, pt, k) in bound_cases() {
        let r = verify_tv_bound(&p, &pt, k)?;
        out.push(Check {
            suite: "bound".into(),
            name: format!("{p} vs {pt} K={k}"),
            pass: r.max_violation <= BOUND_SLACK,
            detail: format!("max deviation {:.5} <= eps {:.5}", r.max_deviation, r.epsilon),
        });
    }
    Ok(out)
}

pub fn checks(a: &VerifyArgs) -> Result<Vec<Check>> {
    let ks = parse::list_usize(&a.k)?;
    let mut out = Vec::new();
    let all = a.suite == "all";
    if !matches!(a.suite.as_str(), "all" | "uniformity" | "oracle" | "bound") {
        bail!("unknown suite {:?}", a.suite);
    }
    if all || a.suite == "uniformity" {
        out.extend(uniformity_suite(&ks, a.trials, a.significance, a.seed)?);
    }
    if all || a.suite == "oracle" {
        out.extend(oracle_suite(a.oracle_draws, a.seed)?);
    }
    if all || a.suite == "bound" {
        out.extend(bound_suite()?);
    }
    Ok(out)
}

pub fn run(mut a: VerifyArgs) -> Result<()> {
    let started = now();
    let out = resolve_out(&a.out, "verify");
    a.out = Some(out.clone());
    let checks = checks(&a)?;
    for c in &checks {
        println!("{} [{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail);
    }
    let mut art = Artifacts::new(&out)?;
    art.write_json("report.json", &checks)?;
    art.finish(RunManifest::new(Command::Verify(a.clone()), a.seed, started))?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(PropertyFailure(format!("{failed} of {} checks failed", checks.len())).into());
    }
    Ok(())
}
