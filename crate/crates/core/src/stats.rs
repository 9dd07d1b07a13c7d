//! Exact rank statistics, uniformity testing, and the quadrature oracles
//! for the distribution of the rank statistic.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::distributions::TargetDistribution;
use crate::error::{IslError, Result};
use crate::quadrature::{integrate, integrate_real};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
const ORACLE_TOL: f64 = 1e-9;

/// Number of generator samples strictly below `y`.
pub fn rank_statistic(y: f64, gen_samples: &[f64]) -> usize {
    gen_samples.iter().filter(|&&s| s < y).count()
}

/// Counts of the rank statistic over bins `0..=K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl RankHistogram {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k + 1] }
    }

    pub fn add(&mut self, rank: usize) {
        self.counts[rank.min(self.k)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Histogram of one fresh rank per observation, where `draw_k` supplies
    /// the `K` generator samples for each observation.
    pub fn from_observations<F>(k: usize, data: &[f64], mut draw_k: F) -> Self
    where
        F: FnMut() -> Vec<f64>,
    {
        let mut h = Self::new(k);
        for &y in data {
            h.add(rank_statistic(y, &draw_k()));
        }
        h
    }
}

/// Outcome of a Pearson χ² test against the discrete uniform law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub accept: bool,
    /// Set when the expected count per bin is below 5.
    pub low_expected_count: bool,
}

/// `(1 − significance)` quantile of χ² with `dof` degrees of freedom.
pub fn chi_square_critical(dof: usize, significance: f64) -> Result<f64> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(IslError::Domain(format!("significance {significance} outside (0, 1)")));
    }
    let chi = ChiSquared::new(dof as f64)
        .map_err(|e| IslError::InvalidParameter(format!("chi-square with {dof} dof: {e}")))?;
    Ok(chi.inverse_cdf(1.0 - significance))
}

/// Pearson χ² test of `hist` against the uniform pmf on `0..=K`.
pub fn chi_square_uniformity(hist: &RankHistogram, significance: f64) -> Result<ChiSquareReport> {
    let n = hist.total();
    if n == 0 {
        return Err(IslError::EmptyInput("chi-square test on an empty histogram".into()));
    }
    if hist.k == 0 {
        return Err(IslError::InvalidParameter("chi-square test needs K >= 1".into()));
    }
    let expected = n as f64 / (hist.k + 1) as f64;
    let statistic = hist
        .counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let critical_value = chi_square_critical(hist.k, significance)?;
    Ok(ChiSquareReport {
        statistic,
        critical_value,
        accept: statistic <= critical_value,
        low_expected_count: expected < 5.0,
    })
}

fn binomial_coefficient(k: usize, n: usize) -> f64 {
    let n = n.min(k - n);
    (0..n).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// `Q_K(n) = ∫ C(K,n) F̃(y)ⁿ (1 − F̃(y))^{K−n} p(y) dy`.
///
/// Integrated in the probability domain (`y = F⁻¹(u)`), which keeps heavy
/// tails bounded.
pub fn q_k_oracle<F>(p: &TargetDistribution, p_tilde_cdf: F, k: usize, n: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if n > k {
        return Err(IslError::Domain(format!("n = {n} exceeds K = {k}")));
    }
    let c = binomial_coefficient(k, n);
    let integrand = |u: f64| {
        let y = p.quantile(u).unwrap_or(f64::NAN);
        let s = p_tilde_cdf(y).clamp(0.0, 1.0);
        c * s.powi(n as i32) * (1.0 - s).powi((k - n) as i32)
    };
    integrate(integrand, 0.0, 1.0, ORACLE_TOL)
}

/// The full pmf `[Q_K(0), …, Q_K(K)]`.
pub fn q_k_pmf<F>(p: &TargetDistribution, p_tilde_cdf: F, k: usize) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    (0..=k).map(|n| q_k_oracle(p, &p_tilde_cdf, k, n)).collect()
}

/// `∫ |p − p̃|`.
pub fn l1_distance(p: &TargetDistribution, p_tilde: &TargetDistribution) -> Result<f64> {
    let mut pts = p.breakpoints();
    pts.extend(p_tilde.breakpoints());
    for d in [p, p_tilde] {
        let (c, s) = d.center_and_scale();
        pts.extend([c - 3.0 * s, c, c + 3.0 * s]);
    }
    integrate_real(|y| (p.pdf(y) - p_tilde.pdf(y)).abs(), &pts, ORACLE_TOL)
}

/// Result of checking `|Q_K(n) − 1/(K+1)| ≤ ε` for every `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `ε = ∫|p − p̃|`.
    pub epsilon: f64,
    pub pmf: Vec<f64>,
    /// `max_n |Q_K(n) − 1/(K+1)|`.
    pub max_deviation: f64,
    /// `max(0, max_deviation − ε)`.
    pub max_violation: f64,
}

/// Checks the approximate-uniformity bound with `ε = ∫|p − p̃|`.
pub fn verify_tv_bound(p: &TargetDistribution, p_tilde: &TargetDistribution, k: usize) -> Result<BoundReport> {
    let epsilon = l1_distance(p, p_tilde)?;
    let pmf = q_k_pmf(p, |y| p_tilde.cdf(y), k)?;
    let u = 1.0 / (k + 1) as f64;
    let max_deviation = pmf.iter().map(|q| (q - u).abs()).fold(0.0, f64::max);
    Ok(BoundReport { epsilon, pmf, max_deviation, max_violation: (max_deviation - epsilon).max(0.0) })
}

/// Monte Carlo estimate of `E[F̃(Y)ⁿ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    /// `1/(n+1)`.
    pub expected: f64,
}

impl MomentEstimate {
    /// Deviation from `1/(n+1)` in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.expected) / self.std_error.max(f64::MIN_POSITIVE)
    }
}

/// Estimates `E[F̃(Y)ⁿ]`, `Y ~ p`, for `n = 1..=n_max`, where `F̃` is the
/// empirical cdf of `gen_samples`. Under a matched model each value is
/// `1/(n+1)`.
pub fn moment_uniformity_check<R: Rng + ?Sized>(
    p: &TargetDistribution,
    gen_samples: &[f64],
    n_max: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<MomentEstimate>> {
    if n_max < 1 {
        return Err(IslError::InvalidParameter("n_max must be at least 1".into()));
    }
    if gen_samples.is_empty() || n_samples < 2 {
        return Err(IslError::EmptyInput("moment check needs generator samples and ≥ 2 draws".into()));
    }
    let mut sorted = gen_samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let g = sorted.len() as f64;
    let u: Vec<f64> = (0..n_samples)
        .map(|_| {
            let y = p.sample_one(rng);
            sorted.partition_point(|&s| s <= y) as f64 / g
        })
        .collect();
    Ok((1..=n_max)
        .map(|n| {
            let vals: Vec<f64> = u.iter().map(|x| x.powi(n as i32)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64;
            MomentEstimate { n, estimate: m, std_error: (var / vals.len() as f64).sqrt(), expected: 1.0 / (n + 1) as f64 }
        })
        .collect())
}
