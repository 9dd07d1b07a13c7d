//! Distribution-fit and forecast metrics.

use serde::{Deserialize, Serialize};

use crate::distributions::{optimal_transform, NoiseSource, TargetDistribution};
use crate::error::{IslError, Result};
use crate::nn::{Generator, Matrix, MlpSpec, ParamVector};
use crate::rng::{self, Stream};
use crate::timeseries::ForecastResult;

pub const MIN_MONTE_CARLO: usize = 1000;

/// Kolmogorov–Smirnov distance between the empirical cdf of `samples` and
/// the analytic cdf of `target`, checked on both sides of every jump.
pub fn ksd(samples: &[f64], target: &TargetDistribution) -> Result<f64> {
    if samples.is_empty() {
        return Err(IslError::EmptyInput("KSD of an empty sample".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(IslError::NonFinite { op: "ksd" });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        // ties form one jump
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = target.cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max((f - (j + 1) as f64 / n).abs());
        i = j + 1;
    }
    Ok(d.min(1.0))
}

/// Which monotone transport map `F⁻¹ ∘ F_Z` the model is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformPolicy {
    FixedIncreasing,
    FixedDecreasing,
    BestOfTwo,
}

impl std::str::FromStr for TransformPolicy {
    type Err = IslError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_increasing" | "increasing" => Ok(Self::FixedIncreasing),
            "fixed_decreasing" | "decreasing" => Ok(Self::FixedDecreasing),
            "best_of_two" => Ok(Self::BestOfTwo),
            _ => Err(IslError::InvalidParameter(format!("unknown transform policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub n_monte_carlo: usize,
    pub seed: u64,
    pub policy: TransformPolicy,
}

impl MetricConfig {
    pub fn new(seed: u64) -> Self {
        Self { n_monte_carlo: 100_000, seed, policy: TransformPolicy::BestOfTwo }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_monte_carlo < MIN_MONTE_CARLO {
            return Err(IslError::InvalidParameter(format!(
                "n_monte_carlo must be at least {MIN_MONTE_CARLO}, got {}",
                self.n_monte_carlo
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformErrors {
    pub mae: f64,
    pub mse: f64,
    /// Whether the decreasing map `F⁻¹ ∘ (1 − F_Z)` was used.
    pub reflected: bool,
}

/// Monte Carlo `E|f(Z) − g(Z)|` and `E(f(Z) − g(Z))²` for a sampler `g`.
pub fn transform_errors<G>(g: G, noise: &NoiseSource, target: &TargetDistribution, cfg: &MetricConfig) -> Result<TransformErrors>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let z = noise.sample(cfg.n_monte_carlo, &mut rng::stream(cfg.seed, Stream::Metric));
    let gz = g(&z)?;
    let branches: &[bool] = match cfg.policy {
        TransformPolicy::FixedIncreasing => &[false],
        TransformPolicy::FixedDecreasing => &[true],
        TransformPolicy::BestOfTwo => &[false, true],
    };
    let n = z.len() as f64;
    let mut best: Option<TransformErrors> = None;
    for &reflected in branches {
        let (mut abs, mut sq) = (0.0, 0.0);
        for (&zi, &gi) in z.iter().zip(&gz) {
            let e = optimal_transform(target, noise, zi, reflected) - gi;
            abs += e.abs();
            sq += e * e;
        }
        let cand = TransformErrors { mae: abs / n, mse: sq / n, reflected };
        if best.is_none_or(|b| cand.mae < b.mae) {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one branch"))
}

/// MAE/MSE of a trained generator against the optimal transform.
pub fn mae_mse_transform(
    theta: &ParamVector,
    gen_spec: &MlpSpec,
    noise: &NoiseSource,
    target: &TargetDistribution,
    cfg: &MetricConfig,
) -> Result<TransformErrors> {
    let generator = Generator::new(gen_spec.clone())?;
    generator.check_params(theta)?;
    transform_errors(|z| generator.apply(&theta.values, z), noise, target, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileLoss {
    pub rho: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetrics {
    pub nd: f64,
    pub rmse: f64,
    /// `2 Σ P_ρ(y, ŷ_ρ) / Σ|y|`.
    pub ql: Vec<QuantileLoss>,
}

/// `ρ (y − ŷ)⁺ + (1 − ρ)(ŷ − y)⁺`.
pub fn pinball(rho: f64, y: f64, yhat: f64) -> f64 {
    rho * (y - yhat).max(0.0) + (1.0 - rho) * (yhat - y).max(0.0)
}

/// ND and RMSE of the median forecast and quantile losses at each ρ.
pub fn forecast_metrics(forecast: &ForecastResult, actual: &Matrix, rho_levels: &[f64]) -> Result<ForecastMetrics> {
    forecast_metrics_pooled(&[(forecast, actual)], rho_levels)
}

/// As [`forecast_metrics`], with sums taken over several forecasts.
pub fn forecast_metrics_pooled(pairs: &[(&ForecastResult, &Matrix)], rho_levels: &[f64]) -> Result<ForecastMetrics> {
    let mut medians = Vec::with_capacity(pairs.len());
    let mut quantiles = Vec::with_capacity(pairs.len());
    for (f, actual) in pairs {
        if actual.shape() != (f.horizon, f.dim) {
            return Err(IslError::Shape {
                op: "forecast_metrics",
                detail: format!("actual {}x{}, forecast {}x{}", actual.rows, actual.cols, f.horizon, f.dim),
            });
        }
        medians.push(f.quantile(0.5)?);
        quantiles.push(rho_levels.iter().map(|&r| f.quantile(r)).collect::<Result<Vec<_>>>()?);
    }
    let rows: Vec<QuantileForecast<'_>> = pairs
        .iter()
        .zip(&medians)
        .zip(&quantiles)
        .map(|(((_, actual), median), qs)| QuantileForecast { median, quantiles: qs.iter().collect(), actual })
        .collect();
    quantile_metrics(&rows, rho_levels)
}

/// Point and quantile forecasts for one series, aligned with `actual`.
pub struct QuantileForecast<'a> {
    pub median: &'a Matrix,
    /// One matrix per entry of the `rho_levels` passed alongside.
    pub quantiles: Vec<&'a Matrix>,
    pub actual: &'a Matrix,
}

/// ND, RMSE and QL from precomputed quantile forecasts.
pub fn quantile_metrics(rows: &[QuantileForecast<'_>], rho_levels: &[f64]) -> Result<ForecastMetrics> {
    let mut denom = 0.0;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut risk = vec![0.0; rho_levels.len()];
    for r in rows {
        if r.median.shape() != r.actual.shape() || r.quantiles.len() != rho_levels.len() {
            return Err(IslError::Shape { op: "forecast_metrics", detail: "forecast and actual disagree".into() });
        }
        for (i, &y) in r.actual.data.iter().enumerate() {
            let e = r.median.data[i] - y;
            denom += y.abs();
            abs += e.abs();
            sq += e * e;
            for (acc, (q, &rho)) in risk.iter_mut().zip(r.quantiles.iter().zip(rho_levels)) {
                *acc += pinball(rho, y, q.data[i]);
            }
        }
        count += r.actual.len();
    }
    if count == 0 {
        return Err(IslError::EmptyInput("no forecast values".into()));
    }
    if denom == 0.0 {
        return Err(IslError::Domain("Σ|y| = 0, normalized metrics are undefined".into()));
    }
    Ok(ForecastMetrics {
        nd: abs / denom,
        rmse: (sq / count as f64).sqrt(),
        ql: rho_levels.iter().zip(risk).map(|(&rho, r)| QuantileLoss { rho, value: 2.0 * r / denom }).collect(),
    })
}

/// One row of a fit summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub target: String,
    pub ksd: f64,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
}

/// Markdown table with columns target | KSD | MAE | MSE.
pub fn markdown_table(rows: &[FitRow]) -> String {
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut out = String::from("| target | KSD | MAE | MSE |\n|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!("| {} | {:.4} | {} | {} |\n", r.target, r.ksd, fmt(r.mae), fmt(r.mse)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn ksd_of_own_samples_is_small() {
        let t = TargetDistribution::normal(0.0, 1.0).unwrap();
        let xs = t.sample(100_000, &mut rng::stream(1, Stream::Data));
        assert!(ksd(&xs, &t).unwrap() < 0.01);
        assert!(ksd(&[], &t).is_err());
    }

    #[test]
    fn ksd_uniform_stretch() {
        let t = TargetDistribution::uniform(0.0, 1.0).unwrap();
        let xs = TargetDistribution::uniform(0.0, 2.0).unwrap().sample(100_000, &mut rng::stream(2, Stream::Data));
        assert!((ksd(&xs, &t).unwrap() - 0.5).abs() < 0.01);
    }

    #[test]
    fn ksd_single_point() {
        let t = TargetDistribution::uniform(0.0, 1.0).unwrap();
        assert!((ksd(&[0.5], &t).unwrap() - 0.5).abs() < 1e-15);
        assert!((ksd(&[0.5, 0.5], &t).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn transform_errors_exact_and_offset() {
        let noise = NoiseSource::standard_normal(0);
        let t = TargetDistribution::normal(4.0, 2.0).unwrap();
        let cfg = MetricConfig { n_monte_carlo: 10_000, seed: 5, policy: TransformPolicy::BestOfTwo };
        let exact = transform_errors(|z| Ok(z.iter().map(|&x| 4.0 + 2.0 * x).collect()), &noise, &t, &cfg).unwrap();
        assert!(exact.mae < 1e-9 && exact.mse < 1e-12);
        assert!(!exact.reflected);
        let off = transform_errors(|z| Ok(z.iter().map(|&x| 4.3 + 2.0 * x).collect()), &noise, &t, &cfg).unwrap();
        assert!((off.mae - 0.3).abs() < 1e-9);
        assert!((off.mse - 0.09).abs() < 1e-9);
        let flipped = transform_errors(|z| Ok(z.iter().map(|&x| 4.0 - 2.0 * x).collect()), &noise, &t, &cfg).unwrap();
        assert!(flipped.reflected && flipped.mae < 1e-9);
        let small = MetricConfig { n_monte_carlo: 10, ..cfg };
        assert!(transform_errors(|z| Ok(z.to_vec()), &noise, &t, &small).is_err());
    }

    #[test]
    fn mae_mse_of_affine_net() {
        let spec = MlpSpec::new(1, &[], 1, Activation::Identity);
        let g = Generator::new(spec.clone()).unwrap();
        let mut theta = ParamVector::zeros(g.layout());
        theta.values = vec![2.0, 4.0];
        let t = TargetDistribution::normal(4.0, 2.0).unwrap();
        let e = mae_mse_transform(&theta, &spec, &NoiseSource::standard_normal(1), &t, &MetricConfig::new(1)).unwrap();
        assert!(e.mae < 1e-9);
        assert!(e.mse >= e.mae * e.mae);
    }

    fn constant_forecast(value: f64, horizon: usize) -> ForecastResult {
        ForecastResult::from_trajectories(3, vec![Matrix::from_vec(horizon, 1, vec![value; horizon]); 4], &[0.1, 0.5, 0.9])
            .unwrap()
    }

    #[test]
    fn forecast_metric_examples() {
        let actual = Matrix::from_vec(10, 1, vec![1.0; 10]);
        let perfect = forecast_metrics(&constant_forecast(1.0, 10), &actual, &[0.5, 0.9]).unwrap();
        assert_eq!(perfect.nd, 0.0);
        assert_eq!(perfect.rmse, 0.0);
        assert!(perfect.ql.iter().all(|q| q.value == 0.0));

        let off = forecast_metrics(&constant_forecast(1.1, 10), &actual, &[0.5]).unwrap();
        assert!((off.nd - 0.1).abs() < 1e-12);
        assert!((off.rmse - 0.1).abs() < 1e-12);
        assert!((off.ql[0].value - off.nd).abs() < 1e-12);

        let zero = Matrix::zeros(10, 1);
        assert!(forecast_metrics(&constant_forecast(1.0, 10), &zero, &[0.5]).is_err());
        assert!(forecast_metrics(&constant_forecast(1.0, 9), &actual, &[0.5]).is_err());
    }

    #[test]
    fn table_has_a_row_per_target() {
        let rows = vec![
            FitRow { target: "normal:4,2".into(), ksd: 0.01, mae: Some(0.1), mse: Some(0.02) },
            FitRow { target: "cauchy:1,2".into(), ksd: 0.02, mae: None, mse: None },
        ];
        let t = markdown_table(&rows);
        assert_eq!(t.lines().count(), 4);
        assert!(t.contains("| cauchy:1,2 | 0.0200 | - | - |"));
    }
}
