//! `eval`: recompute metrics from a 1D checkpoint or a stored forecast.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use isl::metrics::{ksd, mae_mse_transform, quantile_metrics, ForecastMetrics, MetricConfig, QuantileForecast};
use isl::trainer::evaluate_generator;
use isl::TargetDistribution;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::manifest::{now, Artifacts, RunManifest, MANIFEST_FILE};
use crate::series::{ForecastFile, QL_DEFINITION};
use crate::{parse, resolve_out, Command, InputError};

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Generator checkpoint from `train1d`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Target to score against (defaults to the one stored in the checkpoint).
    #[arg(long)]
    pub target: Option<String>,
    /// `forecast.json` from `forecast`.
    #[arg(long)]
    pub forecast: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub eval_samples: usize,
    #[arg(long, default_value_t = 100_000)]
    pub mc: usize,
    #[arg(long, default_value = "best_of_two")]
    pub policy: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorScore {
    pub manifest: String,
    pub target: String,
    pub ksd: f64,
    pub mae: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastScore {
    pub manifest: String,
    pub ql_definition: String,
    pub n_series: usize,
    pub metrics: ForecastMetrics,
}

pub fn score_generator(a: &EvalArgs, path: &PathBuf) -> Result<GeneratorScore> {
    let Checkpoint::Generator { spec, params, noise, target } = Checkpoint::read(path)? else {
        bail!("{} is not a generator checkpoint", path.display());
    };
    let target = match (&a.target, target) {
        (Some(t), _) => t.clone(),
        (None, Some(t)) => t,
        (None, None) => return Err(InputError("no --target given and none stored in the checkpoint".into()).into()),
    };
    let target: TargetDistribution = target.parse()?;
    let samples = evaluate_generator(&params, &spec, &noise, a.eval_samples)?;
    let cfg = MetricConfig { n_monte_carlo: a.mc, seed: a.seed, policy: a.policy.parse()? };
    let err = mae_mse_transform(&params, &spec, &noise, &target, &cfg)?;
    Ok(GeneratorScore {
        manifest: MANIFEST_FILE.into(),
        target: target.to_string(),
        ksd: ksd(&samples, &target)?,
        mae: err.mae,
        mse: err.mse,
    })
}

pub fn score_forecast(path: &PathBuf) -> Result<ForecastScore> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("cannot read {}: {e}", path.display())))?;
    let file: ForecastFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let scored: Vec<_> = file.series.iter().filter(|s| s.actual.is_some()).collect();
    let Some(first) = scored.first() else {
        bail!("no series in {} has an observed continuation", path.display());
    };
    let rho: Vec<f64> = first.quantiles.iter().map(|q| q.rho).collect();
    let mut rows = Vec::new();
    for s in &scored {
        let median = s
            .quantiles
            .iter()
            .find(|q| q.rho == 0.5)
            .with_context(|| format!("series {} has no median forecast", s.id))?;
        if s.quantiles.iter().map(|q| q.rho).ne(rho.iter().copied()) {
            bail!("series {} uses different quantile levels", s.id);
        }
        rows.push(QuantileForecast {
            median: &median.values,
            quantiles: s.quantiles.iter().map(|q| &q.values).collect(),
            actual: s.actual.as_ref().expect("filtered"),
        });
    }
    Ok(ForecastScore {
        manifest: MANIFEST_FILE.into(),
        ql_definition: QL_DEFINITION.into(),
        n_series: rows.len(),
        metrics: quantile_metrics(&rows, &rho)?,
    })
}

pub fn run(mut a: EvalArgs) -> Result<()> {
    let started = now();
    let out = resolve_out(&a.out, "eval");
    a.out = Some(out.clone());
    let mut art = Artifacts::new(&out)?;
    match (&a.checkpoint, &a.forecast) {
        (Some(c), None) => {
            let s = score_generator(&a, c)?;
            println!("{}: KSD={:.4} MAE={:.4} MSE={:.4}", s.target, s.ksd, s.mae, s.mse);
            art.write_json("metrics.json", &s)?;
        }
        (None, Some(f)) => {
            let s = score_forecast(f)?;
            let ql: Vec<String> = s.metrics.ql.iter().map(|q| format!("QL{}={:.4}", q.rho, q.value)).collect();
            println!("{} series: ND={:.4} RMSE={:.4} {}", s.n_series, s.metrics.nd, s.metrics.rmse, ql.join(" "));
            art.write_json("metrics.json", &s)?;
        }
        _ => return Err(InputError("give exactly one of --checkpoint or --forecast".into()).into()),
    }
    parse::positive("mc", a.mc as f64)?;
    art.finish(RunManifest::new(Command::Eval(a.clone()), a.seed, started))?;
    Ok(())
}
