//! `train1d`: sample an analytic target, fit a generator, report metrics
//! and dump plotting grids.

use std::path::PathBuf;

use anyhow::Result;
use isl::metrics::{ksd, mae_mse_transform, MetricConfig, TransformPolicy};
use isl::nn::MlpSpec;
use isl::rng::{stream, Stream};
use isl::trainer::{evaluate_generator, train_1d, LatentSharing, ProgressiveKSchedule, RunLog, TrainConfig};
use isl::{IslConfig, TargetDistribution};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CHECKPOINT_FILE};
use crate::manifest::{now, Artifacts, RunManifest, MANIFEST_FILE};
use crate::{parse, resolve_out, Command};

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct Train1dArgs {
    /// Target distribution, e.g. `normal:4,2` or `mix:[normal:5,2;normal:-1,1]`.
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    /// Training sample size N.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
    /// Mini-batch size M (defaults to N).
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = isl::loss::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = isl::loss::DEFAULT_NU)]
    pub nu: f64,
    /// Norm order of the loss, 1 or 2.
    #[arg(long, default_value = "2")]
    pub norm: String,
    /// Iterations between uniformity tests.
    #[arg(long, default_value_t = isl::trainer::DEFAULT_TEST_PERIOD)]
    pub test_period: usize,
    #[arg(long, default_value_t = isl::stats::DEFAULT_SIGNIFICANCE)]
    pub significance: f64,
    /// `per_observation` or `shared`.
    #[arg(long, default_value = "per_observation")]
    pub latent: String,
    /// `normal` or `uniform:low,high`.
    #[arg(long, default_value = "normal")]
    pub noise: String,
    /// Hidden widths of the generator.
    #[arg(long, default_value = "7,13,7")]
    pub hidden: String,
    #[arg(long, default_value = "elu")]
    pub activation: String,
    /// Gradient-norm clip; 0 disables.
    #[arg(long, default_value_t = isl::trainer::DEFAULT_CLIP_NORM)]
    pub clip: f64,
    /// Generator samples for KSD and plotting dumps.
    #[arg(long, default_value_t = 100_000)]
    pub eval_samples: usize,
    /// Latent draws for MAE/MSE.
    #[arg(long, default_value_t = 100_000)]
    pub mc: usize,
    /// `best_of_two`, `increasing` or `decreasing`.
    #[arg(long, default_value = "best_of_two")]
    pub policy: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flat metrics record written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub manifest: String,
    pub target: String,
    pub ksd: f64,
    pub mae: f64,
    pub mse: f64,
    pub transform_reflected: bool,
    pub final_k: usize,
    pub epochs: usize,
    pub clipped_iterations: usize,
    pub sample_mean: f64,
    pub sample_std: f64,
    pub eval_samples: usize,
    pub mc_draws: usize,
    pub seed: u64,
}

/// Everything `train1d` computes, before anything is written.
#[derive(Debug, Clone)]
pub struct Fit {
    pub checkpoint: Checkpoint,
    pub log: RunLog,
    pub samples: Vec<f64>,
    pub metrics: FitMetrics,
}

pub fn train_config(a: &Train1dArgs) -> Result<TrainConfig> {
    parse::positive("lr", a.lr)?;
    parse::positive("alpha", a.alpha)?;
    parse::positive("nu", a.nu)?;
    let batch = a.batch.unwrap_or(a.n);
    Ok(TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        isl: IslConfig { k: 2, alpha: a.alpha, nu: a.nu, norm_order: parse::norm(&a.norm)?, batch_size: batch },
        schedule: ProgressiveKSchedule { test_period: a.test_period, significance: a.significance, ..ProgressiveKSchedule::up_to(a.kmax) },
        seed: a.seed,
        clip_norm: (a.clip > 0.0).then_some(a.clip),
        latent_sharing: a.latent.parse::<LatentSharing>()?,
    })
}

/// Runs the pipeline without touching the filesystem.
pub fn fit(a: &Train1dArgs) -> Result<Fit> {
    let target: TargetDistribution = a.target.parse()?;
    let cfg = train_config(a)?;
    let noise = parse::noise(&a.noise, a.seed)?;
    let spec = MlpSpec::new(1, &parse::list_usize(&a.hidden)?, 1, parse::activation(&a.activation)?);
    let data = target.sample(a.n, &mut stream(a.seed, Stream::Data));
    let (theta, log) = train_1d(&spec, &noise, &data, &cfg)?;
    let samples = evaluate_generator(&theta, &spec, &noise, a.eval_samples)?;
    let policy: TransformPolicy = a.policy.parse()?;
    let err = mae_mse_transform(&theta, &spec, &noise, &target, &MetricConfig { n_monte_carlo: a.mc, seed: a.seed, policy })?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let metrics = FitMetrics {
        manifest: MANIFEST_FILE.into(),
        target: target.to_string(),
        ksd: ksd(&samples, &target)?,
        mae: err.mae,
        mse: err.mse,
        transform_reflected: err.reflected,
        final_k: log.final_k().unwrap_or(cfg.schedule.k_values[0]),
        epochs: a.epochs,
        clipped_iterations: log.records.iter().map(|r| r.clipped).sum(),
        sample_mean: mean,
        sample_std: std,
        eval_samples: a.eval_samples,
        mc_draws: a.mc,
        seed: a.seed,
    };
    let checkpoint = Checkpoint::Generator { spec, params: theta, noise, target: Some(target.to_string()) };
    Ok(Fit { checkpoint, log, samples, metrics })
}

/// `x, target_cdf, model_cdf` on a grid spanning the central 99% of the target.
pub fn cdf_grid(samples: &[f64], target: &TargetDistribution, points: usize) -> Result<String> {
    let (lo, hi) = (target.quantile(0.005)?, target.quantile(0.995)?);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut s = String::from("x,target_cdf,model_cdf\n");
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let f = sorted.partition_point(|&v| v <= x) as f64 / n;
        s.push_str(&format!("{x:?},{:?},{f:?}\n", target.cdf(x)));
    }
    Ok(s)
}

/// Model density histogram against the target pdf at bin centres.
pub fn histogram(samples: &[f64], target: &TargetDistribution, bins: usize) -> Result<String> {
    let (lo, hi) = (target.quantile(0.005)?, target.quantile(0.995)?);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let n = samples.len() as f64;
    let mut s = String::from("bin_left,bin_right,model_density,target_pdf\n");
    for (i, c) in counts.iter().enumerate() {
        let l = lo + i as f64 * width;
        s.push_str(&format!("{l:?},{:?},{:?},{:?}\n", l + width, *c as f64 / (n * width), target.pdf(l + width / 2.0)));
    }
    Ok(s)
}

pub fn k_trace(log: &RunLog) -> String {
    let mut s = String::from("epoch,current_k,surrogate_loss,theoretical_loss\n");
    for r in &log.records {
        s.push_str(&format!("{},{},{:?},{:?}\n", r.epoch, r.current_k, r.surrogate_loss, r.theoretical_loss));
    }
    s
}

pub fn run(mut a: Train1dArgs) -> Result<()> {
    let started = now();
    let out = resolve_out(&a.out, "train1d");
    a.out = Some(out.clone());
    a.batch = Some(a.batch.unwrap_or(a.n));
    let target: TargetDistribution = a.target.parse()?;
    let fit = fit(&a)?;
    let mut art = Artifacts::new(&out)?;
    art.write_json(CHECKPOINT_FILE, &fit.checkpoint)?;
    art.write("runlog.jsonl", &fit.log.to_json_lines()?)?;
    art.write_json("metrics.json", &fit.metrics)?;
    art.write("cdf.csv", &cdf_grid(&fit.samples, &target, 401)?)?;
    art.write("histogram.csv", &histogram(&fit.samples, &target, 100)?)?;
    art.write("k_trace.csv", &k_trace(&fit.log))?;
    let mut manifest = RunManifest::new(Command::Train1d(a.clone()), a.seed, started);
    manifest.notes.push(format!("batching: {}", fit.log.batching));
    art.finish(manifest)?;
    println!(
        "{}: ksd={:.4} mae={:.4} mse={:.4} final K={} -> {}",
        fit.metrics.target,
        fit.metrics.ksd,
        fit.metrics.mae,
        fit.metrics.mse,
        fit.metrics.final_k,
        out.display()
    );
    Ok(())
}
