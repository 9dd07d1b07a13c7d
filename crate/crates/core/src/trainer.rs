//! Mini-batch training of a 1D generator with a progressive-K schedule.
//!
//! Each iteration draws `K` latent values per observation (or one set shared
//! by the whole batch, see [`LatentSharing`]), evaluates the surrogate loss,
//! and takes an Adam step. Every
//! `test_period` iterations the hard rank statistics of the full training
//! set are recomputed with fresh latent draws (one set of `K` per
//! observation) and tested for uniformity; on acceptance `K` moves to the
//! next value of the schedule.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::distributions::NoiseSource;
use crate::error::{IslError, Result};
use crate::loss::{surrogate_loss, theoretical_isl, IslConfig};
use crate::nn::{clip_global_norm, value_and_grad, AdamState, Generator, Matrix, MlpSpec, ParamVector};
use crate::rng::{self, NoiseStream, Stream};
use crate::stats::{chi_square_uniformity, RankHistogram, DEFAULT_SIGNIFICANCE};

pub const DEFAULT_TEST_PERIOD: usize = 100;
pub const DEFAULT_CLIP_NORM: f64 = 10.0;

/// Increasing sequence of `K` values and the gate that advances through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressiveKSchedule {
    pub k_values: Vec<usize>,
    /// Mini-batch iterations between uniformity tests.
    pub test_period: usize,
    pub significance: f64,
}

impl ProgressiveKSchedule {
    /// `2, 3, 5, 7, 10`, then roughly ×1.5 per stage, capped at `k_max`.
    pub fn up_to(k_max: usize) -> Self {
        let mut ks: Vec<usize> = vec![2, 3, 5, 7, 10];
        while *ks.last().unwrap() < k_max {
            let last = *ks.last().unwrap();
            ks.push(((last as f64) * 1.5).round() as usize);
        }
        ks.retain(|&k| k < k_max);
        ks.push(k_max.max(1));
        Self { k_values: ks, test_period: DEFAULT_TEST_PERIOD, significance: DEFAULT_SIGNIFICANCE }
    }

    /// A single stage at fixed `K`.
    pub fn fixed(k: usize) -> Self {
        Self { k_values: vec![k], test_period: DEFAULT_TEST_PERIOD, significance: DEFAULT_SIGNIFICANCE }
    }

    pub fn k_max(&self) -> usize {
        *self.k_values.last().unwrap_or(&1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.k_values[0] < 1 {
            return Err(IslError::InvalidParameter("K schedule must start at K >= 1".into()));
        }
        if self.k_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IslError::InvalidParameter(format!(
                "K schedule must be strictly increasing, got {:?}",
                self.k_values
            )));
        }
        if self.test_period < 1 {
            return Err(IslError::InvalidParameter("test period must be at least 1".into()));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(IslError::InvalidParameter("significance must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Advances the schedule index when the χ² test accepts uniformity.
pub fn k_gate(hist: &RankHistogram, schedule: &ProgressiveKSchedule, current_index: usize) -> Result<usize> {
    let report = chi_square_uniformity(hist, schedule.significance)?;
    let last = schedule.k_values.len().saturating_sub(1);
    Ok(if report.accept && current_index < last { current_index + 1 } else { current_index })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Batch size and loss hyperparameters. `isl.k` is overridden by the schedule.
    pub isl: IslConfig,
    pub schedule: ProgressiveKSchedule,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub latent_sharing: LatentSharing,
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, batch_size: usize, k_max: usize, seed: u64) -> Self {
        Self {
            epochs,
            learning_rate,
            isl: IslConfig { batch_size, ..IslConfig::default() },
            schedule: ProgressiveKSchedule::up_to(k_max),
            seed,
            clip_norm: Some(DEFAULT_CLIP_NORM),
            latent_sharing: LatentSharing::PerObservation,
        }
    }

    pub fn validate(&self, n_data: usize) -> Result<()> {
        if self.epochs < 1 {
            return Err(IslError::InvalidParameter("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(IslError::InvalidParameter("learning rate must be > 0".into()));
        }
        self.isl.validate()?;
        self.schedule.validate()?;
        if n_data < self.isl.batch_size {
            return Err(IslError::InvalidParameter(format!(
                "need N >= M, got N = {n_data}, M = {}",
                self.isl.batch_size
            )));
        }
        Ok(())
    }
}

/// How latent draws are shared within a mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentSharing {
    /// One set of `K` draws for the whole batch.
    Shared,
    /// A fresh set of `K` draws for every observation.
    PerObservation,
}

impl std::str::FromStr for LatentSharing {
    type Err = IslError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(Self::Shared),
            "per_observation" | "per-observation" => Ok(Self::PerObservation),
            _ => Err(IslError::InvalidParameter(format!("unknown latent sharing {s:?}"))),
        }
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub current_k: usize,
    /// Mean surrogate loss over the epoch's iterations.
    pub surrogate_loss: f64,
    /// Distance of the end-of-epoch hard rank histogram from uniform.
    pub theoretical_loss: f64,
    /// χ² statistic of the last uniformity gate run during the epoch.
    pub chi_square_statistic: Option<f64>,
    /// Whether that gate accepted.
    pub accepted: bool,
    /// Iterations whose gradient was clipped.
    pub clipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
    /// Mini-batches are drawn without replacement and reshuffled each epoch.
    pub batching: String,
    pub checkpoint: Option<String>,
}

impl RunLog {
    pub fn final_k(&self) -> Option<usize> {
        self.records.last().map(|r| r.current_k)
    }

    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Hard rank histogram of `data` with a fresh set of `k` generator samples
/// per observation.
pub fn rank_histogram_fresh(
    generator: &Generator,
    theta: &[f64],
    noise: &NoiseSource,
    data: &[f64],
    k: usize,
    rng: &mut NoiseStream,
) -> Result<RankHistogram> {
    let z = noise.sample(data.len() * k, rng);
    let samples = generator.apply(theta, &z)?;
    let mut it = samples.chunks_exact(k);
    Ok(RankHistogram::from_observations(k, data, || it.next().expect("one chunk per datum").to_vec()))
}

/// Trains `g_θ` on `data`. Returns the final parameters and the per-epoch log.
pub fn train_1d(
    gen_spec: &MlpSpec,
    noise: &NoiseSource,
    data: &[f64],
    cfg: &TrainConfig,
) -> Result<(ParamVector, RunLog)> {
    let generator = Generator::new(gen_spec.clone())?;
    let theta = generator.init_params(&mut rng::stream(cfg.seed, Stream::Init));
    train_1d_from(&generator, theta, noise, data, cfg)
}

/// As [`train_1d`], starting from the given parameters.
pub fn train_1d_from(
    generator: &Generator,
    mut theta: ParamVector,
    noise: &NoiseSource,
    data: &[f64],
    cfg: &TrainConfig,
) -> Result<(ParamVector, RunLog)> {
    cfg.validate(data.len())?;
    generator.check_params(&theta)?;
    if data.iter().any(|y| !y.is_finite()) {
        return Err(IslError::InvalidParameter("training data contains non-finite values".into()));
    }

    let mut adam = AdamState::new(theta.len(), cfg.learning_rate);
    let mut batch_rng = rng::stream(cfg.seed, Stream::Batching);
    let mut noise_rng = rng::stream(noise.seed, Stream::ModelNoise);
    let mut gate_rng = rng::stream(cfg.seed, Stream::Gate);

    let m = cfg.isl.batch_size;
    let iters_per_epoch = data.len() / m;
    let mut stage = 0usize;
    let mut iteration = 0usize;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = RunLog { batching: "without replacement, reshuffled per epoch".into(), ..RunLog::default() };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut batch_rng);
        let mut loss_sum = 0.0;
        let mut clipped = 0;
        let mut gate: Option<(f64, bool)> = None;

        for batch in order.chunks_exact(m).take(iters_per_epoch) {
            let k = cfg.schedule.k_values[stage];
            let isl = cfg.isl.with_k(k);
            let y: Vec<f64> = batch.iter().map(|&i| data[i]).collect();
            let rows = match cfg.latent_sharing {
                LatentSharing::Shared => 1,
                LatentSharing::PerObservation => m,
            };
            let z = noise.sample(rows * k, &mut noise_rng);

            let step = value_and_grad(&theta.values, |t| {
                let d = t.constant(Matrix::column(y));
                let zv = t.constant(Matrix::column(z));
                let s = generator.mlp().forward::<NoiseStream>(t, zv, None);
                let s = t.reshape(s, rows, k);
                surrogate_loss(t, d, s, &isl)
            });
            let (loss, mut g) = step.map_err(|e| IslError::Diverged {
                epoch,
                k,
                theta_norm: theta.norm(),
                reason: e.to_string(),
            })?;
            if !loss.is_finite() {
                return Err(IslError::Diverged { epoch, k, theta_norm: theta.norm(), reason: "non-finite loss".into() });
            }
            if let Some(c) = cfg.clip_norm {
                if clip_global_norm(&mut g, c) {
                    clipped += 1;
                }
            }
            adam.step(&mut theta.values, &g).map_err(|e| IslError::Diverged {
                epoch,
                k,
                theta_norm: theta.norm(),
                reason: e.to_string(),
            })?;
            loss_sum += loss;
            iteration += 1;

            if iteration % cfg.schedule.test_period == 0 {
                let hist = rank_histogram_fresh(generator, &theta.values, noise, data, k, &mut gate_rng)?;
                let report = chi_square_uniformity(&hist, cfg.schedule.significance)?;
                stage = k_gate(&hist, &cfg.schedule, stage)?;
                gate = Some((report.statistic, report.accept));
            }
        }

        let k = cfg.schedule.k_values[stage];
        let hist = rank_histogram_fresh(generator, &theta.values, noise, data, k, &mut gate_rng)?;
        log.records.push(EpochRecord {
            epoch,
            current_k: k,
            surrogate_loss: loss_sum / iters_per_epoch.max(1) as f64,
            theoretical_loss: theoretical_isl(&hist, cfg.isl.norm_order)?,
            chi_square_statistic: gate.map(|g| g.0),
            accepted: gate.is_some_and(|g| g.1),
            clipped,
        });
    }
    Ok((theta, log))
}

/// `n` samples `g_θ(zᵢ)` with `z` from the evaluation stream of `noise`.
pub fn evaluate_generator(theta: &ParamVector, spec: &MlpSpec, noise: &NoiseSource, n: usize) -> Result<Vec<f64>> {
    let generator = Generator::new(spec.clone())?;
    generator.check_params(theta)?;
    let z = noise.sample(n, &mut rng::stream(noise.seed, Stream::Evaluation));
    generator.apply(&theta.values, &z)
}
