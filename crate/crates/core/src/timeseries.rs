//! RNN-conditioned generators for time series.
//!
//! A stacked Elman RNN summarizes the past into `h[t]`; the generator maps
//! `(z, h[t])` to a draw of `y[t]`. Training feeds observed values into the
//! RNN (teacher forcing) and pools soft rank counts over a window of time
//! steps, one soft histogram per series dimension. Forecasting feeds the
//! model's own draws back in.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::NoiseSource;
use crate::error::{IslError, Result};
use crate::loss::{surrogate_from_counts, IslConfig};
use crate::nn::{
    clip_global_norm, Activation, AdamState, LayoutBuilder, Matrix, Mlp, MlpSpec, ParamVector, Rnn, RnnSpec,
    RnnState, Tape, TensorLayout, Var,
};
use crate::rng::{self, NoiseStream, Stream};
use crate::stats::{chi_square_uniformity, rank_statistic, RankHistogram, DEFAULT_SIGNIFICANCE};
use crate::trainer::{EpochRecord, LatentSharing, RunLog, DEFAULT_CLIP_NORM};

pub const DEFAULT_TRAJECTORIES: usize = 200;
pub const DEFAULT_RHO: [f64; 3] = [0.1, 0.5, 0.9];

/// Architecture of a temporal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalModelSpec {
    /// Series dimension `d`.
    pub dim: usize,
    pub rnn: RnnSpec,
    /// Maps `[z, h]` (width `1 + hidden`) to `d` outputs.
    pub generator: MlpSpec,
}

impl TemporalModelSpec {
    pub fn new(
        dim: usize,
        hidden: usize,
        rnn_layers: usize,
        rnn_activation: Activation,
        gen_hidden: &[usize],
        gen_activation: Activation,
    ) -> Self {
        Self {
            dim,
            rnn: RnnSpec { input_width: dim, hidden_width: hidden, num_layers: rnn_layers, activation: rnn_activation },
            generator: MlpSpec::new(1 + hidden, gen_hidden, dim, gen_activation),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rnn.validate()?;
        self.generator.validate()?;
        if self.dim == 0 || self.rnn.input_width != self.dim {
            return Err(IslError::InvalidParameter(format!(
                "RNN input width {} must equal the series dimension {}",
                self.rnn.input_width, self.dim
            )));
        }
        if self.generator.input_width() != 1 + self.rnn.hidden_width {
            return Err(IslError::InvalidParameter(format!(
                "generator input width {} must be 1 + hidden width {}",
                self.generator.input_width(),
                self.rnn.hidden_width
            )));
        }
        if self.generator.output_width() != self.dim {
            return Err(IslError::InvalidParameter(format!(
                "generator output width {} must equal the series dimension {}",
                self.generator.output_width(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// RNN plus conditional generator, with parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalModel {
    spec: TemporalModelSpec,
    rnn: Rnn,
    mlp: Mlp,
    layout: Vec<TensorLayout>,
    fan_in: Vec<usize>,
    pub params: ParamVector,
}

/// Serializable form of a [`TemporalModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalCheckpoint {
    pub spec: TemporalModelSpec,
    pub params: ParamVector,
}

impl TemporalModel {
    fn bind(spec: TemporalModelSpec) -> Result<(Rnn, Mlp, Vec<TensorLayout>, Vec<usize>)> {
        spec.validate()?;
        let mut b = LayoutBuilder::new();
        let rnn = spec.rnn.build(&mut b, "");
        let mlp = spec.generator.build(&mut b, "gen.");
        let mut fan_in = rnn.fan_in().to_vec();
        fan_in.extend_from_slice(mlp.fan_in());
        Ok((rnn, mlp, b.finish(), fan_in))
    }

    /// Random initialization from the `Init` stream of `seed`.
    pub fn new(spec: TemporalModelSpec, seed: u64) -> Result<Self> {
        let (rnn, mlp, layout, fan_in) = Self::bind(spec.clone())?;
        let params = ParamVector::init_uniform(layout.clone(), &fan_in, &mut rng::stream(seed, Stream::Init));
        Ok(Self { spec, rnn, mlp, layout, fan_in, params })
    }

    pub fn with_params(spec: TemporalModelSpec, params: ParamVector) -> Result<Self> {
        let (rnn, mlp, layout, fan_in) = Self::bind(spec.clone())?;
        params.validate()?;
        if params.layout != layout {
            return Err(IslError::Shape { op: "temporal_model", detail: "parameter layout does not match".into() });
        }
        Ok(Self { spec, rnn, mlp, layout, fan_in, params })
    }

    pub fn spec(&self) -> &TemporalModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn layout(&self) -> &[TensorLayout] {
        &self.layout
    }

    pub fn fan_in(&self) -> &[usize] {
        &self.fan_in
    }

    pub fn checkpoint(&self) -> TemporalCheckpoint {
        TemporalCheckpoint { spec: self.spec.clone(), params: self.params.clone() }
    }

    pub fn from_checkpoint(c: TemporalCheckpoint) -> Result<Self> {
        Self::with_params(c.spec, c.params)
    }

    /// Advances the RNN by one input row per batch member.
    pub fn step_values(&self, input: &Matrix, state: &RnnState) -> Result<RnnState> {
        self.rnn.step_values(&self.params.values, input, state)
    }

    /// Generator outputs for `k` latent draws per row of `h`, rows grouped
    /// by batch member: `(B·k) × d`.
    pub fn sample_values(&self, h: &Matrix, z: &[f64], k: usize) -> Result<Matrix> {
        if z.len() != h.rows * k {
            return Err(IslError::Shape { op: "sample", detail: format!("{} latents for {}×{k}", z.len(), h.rows) });
        }
        let mut tape = Tape::new(&self.params.values);
        let hv = tape.constant(h.clone());
        let out = self.sample_on_tape(&mut tape, hv, z, k);
        tape.check()?;
        Ok(tape.value(out).clone())
    }

    fn sample_on_tape(&self, tape: &mut Tape<'_>, h: Var, z: &[f64], k: usize) -> Var {
        let zv = tape.constant(Matrix::column(z.to_vec()));
        let hr = tape.repeat_rows(h, k);
        let input = tape.concat_cols(zv, hr);
        self.mlp.forward::<NoiseStream>(tape, input, None)
    }
}

/// A collection of series, each `T × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBatch {
    pub sequences: Vec<Matrix>,
    pub ids: Vec<Option<String>>,
    /// Present when the values were standardized on ingestion.
    pub scaling: Option<Vec<Standardization>>,
}

/// Per-series, per-dimension z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(series: &Matrix) -> Self {
        let t = series.rows.max(1) as f64;
        let mut mean = vec![0.0; series.cols];
        let mut std = vec![0.0; series.cols];
        for j in 0..series.cols {
            let m = (0..series.rows).map(|r| series.get(r, j)).sum::<f64>() / t;
            let v = (0..series.rows).map(|r| (series.get(r, j) - m).powi(2)).sum::<f64>() / t;
            mean[j] = m;
            // constant columns are only centered
            std[j] = if v > 0.0 { v.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        self.map(x, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, x: &Matrix) -> Matrix {
        self.map(x, |v, m, s| v * s + m)
    }

    fn map(&self, x: &Matrix, f: impl Fn(f64, f64, f64) -> f64) -> Matrix {
        let mut out = x.clone();
        for r in 0..x.rows {
            for c in 0..x.cols {
                out.set(r, c, f(x.get(r, c), self.mean[c], self.std[c]));
            }
        }
        out
    }
}

impl SeriesBatch {
    pub fn new(sequences: Vec<Matrix>) -> Result<Self> {
        let ids = vec![None; sequences.len()];
        let b = Self { sequences, ids, scaling: None };
        b.validate()?;
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sequences.first().map_or(0, |s| s.cols)
    }

    pub fn min_len(&self) -> usize {
        self.sequences.iter().map(|s| s.rows).min().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(IslError::EmptyInput("series batch has no series".into()));
        }
        let d = self.dim();
        for (i, s) in self.sequences.iter().enumerate() {
            if s.cols != d || d == 0 {
                return Err(IslError::Shape { op: "series_batch", detail: format!("series {i} has dimension {}", s.cols) });
            }
            if s.rows == 0 {
                return Err(IslError::EmptyInput(format!("series {i} is empty")));
            }
            if !s.is_finite() {
                return Err(IslError::InvalidParameter(format!("series {i} contains non-finite values")));
            }
        }
        if self.ids.len() != self.sequences.len() {
            return Err(IslError::Shape { op: "series_batch", detail: "one id per series".into() });
        }
        Ok(())
    }

    /// Z-scores every series; the parameters are kept for [`Self::destandardize`].
    pub fn standardize(&self) -> Self {
        let scaling: Vec<Standardization> = self.sequences.iter().map(Standardization::fit).collect();
        let sequences = self.sequences.iter().zip(&scaling).map(|(s, z)| z.apply(s)).collect();
        Self { sequences, ids: self.ids.clone(), scaling: Some(scaling) }
    }

    pub fn destandardize(&self) -> Self {
        match &self.scaling {
            None => self.clone(),
            Some(sc) => Self {
                sequences: self.sequences.iter().zip(sc).map(|(s, z)| z.invert(s)).collect(),
                ids: self.ids.clone(),
                scaling: None,
            },
        }
    }

    /// Long-format CSV: `series,t,value` (or `value_0..value_{d-1}`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| IslError::Io(e.to_string()))?;
        let d = self.dim();
        let mut header = vec!["series".to_string(), "t".to_string()];
        if d == 1 {
            header.push("value".into());
        } else {
            header.extend((0..d).map(|j| format!("value_{j}")));
        }
        w.write_record(&header).map_err(|e| IslError::Io(e.to_string()))?;
        for (i, s) in self.sequences.iter().enumerate() {
            let id = self.ids[i].clone().unwrap_or_else(|| i.to_string());
            for t in 0..s.rows {
                let mut rec = vec![id.clone(), t.to_string()];
                rec.extend(s.row_slice(t).iter().map(|v| format!("{v:?}")));
                w.write_record(&rec).map_err(|e| IslError::Io(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates `X_t = Σ φᵢ X_{t−i} + ξ_t`, `ξ_t ~ N(0, noise_std²)`.
///
/// `initial` fixes the first values of every series; earlier lags are zero.
pub fn ar_generate<R: Rng + ?Sized>(
    phi: &[f64],
    noise_std: f64,
    t: usize,
    n_series: usize,
    initial: &[f64],
    rng: &mut R,
) -> Result<SeriesBatch> {
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(IslError::InvalidParameter(format!("noise std must be >= 0, got {noise_std}")));
    }
    if t == 0 || n_series == 0 {
        return Err(IslError::InvalidParameter("need T >= 1 and at least one series".into()));
    }
    let sequences = (0..n_series)
        .map(|_| {
            let mut x = vec![0.0; t];
            for i in 0..t {
                x[i] = if i < initial.len() {
                    initial[i]
                } else {
                    let ar: f64 = phi.iter().enumerate().filter(|(l, _)| *l < i).map(|(l, p)| p * x[i - 1 - l]).sum();
                    let e: f64 = rng.sample(rand_distr::StandardNormal);
                    ar + noise_std * e
                };
            }
            Matrix::column(x)
        })
        .collect();
    SeriesBatch::new(sequences)
}

/// Hard rank of each `y[t][j]` among `k` conditional draws, with the RNN
/// fed the observed past (zero token at `t = 0`). Returns `T` rows of `d`.
pub fn temporal_statistics<R: Rng + ?Sized>(
    model: &TemporalModel,
    noise: &NoiseSource,
    series: &Matrix,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let d = model.dim();
    if series.cols != d {
        return Err(IslError::Shape { op: "temporal_statistics", detail: format!("series has {} columns, model {d}", series.cols) });
    }
    let mut state = RnnState::zeros(&model.spec.rnn, 1);
    let mut input = Matrix::zeros(1, d);
    let mut out = Vec::with_capacity(series.rows);
    for t in 0..series.rows {
        state = model.step_values(&input, &state)?;
        let z = noise.sample(k, rng);
        let draws = model.sample_values(state.top(), &z, k)?;
        let y = series.row_slice(t);
        out.push(
            (0..d)
                .map(|j| {
                    let col: Vec<f64> = (0..k).map(|i| draws.get(i, j)).collect();
                    rank_statistic(y[j], &col)
                })
                .collect(),
        );
        input = Matrix::row(y.to_vec());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalTrainConfig {
    /// Time steps per training window.
    pub window: usize,
    /// Series per mini-batch.
    pub batch_size: usize,
    /// `K`, α, ν and ℓ; `isl.batch_size` is ignored.
    pub isl: IslConfig,
    pub epochs: usize,
    /// Mini-batches per epoch; `None` means `max(1, N / M)`.
    pub iterations_per_epoch: Option<usize>,
    pub learning_rate: f64,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    pub latent_sharing: LatentSharing,
}

impl TemporalTrainConfig {
    pub fn new(window: usize, batch_size: usize, k: usize, epochs: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            window,
            batch_size,
            isl: IslConfig { k, ..IslConfig::default() },
            epochs,
            iterations_per_epoch: None,
            learning_rate,
            seed,
            clip_norm: Some(DEFAULT_CLIP_NORM),
            latent_sharing: LatentSharing::PerObservation,
        }
    }

    pub fn validate(&self, data: &SeriesBatch) -> Result<()> {
        data.validate()?;
        self.isl.validate()?;
        if self.window < 1 || self.window > data.min_len() {
            return Err(IslError::InvalidParameter(format!(
                "window must be in 1..={}, got {}",
                data.min_len(),
                self.window
            )));
        }
        if self.batch_size < 1 || self.batch_size > data.len() {
            return Err(IslError::InvalidParameter(format!(
                "batch size must be in 1..={}, got {}",
                data.len(),
                self.batch_size
            )));
        }
        if self.epochs < 1 {
            return Err(IslError::InvalidParameter("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(IslError::InvalidParameter("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Teacher-forced inputs and targets for one training window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// RNN state after the warm-up prefix.
    pub start: RnnState,
    /// `inputs[t]` is `B × d`, fed before predicting `targets[t]`.
    pub inputs: Vec<Matrix>,
    pub targets: Vec<Matrix>,
}

impl WindowBatch {
    /// Window `[offset, offset + w)` of the chosen series. The prefix before
    /// `offset` is run through the RNN without gradient.
    pub fn build(model: &TemporalModel, data: &SeriesBatch, members: &[usize], offset: usize, w: usize) -> Result<Self> {
        let d = model.dim();
        let b = members.len();
        let input_at = |t: usize| -> Matrix {
            let mut m = Matrix::zeros(b, d);
            if t > 0 {
                for (r, &i) in members.iter().enumerate() {
                    for j in 0..d {
                        m.set(r, j, data.sequences[i].get(t - 1, j));
                    }
                }
            }
            m
        };
        let mut start = RnnState::zeros(&model.spec.rnn, b);
        for t in 0..offset {
            start = model.step_values(&input_at(t), &start)?;
        }
        let inputs = (offset..offset + w).map(input_at).collect();
        let targets = (offset..offset + w).map(|t| input_at(t + 1)).collect();
        Ok(Self { start, inputs, targets })
    }

    pub fn batch(&self) -> usize {
        self.start.layers.first().map_or(0, |m| m.rows)
    }
}

/// Soft counts per dimension for every (t, series) in the window, in
/// t-major order, plus the matching generator draws.
pub fn window_soft_counts(
    tape: &mut Tape<'_>,
    model: &TemporalModel,
    win: &WindowBatch,
    z: &[Vec<f64>],
    cfg: &IslConfig,
) -> (Vec<Var>, Vec<Var>) {
    let d = model.dim();
    let b = win.batch();
    let k = cfg.k;
    let mut state: Vec<Var> = win.start.layers.iter().map(|m| tape.constant(m.clone())).collect();
    let mut per_dim: Vec<Vec<Var>> = vec![Vec::new(); d];
    let mut draws = Vec::new();
    for (t, (x, y)) in win.inputs.iter().zip(&win.targets).enumerate() {
        let xv = tape.constant(x.clone());
        state = model.rnn.step(tape, xv, &state);
        let h = *state.last().expect("at least one layer");
        let s = model.sample_on_tape(tape, h, &z[t], k);
        draws.push(s);
        for (j, counts) in per_dim.iter_mut().enumerate() {
            let col = tape.col(s, j);
            let samples = tape.reshape(col, b, k);
            let yj = tape.constant(Matrix::column((0..b).map(|r| y.get(r, j)).collect()));
            counts.push(tape.soft_count(yj, samples, cfg.alpha));
        }
    }
    let counts = per_dim.iter().map(|c| tape.concat_rows(c)).collect();
    (counts, draws)
}

/// Mean over dimensions of the per-dimension loss on pooled counts.
pub fn window_loss(tape: &mut Tape<'_>, model: &TemporalModel, win: &WindowBatch, z: &[Vec<f64>], cfg: &IslConfig) -> Var {
    let (counts, _) = window_soft_counts(tape, model, win, z, cfg);
    let losses: Vec<Var> =
        counts.iter().map(|&c| surrogate_from_counts(tape, c, cfg.k, cfg.nu, cfg.norm_order)).collect();
    tape.mean_of(&losses)
}

fn draw_window_latents(
    noise: &NoiseSource,
    w: usize,
    b: usize,
    k: usize,
    sharing: LatentSharing,
    rng: &mut NoiseStream,
) -> Vec<Vec<f64>> {
    (0..w)
        .map(|_| match sharing {
            LatentSharing::PerObservation => noise.sample(b * k, rng),
            LatentSharing::Shared => noise.sample(k, rng).repeat(b),
        })
        .collect()
}

/// Trains RNN and generator jointly. Returns the final parameters and a
/// per-epoch log whose rank diagnostics come from the hard ranks of the
/// training draws at the fixed `K`.
pub fn train_temporal(
    model: &TemporalModel,
    noise: &NoiseSource,
    data: &SeriesBatch,
    cfg: &TemporalTrainConfig,
) -> Result<(ParamVector, RunLog)> {
    cfg.validate(data)?;
    if data.dim() != model.dim() {
        return Err(IslError::Shape {
            op: "train_temporal",
            detail: format!("data dimension {}, model {}", data.dim(), model.dim()),
        });
    }
    let mut model = model.clone();
    let mut adam = AdamState::new(model.params.len(), cfg.learning_rate);
    let mut batch_rng = rng::stream(cfg.seed, Stream::Batching);
    let mut noise_rng = rng::stream(noise.seed, Stream::ModelNoise);
    let (m, w, k) = (cfg.batch_size, cfg.window, cfg.isl.k);
    let iters = cfg.iterations_per_epoch.unwrap_or((data.len() / m).max(1));
    let max_offset = data.min_len() - w;
    let mut log = RunLog { batching: "series without replacement per iteration, uniform window offset".into(), ..RunLog::default() };

    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut clipped = 0;
        let mut hist = RankHistogram::new(k);
        for _ in 0..iters {
            let members = index::sample(&mut batch_rng, data.len(), m).into_vec();
            let offset = batch_rng.random_range(0..=max_offset);
            let win = WindowBatch::build(&model, data, &members, offset, w)?;
            let z = draw_window_latents(noise, w, m, k, cfg.latent_sharing, &mut noise_rng);

            let theta = model.params.values.clone();
            let mut tape = Tape::new(&theta);
            let (counts, draws) = window_soft_counts(&mut tape, &model, &win, &z, &cfg.isl);
            let losses: Vec<Var> = counts
                .iter()
                .map(|&c| surrogate_from_counts(&mut tape, c, k, cfg.isl.nu, cfg.isl.norm_order))
                .collect();
            let out = tape.mean_of(&losses);
            let theta_norm = model.params.norm();
            let diverged = |reason: String| IslError::Diverged { epoch, k, theta_norm, reason };
            let loss = tape.scalar(out);
            let mut g = tape.backward(out).map_err(|e| diverged(e.to_string()))?;
            if !loss.is_finite() {
                return Err(diverged("non-finite loss".into()));
            }
            for (s, y) in draws.iter().zip(&win.targets) {
                let s = tape.value(*s);
                for r in 0..m {
                    for j in 0..model.dim() {
                        let col: Vec<f64> = (0..k).map(|i| s.get(r * k + i, j)).collect();
                        hist.add(rank_statistic(y.get(r, j), &col));
                    }
                }
            }
            drop(tape);
            if let Some(c) = cfg.clip_norm {
                if clip_global_norm(&mut g, c) {
                    clipped += 1;
                }
            }
            adam.step(&mut model.params.values, &g).map_err(|e| diverged(e.to_string()))?;
            loss_sum += loss;
        }
        let report = chi_square_uniformity(&hist, DEFAULT_SIGNIFICANCE)?;
        log.records.push(EpochRecord {
            epoch,
            current_k: k,
            surrogate_loss: loss_sum / iters as f64,
            theoretical_loss: crate::loss::theoretical_isl(&hist, cfg.isl.norm_order)?,
            chi_square_statistic: Some(report.statistic),
            accepted: report.accept,
            clipped,
        });
    }
    Ok((model.params, log))
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn empirical_quantile(sorted: &[f64], rho: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * rho;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSummary {
    pub rho: f64,
    /// `τ × d`.
    pub values: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    /// Conditioning length `τ₀`.
    pub tau0: usize,
    pub horizon: usize,
    pub dim: usize,
    /// `S` trajectories, each `τ × d`.
    pub trajectories: Vec<Matrix>,
    pub quantiles: Vec<QuantileSummary>,
}

impl ForecastResult {
    pub fn from_trajectories(tau0: usize, trajectories: Vec<Matrix>, rho_levels: &[f64]) -> Result<Self> {
        let first = trajectories.first().ok_or_else(|| IslError::EmptyInput("no trajectories".into()))?;
        let (horizon, dim) = first.shape();
        if trajectories.iter().any(|t| t.shape() != (horizon, dim)) {
            return Err(IslError::Shape { op: "forecast", detail: "trajectories differ in shape".into() });
        }
        let mut r = Self { tau0, horizon, dim, trajectories, quantiles: Vec::new() };
        r.quantiles = rho_levels.iter().map(|&rho| Ok(QuantileSummary { rho, values: r.quantile(rho)? })).collect::<Result<_>>()?;
        Ok(r)
    }

    /// Per-step, per-dimension empirical `ρ`-quantile across trajectories.
    pub fn quantile(&self, rho: f64) -> Result<Matrix> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(IslError::Domain(format!("quantile level {rho} outside [0, 1]")));
        }
        let mut out = Matrix::zeros(self.horizon, self.dim);
        let mut buf = Vec::with_capacity(self.trajectories.len());
        for t in 0..self.horizon {
            for j in 0..self.dim {
                buf.clear();
                buf.extend(self.trajectories.iter().map(|m| m.get(t, j)));
                buf.sort_by(f64::total_cmp);
                out.set(t, j, empirical_quantile(&buf, rho));
            }
        }
        Ok(out)
    }

    /// Trajectories as CSV rows `trajectory,t,value...`.
    pub fn trajectories_csv(&self) -> String {
        let mut s = String::from("trajectory,t");
        for j in 0..self.dim {
            s.push_str(&format!(",value_{j}"));
        }
        s.push('\n');
        for (i, m) in self.trajectories.iter().enumerate() {
            for t in 0..self.horizon {
                s.push_str(&format!("{i},{t}"));
                for v in m.row_slice(t) {
                    s.push_str(&format!(",{v:?}"));
                }
                s.push('\n');
            }
        }
        s
    }
}

const FORECAST_CHUNK: usize = 32;

/// Conditions on `history` (`τ₀ × d`) and samples `n_trajectories` recursive
/// continuations of length `horizon`. Trajectory `i` draws its latents from
/// substream `i` of the forecast stream of `seed`.
pub fn forecast(
    model: &TemporalModel,
    noise: &NoiseSource,
    history: &Matrix,
    horizon: usize,
    n_trajectories: usize,
    rho_levels: &[f64],
    seed: u64,
) -> Result<ForecastResult> {
    let d = model.dim();
    if history.rows == 0 || history.cols != d {
        return Err(IslError::Shape {
            op: "forecast",
            detail: format!("history {}x{}, model dimension {d}", history.rows, history.cols),
        });
    }
    if horizon == 0 || n_trajectories == 0 {
        return Err(IslError::InvalidParameter("horizon and trajectory count must be positive".into()));
    }
    let mut state = RnnState::zeros(&model.spec.rnn, 1);
    let mut input = Matrix::zeros(1, d);
    for t in 0..history.rows {
        state = model.step_values(&input, &state)?;
        input = Matrix::row(history.row_slice(t).to_vec());
    }

    let starts: Vec<usize> = (0..n_trajectories).step_by(FORECAST_CHUNK).collect();
    let chunks: Vec<Vec<Matrix>> = starts
        .par_iter()
        .map(|&s0| {
            let ids: Vec<usize> = (s0..(s0 + FORECAST_CHUNK).min(n_trajectories)).collect();
            let b = ids.len();
            let mut rngs: Vec<NoiseStream> = ids.iter().map(|&i| rng::substream(seed, Stream::Forecast, i as u64)).collect();
            let mut st = RnnState { layers: state.layers.iter().map(|m| m.row_slice(0).repeat(b)).map(|v| Matrix::from_vec(b, v.len() / b, v)).collect() };
            let mut x = Matrix::from_vec(b, d, input.data.repeat(b));
            let mut paths = vec![Matrix::zeros(horizon, d); b];
            for t in 0..horizon {
                st = model.step_values(&x, &st)?;
                let z: Vec<f64> = rngs.iter_mut().map(|r| noise.sample_one(r)).collect();
                let y = model.sample_values(st.top(), &z, 1)?;
                for (r, p) in paths.iter_mut().enumerate() {
                    for j in 0..d {
                        p.set(t, j, y.get(r, j));
                    }
                }
                x = y;
            }
            Ok(paths)
        })
        .collect::<Result<_>>()?;
    ForecastResult::from_trajectories(history.rows, chunks.into_iter().flatten().collect(), rho_levels)
}

/// How CSV columns map to series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Each value column is a separate univariate series.
    Columns,
    /// The value columns together form one `d`-dimensional series.
    Multivariate,
    /// Rows are grouped by this key column; value columns form the dimensions.
    ByKey(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvLayout {
    pub delimiter: u8,
    /// Rows are sorted by this column when present (within each group).
    pub time_column: Option<String>,
    /// Empty means every column other than the time and key columns.
    pub value_columns: Vec<String>,
    pub grouping: Grouping,
    pub standardize: bool,
}

impl Default for CsvLayout {
    fn default() -> Self {
        Self { delimiter: b',', time_column: None, value_columns: Vec::new(), grouping: Grouping::Columns, standardize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Data rows skipped because a needed value was missing.
    pub dropped_rows: usize,
    /// 1-based file line numbers of the dropped rows.
    pub dropped_lines: Vec<usize>,
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | "?")
}

/// Reads series from a headed CSV file.
pub fn ingest_csv(path: &Path, layout: &CsvLayout) -> Result<(SeriesBatch, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(layout.delimiter)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| IslError::Ingestion(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> =
        rdr.headers().map_err(|e| IslError::Ingestion(e.to_string()))?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| IslError::Ingestion(format!("no column named {name:?}")))
    };
    let time_idx = layout.time_column.as_deref().map(find).transpose()?;
    let key_idx = match &layout.grouping {
        Grouping::ByKey(k) => Some(find(k)?),
        _ => None,
    };
    let value_idx: Vec<usize> = if layout.value_columns.is_empty() {
        (0..headers.len()).filter(|i| Some(*i) != time_idx && Some(*i) != key_idx).collect()
    } else {
        layout.value_columns.iter().map(|c| find(c)).collect::<Result<_>>()?
    };
    if value_idx.is_empty() {
        return Err(IslError::Ingestion("no value columns".into()));
    }

    let mut report = IngestReport { dropped_rows: 0, dropped_lines: Vec::new() };
    let mut bad: Vec<String> = Vec::new();
    // (key, time, values)
    let mut rows: Vec<(String, f64, Vec<f64>)> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let field = |i: usize| rec.get(i).unwrap_or("");
        if value_idx.iter().chain(time_idx.iter()).any(|&i| is_missing(field(i))) {
            report.dropped_rows += 1;
            report.dropped_lines.push(line);
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = value_idx.iter().map(|&i| field(i).trim().parse::<f64>()).collect();
        let time = match time_idx {
            Some(i) => field(i).trim().parse::<f64>(),
            None => Ok(n as f64),
        };
        match (parsed, time) {
            (Ok(v), Ok(t)) if v.iter().all(|x| x.is_finite()) => {
                let key = key_idx.map(|i| field(i).trim().to_string()).unwrap_or_default();
                rows.push((key, t, v));
            }
            _ => bad.push(format!("line {line}: non-numeric value")),
        }
    }
    if !bad.is_empty() {
        let shown: Vec<&str> = bad.iter().take(10).map(String::as_str).collect();
        return Err(IslError::Ingestion(format!("{} unparseable rows: {}", bad.len(), shown.join("; "))));
    }
    if rows.is_empty() {
        return Err(IslError::Ingestion(format!("{} has no usable rows", path.display())));
    }

    let mut groups: BTreeMap<String, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (key, t, v) in rows {
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push((t, v));
    }
    let mut sequences = Vec::new();
    let mut ids = Vec::new();
    for key in order {
        let mut g = groups.remove(&key).expect("key recorded");
        g.sort_by(|a, b| a.0.total_cmp(&b.0));
        let t = g.len();
        let d = value_idx.len();
        let flat: Vec<f64> = g.into_iter().flat_map(|(_, v)| v).collect();
        let m = Matrix::from_vec(t, d, flat);
        match layout.grouping {
            Grouping::Columns => {
                for (j, &ci) in value_idx.iter().enumerate() {
                    sequences.push(Matrix::column((0..t).map(|r| m.get(r, j)).collect()));
                    ids.push(Some(headers[ci].clone()));
                }
            }
            Grouping::Multivariate => {
                sequences.push(m);
                ids.push(None);
            }
            Grouping::ByKey(_) => {
                sequences.push(m);
                ids.push(Some(key));
            }
        }
    }
    let batch = SeriesBatch { sequences, ids, scaling: None };
    batch.validate().map_err(|e| IslError::Ingestion(e.to_string()))?;
    Ok((if layout.standardize { batch.standardize() } else { batch }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{isl_loss, soft_histogram, surrogate_loss};
    use std::io::Write;

    fn small_spec(d: usize) -> TemporalModelSpec {
        TemporalModelSpec::new(d, 4, 2, Activation::Relu, &[6], Activation::Elu)
    }

    #[test]
    fn spec_wiring() {
        let s = small_spec(3);
        assert_eq!(s.generator.input_width(), 5);
        assert_eq!(s.generator.output_width(), 3);
        s.validate().unwrap();
        let mut bad = s.clone();
        bad.generator = MlpSpec::new(4, &[6], 3, Activation::Elu);
        assert!(bad.validate().is_err());
        let m = TemporalModel::new(s.clone(), 1).unwrap();
        let back = TemporalModel::from_checkpoint(serde_json::from_str(&serde_json::to_string(&m.checkpoint()).unwrap()).unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn ar_examples() {
        let mut r = rng::stream(1, Stream::Data);
        let c = ar_generate(&[1.0], 0.0, 50, 2, &[1.0], &mut r).unwrap();
        assert!(c.sequences.iter().all(|s| s.data.iter().all(|&x| x == 1.0)));

        let w = ar_generate(&[], 2.0, 100_000, 1, &[], &mut r).unwrap();
        let x = &w.sequences[0].data;
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 4.0).abs() < 0.1);
        assert!(ar_generate(&[0.5], -1.0, 10, 1, &[], &mut r).is_err());
    }

    #[test]
    fn ar2_lag1_autocorrelation() {
        let mut r = rng::stream(2, Stream::Data);
        let b = ar_generate(&[0.5, 0.2], 1.0, 1_000_000, 1, &[], &mut r).unwrap();
        let x = &b.sequences[0].data[1000..];
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        let c1: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((c1 / c0 - 0.625).abs() < 0.01, "{}", c1 / c0);
    }

    #[test]
    fn constant_generator_ranks_at_k() {
        let spec = small_spec(1);
        let mut m = TemporalModel::new(spec, 0).unwrap();
        m.params.values.iter_mut().for_each(|v| *v = 0.0);
        let series = Matrix::column(vec![1.0; 20]);
        let noise = NoiseSource::standard_normal(0);
        let stats = temporal_statistics(&m, &noise, &series, 7, &mut rng::stream(0, Stream::Gate)).unwrap();
        assert!(stats.iter().all(|r| r == &vec![7]));
        assert!(temporal_statistics(&m, &noise, &Matrix::zeros(5, 2), 7, &mut rng::stream(0, Stream::Gate)).is_err());
    }

    /// Model whose output is `z` regardless of the history.
    fn history_blind(d: usize) -> TemporalModel {
        let spec = TemporalModelSpec::new(d, 3, 1, Activation::Tanh, &[], Activation::Identity);
        let mut m = TemporalModel::new(spec, 4).unwrap();
        let gen_w = m.layout().iter().find(|l| l.name == "gen.dense0.weight").unwrap().clone();
        let gen_b = m.layout().iter().find(|l| l.name == "gen.dense0.bias").unwrap().clone();
        for v in &mut m.params.values[gen_w.offset..gen_w.offset + gen_w.len()] {
            *v = 0.0;
        }
        for j in 0..d {
            m.params.values[gen_w.offset + j] = 1.0;
        }
        for v in &mut m.params.values[gen_b.offset..gen_b.offset + gen_b.len()] {
            *v = 0.0;
        }
        m
    }

    #[test]
    fn history_blind_model_is_calibrated_on_iid_data() {
        let m = history_blind(1);
        let noise = NoiseSource::standard_normal(0);
        let mut r = rng::stream(9, Stream::Data);
        let series = Matrix::column(noise.sample(20_000, &mut r));
        let stats = temporal_statistics(&m, &noise, &series, 5, &mut rng::stream(9, Stream::Gate)).unwrap();
        let mut h = RankHistogram::new(5);
        stats.iter().for_each(|s| h.add(s[0]));
        assert!(chi_square_uniformity(&h, 0.01).unwrap().accept);
    }

    #[test]
    fn window_loss_reduces_to_static_loss() {
        let m = history_blind(1);
        let mut r = rng::stream(3, Stream::Data);
        let data = SeriesBatch::new((0..4).map(|_| Matrix::column(NoiseSource::standard_normal(0).sample(30, &mut r))).collect()).unwrap();
        let cfg = IslConfig { k: 6, ..IslConfig::default() };
        let members = [2, 0, 3];
        let win = WindowBatch::build(&m, &data, &members, 5, 30 - 5).unwrap();
        let noise = NoiseSource::standard_normal(1);
        let z = draw_window_latents(&noise, 25, 3, 6, LatentSharing::PerObservation, &mut rng::stream(1, Stream::ModelNoise));

        let mut tape = Tape::new(&m.params.values);
        let temporal = window_loss(&mut tape, &m, &win, &z, &cfg);
        let temporal = tape.scalar(temporal);

        let pooled: Vec<f64> = (5..30).flat_map(|t| members.iter().map(move |&i| (i, t))).map(|(i, t)| data.sequences[i].get(t, 0)).collect();
        let samples: Vec<f64> = z.concat();
        let mut tape = Tape::new(&[]);
        let d = tape.constant(Matrix::column(pooled));
        let s = tape.constant(Matrix::from_vec(75, 6, samples));
        let stat = surrogate_loss(&mut tape, d, s, &cfg);
        assert!((tape.scalar(stat) - temporal).abs() < 1e-10);
    }

    #[test]
    fn multivariate_loss_is_mean_of_marginals() {
        let m = TemporalModel::new(small_spec(3), 8).unwrap();
        let mut r = rng::stream(4, Stream::Data);
        let data = SeriesBatch::new((0..3).map(|_| Matrix::from_vec(12, 3, NoiseSource::standard_normal(0).sample(36, &mut r))).collect()).unwrap();
        let cfg = IslConfig { k: 4, ..IslConfig::default() };
        let win = WindowBatch::build(&m, &data, &[0, 1, 2], 2, 10).unwrap();
        let noise = NoiseSource::standard_normal(1);
        let z = draw_window_latents(&noise, 10, 3, 4, LatentSharing::PerObservation, &mut rng::stream(2, Stream::ModelNoise));
        let mut tape = Tape::new(&m.params.values);
        let (counts, _) = window_soft_counts(&mut tape, &m, &win, &z, &cfg);
        let per_dim: Vec<f64> = counts
            .iter()
            .map(|&c| isl_loss(&soft_histogram(&tape.value(c).data, 4, cfg.nu), cfg.norm_order))
            .collect();
        let mut tape2 = Tape::new(&m.params.values);
        let joint = window_loss(&mut tape2, &m, &win, &z, &cfg);
        let mean = per_dim.iter().sum::<f64>() / 3.0;
        assert_eq!(tape2.scalar(joint), mean);
    }

    #[test]
    fn forecast_deterministic_generator_gives_identical_paths() {
        let mut m = TemporalModel::new(small_spec(1), 2).unwrap();
        // zero the latent column of the first generator layer
        let w = m.layout().iter().find(|l| l.name == "gen.dense0.weight").unwrap().clone();
        for c in 0..w.cols {
            m.params.values[w.offset + c] = 0.0;
        }
        let noise = NoiseSource::standard_normal(5);
        let hist = Matrix::column(vec![0.3, -0.1, 0.2]);
        let f = forecast(&m, &noise, &hist, 8, 50, &DEFAULT_RHO, 1).unwrap();
        assert!(f.trajectories.iter().all(|t| t == &f.trajectories[0]));
        assert_eq!(f.tau0, 3);
    }

    #[test]
    fn forecast_is_deterministic_and_quantiles_ordered() {
        let m = TemporalModel::new(small_spec(2), 3).unwrap();
        let noise = NoiseSource::standard_normal(5);
        let hist = Matrix::from_vec(4, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let a = forecast(&m, &noise, &hist, 6, 100, &DEFAULT_RHO, 11).unwrap();
        let b = forecast(&m, &noise, &hist, 6, 100, &DEFAULT_RHO, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.trajectories[0], a.trajectories[1]);
        let (lo, mid, hi) = (&a.quantiles[0].values, &a.quantiles[1].values, &a.quantiles[2].values);
        for i in 0..lo.len() {
            assert!(lo.data[i] <= mid.data[i] && mid.data[i] <= hi.data[i]);
        }
        assert!(forecast(&m, &noise, &Matrix::zeros(0, 2), 6, 10, &DEFAULT_RHO, 1).is_err());
    }

    #[test]
    fn forecast_median_matches_linear_gaussian_recursion() {
        // y[t+1] = 0.5 y[t] + z with a one-unit linear RNN passing the input through
        let spec = TemporalModelSpec::new(1, 1, 1, Activation::Relu, &[], Activation::Identity);
        let mut m = TemporalModel::new(spec, 0).unwrap();
        let set = |m: &mut TemporalModel, name: &str, vals: &[f64]| {
            let l = m.layout().iter().find(|l| l.name == name).unwrap().clone();
            m.params.values[l.offset..l.offset + l.len()].copy_from_slice(vals);
        };
        // relu(y + 10) stays linear for |y| < 10
        set(&mut m, "rnn0.w_input", &[1.0]);
        set(&mut m, "rnn0.w_hidden", &[0.0]);
        set(&mut m, "rnn0.bias", &[10.0]);
        set(&mut m, "gen.dense0.weight", &[1.0, 0.5]);
        set(&mut m, "gen.dense0.bias", &[-5.0]);
        let noise = NoiseSource::standard_normal(0);
        let f = forecast(&m, &noise, &Matrix::column(vec![0.0, 4.0]), 3, 20_000, &[0.5], 3).unwrap();
        // median of y[t] = 4·0.5^(t+1) with Gaussian noise of variance Σ 0.25^i
        for t in 0..3 {
            let want = 4.0 * 0.5f64.powi(t as i32 + 1);
            let sd: f64 = (0..=t).map(|i| 0.25f64.powi(i as i32)).sum::<f64>().sqrt();
            let got = f.quantiles[0].values.get(t, 0);
            assert!((got - want).abs() < 4.0 * 1.2533 * sd / (20_000f64).sqrt(), "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn short_training_run() {
        let mut r = rng::stream(5, Stream::Data);
        let data = ar_generate(&[0.5, 0.2], 0.1, 60, 6, &[], &mut r).unwrap().standardize();
        let model = TemporalModel::new(small_spec(1), 5).unwrap();
        let cfg = TemporalTrainConfig::new(10, 3, 5, 3, 1e-2, 5);
        let noise = NoiseSource::standard_normal(5);
        let (a, la) = train_temporal(&model, &noise, &data, &cfg).unwrap();
        let (b, lb) = train_temporal(&model, &noise, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.records.len(), 3);
        assert!(la.records.iter().all(|r| r.surrogate_loss.is_finite()));
        let bad = TemporalTrainConfig { window: 61, ..cfg };
        assert!(train_temporal(&model, &noise, &data, &bad).is_err());
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_single_column() {
        let body: String = std::iter::once("value".to_string()).chain((0..10).map(|i| i.to_string())).collect::<Vec<_>>().join("\n");
        let f = write_tmp(&body);
        let (b, rep) = ingest_csv(f.path(), &CsvLayout::default()).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.sequences[0].shape(), (10, 1));
        assert_eq!(rep.dropped_rows, 0);
    }

    #[test]
    fn ingest_wide_columns_and_multivariate() {
        let f = write_tmp("t,a,b,c\n1,1,2,3\n0,4,5,6\n2,7,,9\n3,1,1,1\n");
        let layout = CsvLayout { time_column: Some("t".into()), ..CsvLayout::default() };
        let (b, rep) = ingest_csv(f.path(), &layout).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(rep.dropped_rows, 1);
        assert_eq!(rep.dropped_lines, vec![4]);
        assert_eq!(b.sequences[0].data, vec![4.0, 1.0, 1.0]);
        let layout = CsvLayout { grouping: Grouping::Multivariate, ..layout };
        let (b, _) = ingest_csv(f.path(), &layout).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.dim(), 3);
    }

    #[test]
    fn ingest_by_key_and_errors() {
        let f = write_tmp("id;t;v\nb;1;2.5\na;0;1\nb;0;1.5\na;1;2\n");
        let layout = CsvLayout { delimiter: b';', time_column: Some("t".into()), grouping: Grouping::ByKey("id".into()), ..CsvLayout::default() };
        let (b, _) = ingest_csv(f.path(), &layout).unwrap();
        assert_eq!(b.ids, vec![Some("b".to_string()), Some("a".to_string())]);
        assert_eq!(b.sequences[0].data, vec![1.5, 2.5]);

        let f = write_tmp("v\n1\nabc\n3\n");
        let e = ingest_csv(f.path(), &CsvLayout::default()).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let f = write_tmp("v\n\n");
        assert!(ingest_csv(f.path(), &CsvLayout::default()).is_err());
        assert!(ingest_csv(Path::new("/nonexistent/file.csv"), &CsvLayout::default()).is_err());
    }

    #[test]
    fn standardize_round_trip() {
        let mut r = rng::stream(6, Stream::Data);
        let b = ar_generate(&[0.3], 5.0, 200, 3, &[100.0], &mut r).unwrap();
        let s = b.standardize();
        let m: f64 = s.sequences[0].data.iter().sum::<f64>() / 200.0;
        assert!(m.abs() < 1e-12);
        let back = s.destandardize();
        for (x, y) in b.sequences.iter().zip(&back.sequences) {
            for (p, q) in x.data.iter().zip(&y.data) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut r = rng::stream(7, Stream::Data);
        let b = ar_generate(&[0.5, 0.2], 0.1, 20, 3, &[], &mut r).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ar.csv");
        b.write_csv(&p).unwrap();
        let layout = CsvLayout { time_column: Some("t".into()), grouping: Grouping::ByKey("series".into()), ..CsvLayout::default() };
        let (back, _) = ingest_csv(&p, &layout).unwrap();
        assert_eq!(back.sequences, b.sequences);
    }
}
