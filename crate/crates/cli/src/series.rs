//! `synth-ar`, `train-ts` and `forecast`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use isl::metrics::{forecast_metrics_pooled, ForecastMetrics};
use isl::nn::Matrix;
use isl::rng::{self, Stream};
use isl::timeseries::{
    ar_generate, forecast, ingest_csv, train_temporal, CsvLayout, ForecastResult, Grouping, QuantileSummary, SeriesBatch,
    Standardization, TemporalModel, TemporalModelSpec, TemporalTrainConfig,
};
use isl::trainer::LatentSharing;
use isl::IslConfig;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Scaling, CHECKPOINT_FILE};
use crate::manifest::{now, Artifacts, RunManifest, MANIFEST_FILE};
use crate::{parse, resolve_out, Command, InputError};

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct SynthArArgs {
    /// AR coefficients φ₁,…,φ_p.
    #[arg(long, default_value = "0.5,0.2")]
    pub phi: String,
    /// Innovation variance (used unless --noise-std is given).
    #[arg(long, default_value_t = 0.01)]
    pub noise_var: f64,
    /// Innovation standard deviation; overrides --noise-var.
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Series length T.
    #[arg(long, default_value_t = 1000)]
    pub t: usize,
    #[arg(long, default_value_t = 200)]
    pub series: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SynthArArgs {
    pub fn noise_std(&self) -> Result<f64> {
        match self.noise_std {
            Some(s) => Ok(s),
            None if self.noise_var >= 0.0 => Ok(self.noise_var.sqrt()),
            None => bail!("--noise-var must be >= 0"),
        }
    }
}

pub fn synth_ar(a: &SynthArArgs) -> Result<SeriesBatch> {
    let phi = parse::list_f64(&a.phi)?;
    Ok(ar_generate(&phi, a.noise_std()?, a.t, a.series, &[], &mut rng::stream(a.seed, Stream::Data))?)
}

pub fn run_synth_ar(mut a: SynthArArgs) -> Result<()> {
    let started = now();
    let out = resolve_out(&a.out, "synth-ar");
    a.out = Some(out.clone());
    let batch = synth_ar(&a)?;
    let mut art = Artifacts::new(&out)?;
    batch.write_csv(&out.join("series.csv"))?;
    art.record("series.csv");
    let mut m = RunManifest::new(Command::SynthAr(a.clone()), a.seed, started);
    m.notes.push(format!("innovation std {:?}, zero initial conditions", a.noise_std()?));
    art.finish(m)?;
    println!("{} series x {} steps -> {}", a.series, a.t, out.join("series.csv").display());
    Ok(())
}

/// CSV layout flags shared by commands that read series.
#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct LayoutArgs {
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[arg(long)]
    pub time_column: Option<String>,
    /// Column whose values identify series (implies grouping by key).
    #[arg(long)]
    pub key_column: Option<String>,
    /// Comma-separated value columns; empty means all remaining columns.
    #[arg(long, default_value = "")]
    pub value_columns: String,
    /// `columns` or `multivariate` when no key column is given.
    #[arg(long, default_value = "columns")]
    pub grouping: String,
}

impl LayoutArgs {
    pub fn layout(&self) -> Result<CsvLayout> {
        if !self.delimiter.is_ascii() {
            bail!("delimiter must be ASCII");
        }
        let grouping = match (&self.key_column, self.grouping.as_str()) {
            (Some(k), _) => Grouping::ByKey(k.clone()),
            (None, "columns") => Grouping::Columns,
            (None, "multivariate") => Grouping::Multivariate,
            (None, g) => bail!("unknown grouping {g:?}"),
        };
        let value_columns =
            self.value_columns.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        Ok(CsvLayout {
            delimiter: self.delimiter as u8,
            time_column: self.time_column.clone(),
            value_columns,
            grouping,
            standardize: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct TrainTsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub layout: LayoutArgs,
    /// `global`, `series` or `none`.
    #[arg(long, default_value = "global")]
    pub scaling: String,
    /// Train on the first L steps of each series only.
    #[arg(long)]
    pub train_len: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub rnn_layers: usize,
    #[arg(long, default_value = "relu")]
    pub rnn_activation: String,
    #[arg(long, default_value = "16,16")]
    pub gen_hidden: String,
    #[arg(long, default_value = "elu")]
    pub gen_activation: String,
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    /// Series per mini-batch (defaults to min(N, 32)).
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Mini-batches per epoch (defaults to max(1, N / M)).
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = isl::loss::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = isl::loss::DEFAULT_NU)]
    pub nu: f64,
    #[arg(long, default_value = "2")]
    pub norm: String,
    #[arg(long, default_value = "per_observation")]
    pub latent: String,
    #[arg(long, default_value = "normal")]
    pub noise: String,
    #[arg(long, default_value_t = isl::trainer::DEFAULT_CLIP_NORM)]
    pub clip: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_series(path: &PathBuf, layout: &CsvLayout) -> Result<(SeriesBatch, isl::timeseries::IngestReport)> {
    if !path.exists() {
        return Err(InputError(format!("data file {} not found", path.display())).into());
    }
    Ok(ingest_csv(path, layout)?)
}

fn pooled_standardization(batch: &SeriesBatch) -> Standardization {
    let d = batch.dim();
    let data: Vec<f64> = batch.sequences.iter().flat_map(|s| s.data.iter().copied()).collect();
    Standardization::fit(&Matrix::from_vec(data.len() / d, d, data))
}

pub struct TrainedTs {
    pub checkpoint: Checkpoint,
    pub log: isl::trainer::RunLog,
    pub dropped_rows: usize,
}

pub fn train_ts(a: &TrainTsArgs) -> Result<TrainedTs> {
    let layout = a.layout.layout()?;
    let (mut batch, report) = load_series(&a.data, &layout)?;
    if let Some(l) = a.train_len {
        for s in &mut batch.sequences {
            let keep = l.min(s.rows);
            *s = Matrix::from_vec(keep, s.cols, s.data[..keep * s.cols].to_vec());
        }
    }
    let (scaling, train) = match a.scaling.as_str() {
        "none" => (Scaling::None, batch),
        "series" => (Scaling::Series, batch.standardize()),
        "global" => {
            let z = pooled_standardization(&batch);
            let seqs = batch.sequences.iter().map(|s| z.apply(s)).collect();
            (Scaling::Global(z), SeriesBatch { sequences: seqs, ..batch })
        }
        s => bail!("unknown scaling {s:?}"),
    };
    parse::positive("lr", a.lr)?;
    let spec = TemporalModelSpec::new(
        train.dim(),
        a.hidden,
        a.rnn_layers,
        parse::activation(&a.rnn_activation)?,
        &parse::list_usize(&a.gen_hidden)?,
        parse::activation(&a.gen_activation)?,
    );
    let model = TemporalModel::new(spec, a.seed)?;
    let noise = parse::noise(&a.noise, a.seed)?;
    let cfg = TemporalTrainConfig {
        window: a.window,
        batch_size: a.batch.unwrap_or(train.len().min(32)),
        isl: IslConfig { k: a.k, alpha: a.alpha, nu: a.nu, norm_order: parse::norm(&a.norm)?, ..IslConfig::default() },
        epochs: a.epochs,
        iterations_per_epoch: a.iterations,
        learning_rate: a.lr,
        seed: a.seed,
        clip_norm: (a.clip > 0.0).then_some(a.clip),
        latent_sharing: a.latent.parse::<LatentSharing>()?,
    };
    let (params, log) = train_temporal(&model, &noise, &train, &cfg)?;
    let model = TemporalModel::with_params(model.spec().clone(), params)?;
    Ok(TrainedTs {
        checkpoint: Checkpoint::Temporal { model: model.checkpoint(), noise, scaling, layout },
        log,
        dropped_rows: report.dropped_rows,
    })
}

pub fn run_train_ts(mut a: TrainTsArgs) -> Result<()> {
    let started = now();
    let out = resolve_out(&a.out, "train-ts");
    a.out = Some(out.clone());
    let t = train_ts(&a)?;
    let mut art = Artifacts::new(&out)?;
    art.write_json(CHECKPOINT_FILE, &t.checkpoint)?;
    art.write("runlog.jsonl", &t.log.to_json_lines()?)?;
    let mut m = RunManifest::new(Command::TrainTs(a.clone()), a.seed, started);
    m.notes.push(format!("rows dropped on ingestion: {}", t.dropped_rows));
    m.notes.push("teacher forcing; zero start token and zero initial state".into());
    art.finish(m)?;
    let last = t.log.records.last().map(|r| r.surrogate_loss).unwrap_or(f64::NAN);
    println!("trained {} epochs, final loss {last:.4} -> {}", t.log.records.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct ForecastArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// First step of the conditioning window.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long, default_value_t = 20)]
    pub tau0: usize,
    #[arg(long, default_value_t = 20)]
    pub horizon: usize,
    #[arg(long, default_value_t = isl::timeseries::DEFAULT_TRAJECTORIES)]
    pub trajectories: usize,
    #[arg(long, default_value = "0.1,0.5,0.9")]
    pub rho: String,
    /// Forecast only this series (0-based); all series by default.
    #[arg(long)]
    pub series: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Also write every trajectory to trajectories.csv (`true`/`false`).
    #[arg(long, default_value = "false")]
    pub save_trajectories: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesForecast {
    pub id: String,
    pub start: usize,
    pub tau0: usize,
    pub horizon: usize,
    pub quantiles: Vec<QuantileSummary>,
    /// Observed continuation, when the series is long enough.
    pub actual: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastFile {
    pub manifest: String,
    pub series: Vec<SeriesForecast>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetricsFile {
    pub manifest: String,
    pub ql_definition: String,
    pub n_series: usize,
    pub tau0: usize,
    pub horizon: usize,
    /// On the original scale of the data.
    pub raw: ForecastMetrics,
    /// On the scale the model was trained on.
    pub standardized: ForecastMetrics,
}

pub const QL_DEFINITION: &str = "QL_rho = 2 * sum P_rho(y, q_rho) / sum |y|, P_rho(y, q) = rho (y - q)+ + (1 - rho)(q - y)+";

pub struct ForecastRun {
    pub file: ForecastFile,
    pub metrics: Option<ForecastMetricsFile>,
    pub raw: Vec<ForecastResult>,
}

fn rescale(f: &ForecastResult, map: impl Fn(&Matrix) -> Matrix, rho: &[f64]) -> Result<ForecastResult> {
    Ok(ForecastResult::from_trajectories(f.tau0, f.trajectories.iter().map(map).collect(), rho)?)
}

pub fn run_forecasts(a: &ForecastArgs) -> Result<ForecastRun> {
    let Checkpoint::Temporal { model, noise, scaling, layout } = Checkpoint::read(&a.checkpoint)? else {
        bail!("{} is not a temporal checkpoint", a.checkpoint.display());
    };
    let model = TemporalModel::from_checkpoint(model)?;
    let (batch, _) = load_series(&a.data, &layout)?;
    let rho = parse::list_f64(&a.rho)?;
    if a.tau0 == 0 {
        return Err(InputError("--tau0 must be at least 1".into()).into());
    }
    let ids: Vec<usize> = match a.series {
        Some(i) if i < batch.len() => vec![i],
        Some(i) => return Err(InputError(format!("series {i} out of range (have {})", batch.len())).into()),
        None => (0..batch.len()).collect(),
    };
    let mut file = ForecastFile { manifest: MANIFEST_FILE.into(), series: Vec::new() };
    let mut raw = Vec::new();
    let mut pairs_raw: Vec<(ForecastResult, Matrix)> = Vec::new();
    let mut pairs_std: Vec<(ForecastResult, Matrix)> = Vec::new();
    for i in ids {
        let s = &batch.sequences[i];
        let (t0, t1) = (a.start, a.start + a.tau0);
        if t1 > s.rows {
            return Err(InputError(format!("series {i} has {} steps, need {t1} for the history", s.rows)).into());
        }
        let rows = |from: usize, to: usize| Matrix::from_vec(to - from, s.cols, s.data[from * s.cols..to * s.cols].to_vec());
        let history = rows(t0, t1);
        let z = match &scaling {
            Scaling::None => None,
            Scaling::Series => Some(Standardization::fit(&history)),
            Scaling::Global(z) => Some(z.clone()),
        };
        let hist_std = z.as_ref().map_or_else(|| history.clone(), |z| z.apply(&history));
        let seed_i = rng::derive_seed(a.seed, Stream::Forecast, i as u64);
        let f_std = forecast(&model, &noise, &hist_std, a.horizon, a.trajectories, &rho, seed_i)?;
        let f_raw = match &z {
            None => f_std.clone(),
            Some(z) => rescale(&f_std, |m| z.invert(m), &rho)?,
        };
        let actual = (t1 + a.horizon <= s.rows).then(|| rows(t1, t1 + a.horizon));
        if let Some(y) = &actual {
            let y_std = z.as_ref().map_or_else(|| y.clone(), |z| z.apply(y));
            pairs_raw.push((f_raw.clone(), y.clone()));
            pairs_std.push((f_std, y_std));
        }
        file.series.push(SeriesForecast {
            id: batch.ids[i].clone().unwrap_or_else(|| i.to_string()),
            start: a.start,
            tau0: a.tau0,
            horizon: a.horizon,
            quantiles: f_raw.quantiles.clone(),
            actual,
        });
        raw.push(f_raw);
    }
    let metrics = if pairs_raw.is_empty() {
        None
    } else {
        let r: Vec<(&ForecastResult, &Matrix)> = pairs_raw.iter().map(|(f, y)| (f, y)).collect();
        let s: Vec<(&ForecastResult, &Matrix)> = pairs_std.iter().map(|(f, y)| (f, y)).collect();
        Some(ForecastMetricsFile {
            manifest: MANIFEST_FILE.into(),
            ql_definition: QL_DEFINITION.into(),
            n_series: r.len(),
            tau0: a.tau0,
            horizon: a.horizon,
            raw: forecast_metrics_pooled(&r, &rho).context("raw-scale metrics")?,
            standardized: forecast_metrics_pooled(&s, &rho).context("standardized metrics")?,
        })
    };
    Ok(ForecastRun { file, metrics, raw })
}

pub fn run_forecast(mut a: ForecastArgs) -> Result<()> {
    let started = now();
    let out = resolve_out(&a.out, "forecast");
    a.out = Some(out.clone());
    let save: bool = a.save_trajectories.parse().context("--save-trajectories expects true or false")?;
    let r = run_forecasts(&a)?;
    let mut art = Artifacts::new(&out)?;
    art.write_json("forecast.json", &r.file)?;
    if let Some(m) = &r.metrics {
        art.write_json("metrics.json", m)?;
    }
    if save {
        let mut csv = String::new();
        for (f, s) in r.raw.iter().zip(&r.file.series) {
            for line in f.trajectories_csv().lines().skip(usize::from(!csv.is_empty())) {
                if csv.is_empty() {
                    csv.push_str("series,");
                    csv.push_str(line);
                } else {
                    csv.push_str(&format!("{},{line}", s.id));
                }
                csv.push('\n');
            }
        }
        art.write("trajectories.csv", &csv)?;
    }
    art.finish(RunManifest::new(Command::Forecast(a.clone()), a.seed, started))?;
    match &r.metrics {
        Some(m) => {
            let ql: Vec<String> = m.raw.ql.iter().map(|q| format!("QL{}={:.4}", q.rho, q.value)).collect();
            println!("{} series: ND={:.4} RMSE={:.4} {} -> {}", m.n_series, m.raw.nd, m.raw.rmse, ql.join(" "), out.display());
        }
        None => println!("{} forecasts (no observed continuation) -> {}", r.file.series.len(), out.display()),
    }
    Ok(())
}
