//! The invariant statistical loss and its differentiable pieces.
//!
//! For one observation `y` and `K` generator samples, the soft count
//! `ã = Σᵢ σ(α (y − ỹᵢ))` replaces the hard rank. Soft counts over a batch
//! are binned with unit-spaced RBF kernels `ψ_k(a) = exp(−(a − k)² / 2ν²)`,
//! giving `q[k] = mean ψ_k(ã)`, and the loss is `‖1/(K+1) − q‖_ℓ`.
//!
//! `q` is used as is; it is not renormalized to sum to one.

use serde::{Deserialize, Serialize};

use crate::error::{IslError, Result};
use crate::nn::{sigmoid, NormOrder, Tape, Var};
use crate::stats::RankHistogram;

pub const DEFAULT_ALPHA: f64 = 15.0;
pub const DEFAULT_NU: f64 = 0.3;

/// Hyperparameters of the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IslConfig {
    /// Generator samples per observation.
    pub k: usize,
    /// Sigmoid slope.
    pub alpha: f64,
    /// RBF kernel length-scale ν (the kernel uses ν²).
    pub nu: f64,
    pub norm_order: NormOrder,
    /// Observations per mini-batch.
    pub batch_size: usize,
}

impl Default for IslConfig {
    fn default() -> Self {
        Self { k: 2, alpha: DEFAULT_ALPHA, nu: DEFAULT_NU, norm_order: NormOrder::L2, batch_size: 1000 }
    }
}

impl IslConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(IslError::InvalidParameter("K must be at least 1".into()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(IslError::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(IslError::InvalidParameter(format!("nu must be > 0, got {}", self.nu)));
        }
        if self.batch_size < 1 {
            return Err(IslError::InvalidParameter("batch size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

/// Kernel-smoothed histogram of soft counts over bins `0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftHistogram {
    pub k: usize,
    pub q: Vec<f64>,
}

/// `Σᵢ σ(α (y − ỹᵢ))`.
pub fn soft_count(y: f64, gen_samples: &[f64], alpha: f64) -> f64 {
    gen_samples.iter().map(|&s| sigmoid(alpha * (y - s))).sum()
}

/// `q[k] = (1/N) Σᵢ exp(−(ãᵢ − k)² / 2ν²)` for `k = 0..=K`.
pub fn soft_histogram(soft_counts: &[f64], k: usize, nu: f64) -> SoftHistogram {
    let inv = 1.0 / (2.0 * nu * nu);
    let n = soft_counts.len().max(1) as f64;
    let q = (0..=k)
        .map(|bin| {
            soft_counts
                .iter()
                .map(|&a| {
                    let d = a - bin as f64;
                    (-d * d * inv).exp()
                })
                .sum::<f64>()
                / n
        })
        .collect();
    SoftHistogram { k, q }
}

fn distance_to_uniform(p: &[f64], order: NormOrder) -> f64 {
    let u = 1.0 / p.len() as f64;
    let diff: Vec<f64> = p.iter().map(|x| u - x).collect();
    order.apply(&diff)
}

/// `‖1/(K+1)·𝟏 − q‖_ℓ`.
pub fn isl_loss(q: &SoftHistogram, order: NormOrder) -> f64 {
    distance_to_uniform(&q.q, order)
}

/// The same distance for the hard rank histogram (diagnostics only).
pub fn theoretical_isl(hist: &RankHistogram, order: NormOrder) -> Result<f64> {
    let total = hist.total();
    if total == 0 {
        return Err(IslError::EmptyInput("rank histogram has no observations".into()));
    }
    let p: Vec<f64> = hist.counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(distance_to_uniform(&p, order))
}

/// Builds the loss on a tape from soft counts (any shape, treated as a
/// flat list): RBF histogram, then the ℓ distance to the uniform pmf.
pub fn surrogate_from_counts(tape: &mut Tape<'_>, soft_counts: Var, k: usize, nu: f64, order: NormOrder) -> Var {
    let q = tape.rbf_histogram(soft_counts, k, nu);
    let neg = tape.scale(q, -1.0);
    let diff = tape.shift(neg, 1.0 / (k + 1) as f64);
    tape.norm(diff, order)
}

/// Loss for a batch of observations `data` (`M × 1`) against generator
/// outputs `samples`: either one shared set (`K × 1` or `1 × K`) or one
/// row of `K` per observation (`M × K`, with `M > 1`).
pub fn surrogate_loss(tape: &mut Tape<'_>, data: Var, samples: Var, cfg: &IslConfig) -> Var {
    let (m, _) = tape.shape(data);
    let (r, c) = tape.shape(samples);
    let samples = if m > 1 && r == m && c == cfg.k { samples } else { tape.reshape(samples, 1, r * c) };
    let counts = tape.soft_count(data, samples, cfg.alpha);
    surrogate_from_counts(tape, counts, cfg.k, cfg.nu, cfg.norm_order)
}
