//! Small value parsers shared by the commands.

use anyhow::{bail, Context, Result};
use isl::nn::{Activation, NormOrder};
use isl::NoiseSource;

pub fn list_f64(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number {p:?} in {s:?}"))).collect()
}

pub fn list_usize(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| p.trim().parse::<usize>().with_context(|| format!("bad count {p:?} in {s:?}"))).collect()
}

pub fn activation(s: &str) -> Result<Activation> {
    Ok(match s {
        "elu" => Activation::Elu,
        "relu" => Activation::Relu,
        "tanh" => Activation::Tanh,
        "sigmoid" => Activation::Sigmoid,
        "identity" | "linear" => Activation::Identity,
        _ => bail!("unknown activation {s:?}"),
    })
}

pub fn norm(s: &str) -> Result<NormOrder> {
    Ok(s.parse::<NormOrder>()?)
}

/// `normal` or `uniform:low,high`.
pub fn noise(s: &str, seed: u64) -> Result<NoiseSource> {
    if s == "normal" || s == "normal:0,1" {
        return Ok(NoiseSource::standard_normal(seed));
    }
    if let Some(rest) = s.strip_prefix("uniform:") {
        let v = list_f64(rest)?;
        if v.len() != 2 {
            bail!("uniform noise needs low,high");
        }
        return Ok(NoiseSource::uniform(v[0], v[1], seed)?);
    }
    bail!("unknown noise {s:?} (expected normal or uniform:low,high)")
}

/// Checks that a numeric flag is strictly positive.
pub fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        bail!("--{name} must be positive, got {v}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_noise() {
        assert_eq!(list_f64("0.5, 0.2").unwrap(), vec![0.5, 0.2]);
        assert!(list_f64("").unwrap().is_empty());
        assert!(list_usize("7,x").is_err());
        assert!(noise("uniform:-1,1", 0).is_ok());
        assert!(noise("uniform:1", 0).is_err());
        assert!(noise("gamma", 0).is_err());
        assert!(activation("swish").is_err());
    }
}
