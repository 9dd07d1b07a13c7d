//! Analytic one-dimensional target distributions and latent noise sources.
//!
//! Targets parse from a compact grammar used on the command line:
//!
//! ```text
//! normal:4,2            mean 4, standard deviation 2
//! uniform:-2,2          support [-2, 2]
//! cauchy:1,2            location 1, scale 2
//! pareto:1,1            scale x_m = 1, shape 1
//! mix:[normal:5,2;normal:-1,1]          equal weights
//! mix:[normal:5,2@0.3;normal:-1,1@0.7]  explicit weights
//! ```

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{IslError, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const MIXTURE_QUANTILE_TOL: f64 = 1e-12;

/// Standard normal cdf.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile. `u` must lie in (0, 1).
pub fn std_normal_quantile(u: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * u);
    if !x.is_finite() {
        return x;
    }
    // one Halley step against whichever tail is better conditioned
    let e = if x < 0.0 { std_normal_cdf(x) - u } else { (1.0 - u) - std_normal_sf(x) };
    let r = e / std_normal_pdf(x).max(f64::MIN_POSITIVE);
    x - r / (1.0 + 0.5 * x * r)
}

/// A univariate target distribution `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetDistribution {
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Cauchy { location: f64, scale: f64 },
    Pareto { scale: f64, shape: f64 },
    Mixture {
        components: Vec<TargetDistribution>,
        weights: Vec<f64>,
    },
}

impl TargetDistribution {
    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        let d = Self::Normal { mean, std };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        let d = Self::Uniform { low, high };
        d.validate()?;
        Ok(d)
    }

    pub fn cauchy(location: f64, scale: f64) -> Result<Self> {
        let d = Self::Cauchy { location, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn pareto(scale: f64, shape: f64) -> Result<Self> {
        let d = Self::Pareto { scale, shape };
        d.validate()?;
        Ok(d)
    }

    pub fn mixture(components: Vec<TargetDistribution>, weights: Vec<f64>) -> Result<Self> {
        let d = Self::Mixture { components, weights };
        d.validate()?;
        Ok(d)
    }

    /// Equally weighted mixture.
    pub fn equal_mixture(components: Vec<TargetDistribution>) -> Result<Self> {
        let m = components.len().max(1);
        let weights = vec![1.0 / m as f64; components.len()];
        Self::mixture(components, weights)
    }

    /// Checks every parameter constraint, recursing into mixtures.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IslError::InvalidParameter(msg));
        match *self {
            Self::Normal { mean, std } => {
                if !mean.is_finite() || !(std > 0.0) || !std.is_finite() {
                    return bad(format!("normal requires finite mean and std > 0, got ({mean}, {std})"));
                }
            }
            Self::Uniform { low, high } => {
                if !low.is_finite() || !high.is_finite() || !(low < high) {
                    return bad(format!("uniform requires low < high, got ({low}, {high})"));
                }
            }
            Self::Cauchy { location, scale } => {
                if !location.is_finite() || !(scale > 0.0) || !scale.is_finite() {
                    return bad(format!("cauchy requires scale > 0, got ({location}, {scale})"));
                }
            }
            Self::Pareto { scale, shape } => {
                if !(scale > 0.0) || !(shape > 0.0) || !scale.is_finite() || !shape.is_finite() {
                    return bad(format!("pareto requires scale > 0 and shape > 0, got ({scale}, {shape})"));
                }
            }
            Self::Mixture { ref components, ref weights } => {
                if components.is_empty() {
                    return bad("mixture needs at least one component".into());
                }
                if components.len() != weights.len() {
                    return bad(format!(
                        "mixture has {} components but {} weights",
                        components.len(),
                        weights.len()
                    ));
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return bad("mixture weights must be nonnegative".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return bad(format!("mixture weights sum to {total}, expected 1"));
                }
                for c in components {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self, Self::Mixture { .. })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, std } => std_normal_pdf((x - mean) / std) / std,
            Self::Uniform { low, high } => {
                if x >= low && x <= high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            Self::Cauchy { location, scale } => {
                let t = (x - location) / scale;
                1.0 / (PI * scale * (1.0 + t * t))
            }
            Self::Pareto { scale, shape } => {
                if x < scale {
                    0.0
                } else {
                    shape * scale.powf(shape) / x.powf(shape + 1.0)
                }
            }
            Self::Mixture { ref components, ref weights } => components
                .iter()
                .zip(weights)
                .map(|(c, w)| w * c.pdf(x))
                .sum(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, std } => std_normal_cdf((x - mean) / std),
            Self::Uniform { low, high } => {
                if x <= low {
                    0.0
                } else if x >= high {
                    1.0
                } else {
                    (x - low) / (high - low)
                }
            }
            Self::Cauchy { location, scale } => 0.5 + ((x - location) / scale).atan() / PI,
            Self::Pareto { scale, shape } => {
                if x <= scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(shape)
                }
            }
            Self::Mixture { ref components, ref weights } => components
                .iter()
                .zip(weights)
                .map(|(c, w)| w * c.cdf(x))
                .sum(),
        }
    }

    /// Inverse cdf. Mixtures are solved by bisection.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(IslError::Domain(format!("quantile level {u} outside (0, 1)")));
        }
        Ok(match *self {
            Self::Normal { mean, std } => mean + std * std_normal_quantile(u),
            Self::Uniform { low, high } => low + u * (high - low),
            Self::Cauchy { location, scale } => location + scale * (PI * (u - 0.5)).tan(),
            Self::Pareto { scale, shape } => scale / (1.0 - u).powf(1.0 / shape),
            Self::Mixture { ref components, .. } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for c in components {
                    let q = c.quantile(u)?;
                    lo = lo.min(q);
                    hi = hi.max(q);
                }
                self.bisect_quantile(u, lo, hi)
            }
        })
    }

    fn bisect_quantile(&self, u: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f = self.cdf(mid);
            if (f - u).abs() < MIXTURE_QUANTILE_TOL {
                return mid;
            }
            if f < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Draws one sample. Cauchy and Pareto use the inverse cdf of a uniform draw.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Normal { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std * z
            }
            Self::Uniform { low, high } => {
                let u: f64 = rng.random();
                low + u * (high - low)
            }
            Self::Cauchy { location, scale } => {
                let u: f64 = rng.sample(Open01);
                location + scale * (PI * (u - 0.5)).tan()
            }
            Self::Pareto { scale, shape } => {
                let u: f64 = rng.sample(Open01);
                scale / u.powf(1.0 / shape)
            }
            Self::Mixture { ref components, ref weights } => {
                if components.len() == 1 {
                    return components[0].sample_one(rng);
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = components.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                components[chosen].sample_one(rng)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Points where the pdf is discontinuous (support edges).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = match *self {
            Self::Normal { .. } | Self::Cauchy { .. } => Vec::new(),
            Self::Uniform { low, high } => vec![low, high],
            Self::Pareto { scale, .. } => vec![scale],
            Self::Mixture { ref components, .. } => {
                components.iter().flat_map(|c| c.breakpoints()).collect()
            }
        };
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// A representative location and spread, used to place quadrature
    /// breakpoints and plotting grids.
    pub fn center_and_scale(&self) -> (f64, f64) {
        match *self {
            Self::Normal { mean, std } => (mean, std),
            Self::Uniform { low, high } => (0.5 * (low + high), 0.5 * (high - low)),
            Self::Cauchy { location, scale } => (location, scale),
            Self::Pareto { scale, shape } => (scale * 2f64.powf(1.0 / shape), scale),
            Self::Mixture { .. } => {
                let lo = self.quantile(0.25).unwrap_or(0.0);
                let mid = self.quantile(0.5).unwrap_or(0.0);
                let hi = self.quantile(0.75).unwrap_or(1.0);
                (mid, ((hi - lo) / 1.349).max(1e-6))
            }
        }
    }
}

impl fmt::Display for TargetDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Normal { mean, std } => write!(f, "normal:{mean},{std}"),
            Self::Uniform { low, high } => write!(f, "uniform:{low},{high}"),
            Self::Cauchy { location, scale } => write!(f, "cauchy:{location},{scale}"),
            Self::Pareto { scale, shape } => write!(f, "pareto:{scale},{shape}"),
            Self::Mixture { components, weights } => {
                let m = components.len() as f64;
                let equal = weights.iter().all(|w| (w - 1.0 / m).abs() < 1e-15);
                write!(f, "mix:[")?;
                for (i, (c, w)) in components.iter().zip(weights).enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{c}")?;
                    if !equal {
                        write!(f, "@{w}")?;
                    }
                }
                write!(f, "]")
            }
        }
    }
}

impl FromStr for TargetDistribution {
    type Err = IslError;

    fn from_str(s: &str) -> Result<Self> {
        parse_target(s.trim())
    }
}

fn parse_err(s: &str, why: &str) -> IslError {
    IslError::InvalidParameter(format!("cannot parse distribution `{s}`: {why}"))
}

fn parse_target(s: &str) -> Result<TargetDistribution> {
    let (name, args) = s
        .split_once(':')
        .ok_or_else(|| parse_err(s, "expected `<kind>:<params>`"))?;
    let name = name.trim().to_ascii_lowercase();
    if name == "mix" || name == "mixture" {
        return parse_mixture(s, args.trim());
    }
    let params: Vec<f64> = args
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(s, "parameters must be numbers"))?;
    if params.len() != 2 {
        return Err(parse_err(s, "expected exactly two parameters"));
    }
    let (a, b) = (params[0], params[1]);
    match name.as_str() {
        "normal" | "gaussian" => TargetDistribution::normal(a, b),
        "uniform" => TargetDistribution::uniform(a, b),
        "cauchy" => TargetDistribution::cauchy(a, b),
        "pareto" => TargetDistribution::pareto(a, b),
        other => Err(parse_err(s, &format!("unknown kind `{other}`"))),
    }
}

fn parse_mixture(full: &str, body: &str) -> Result<TargetDistribution> {
    let inner = body
        .strip_prefix('[')
        .and_then(|b| b.strip_suffix(']'))
        .ok_or_else(|| parse_err(full, "mixture body must be `[...]`"))?;
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in inner.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ';' if depth == 0 => {
                parts.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&inner[start..]);

    let mut components = Vec::new();
    let mut weights = Vec::new();
    for part in parts {
        let part = part.trim();
        if part.is_empty() {
            return Err(parse_err(full, "empty mixture component"));
        }
        // A weight suffix applies only outside nested brackets.
        let split_at = part.rfind('@').filter(|&at| !part[at..].contains(']'));
        match split_at {
            Some(at) => {
                let w: f64 = part[at + 1..]
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(full, "bad weight"))?;
                components.push(parse_target(part[..at].trim())?);
                weights.push(Some(w));
            }
            None => {
                components.push(parse_target(part)?);
                weights.push(None);
            }
        }
    }
    let weights = if weights.iter().all(Option::is_none) {
        vec![1.0 / components.len() as f64; components.len()]
    } else if weights.iter().all(Option::is_some) {
        weights.into_iter().map(Option::unwrap).collect()
    } else {
        return Err(parse_err(full, "either all or no components carry `@w` weights"));
    };
    TargetDistribution::mixture(components, weights)
}

/// Latent noise law `p0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    StandardNormal,
    Uniform { low: f64, high: f64 },
}

/// Latent noise source: a law plus the seed of its stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSource {
    pub fn standard_normal(seed: u64) -> Self {
        Self { kind: NoiseKind::StandardNormal, seed }
    }

    pub fn uniform(low: f64, high: f64, seed: u64) -> Result<Self> {
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(IslError::InvalidParameter(format!(
                "uniform noise requires low < high, got ({low}, {high})"
            )));
        }
        Ok(Self { kind: NoiseKind::Uniform { low, high }, seed })
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::StandardNormal => rng.sample(StandardNormal),
            NoiseKind::Uniform { low, high } => {
                let u: f64 = rng.random();
                low + u * (high - low)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self.kind {
            NoiseKind::StandardNormal => std_normal_cdf(z),
            NoiseKind::Uniform { low, high } => ((z - low) / (high - low)).clamp(0.0, 1.0),
        }
    }

    /// `1 - cdf(z)`, computed without cancellation.
    pub fn sf(&self, z: f64) -> f64 {
        match self.kind {
            NoiseKind::StandardNormal => std_normal_sf(z),
            NoiseKind::Uniform { low, high } => ((high - z) / (high - low)).clamp(0.0, 1.0),
        }
    }
}

/// The monotone map pushing `noise` onto `dist`: `F⁻¹(F_Z(z))`, or the
/// decreasing branch `F⁻¹(1 - F_Z(z))` when `reflected`.
pub fn optimal_transform(
    dist: &TargetDistribution,
    noise: &NoiseSource,
    z: f64,
    reflected: bool,
) -> f64 {
    let u = if reflected { noise.sf(z) } else { noise.cdf(z) };
    let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    dist.quantile(u).expect("level clamped into (0, 1)")
}
