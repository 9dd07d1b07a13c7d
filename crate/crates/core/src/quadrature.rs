//! Adaptive Gauss–Kronrod (7/15) quadrature on finite and infinite ranges.

use crate::error::{IslError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// ∫ₐᵇ f with absolute tolerance `tol`, by global adaptive bisection.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut total_err = e;
    while total_err > tol {
        if intervals.len() >= MAX_INTERVALS {
            return Err(IslError::Quadrature(format!(
                "error estimate {total_err:.3e} above tolerance {tol:.1e} on [{a}, {b}]"
            )));
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(IslError::Quadrature(format!("interval [{lo}, {hi}] cannot be split further")));
        }
        let l = gk15(&f, lo, mid);
        let r = gk15(&f, mid, hi);
        intervals.push((lo, mid, l.0, l.1));
        intervals.push((mid, hi, r.0, r.1));
        total_err = intervals.iter().map(|i| i.3).sum();
    }
    let total: f64 = intervals.iter().map(|i| i.2).sum();
    if !total.is_finite() {
        return Err(IslError::Quadrature("non-finite integrand".into()));
    }
    Ok(total)
}

/// ∫ over ℝ, split at the sorted `breakpoints`; the two tails are mapped
/// onto [0, 1) by `y = edge ± t / (1 − t)`.
pub fn integrate_real<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], tol: f64) -> Result<f64> {
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.is_empty() {
        pts.push(0.0);
    }
    let pieces = pts.len() + 1;
    let piece_tol = tol / pieces as f64;
    let first = pts[0];
    let last = *pts.last().expect("nonempty");

    let lower = integrate(
        |t| {
            let s = 1.0 - t;
            f(first - t / s) / (s * s)
        },
        0.0,
        1.0,
        piece_tol,
    )?;
    let upper = integrate(
        |t| {
            let s = 1.0 - t;
            f(last + t / s) / (s * s)
        },
        0.0,
        1.0,
        piece_tol,
    )?;
    let mut middle = 0.0;
    for w in pts.windows(2) {
        middle += integrate(&f, w[0], w[1], piece_tol)?;
    }
    Ok(lower + middle + upper)
}
