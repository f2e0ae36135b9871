//! Phase unwrapping and weighted least-squares line fits.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Removes `2 pi` jumps: each phase is shifted by the multiple of `2 pi` that
/// brings it nearest to its predecessor.
pub fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut prev: Option<f64> = None;
    for &p in phases {
        let v = match prev {
            None => p,
            Some(q) => p - 2.0 * PI * ((p - q) / (2.0 * PI)).round(),
        };
        out.push(v);
        prev = Some(v);
    }
    out
}

/// Unwraps the phases of `h[k]` at abscissae `x` around a coarse line rather
/// than bin to bin, so one noisy bin cannot slip every bin after it.
///
/// The coarse slope is the phase of the weighted sum of increments between
/// neighbouring bins, the coarse intercept the phase of the weighted de-rotated sum.
/// Each phase is then placed within `pi` of that line.
pub fn unwrap_about_line(x: &[f64], h: &[Complex64], w: &[f64]) -> Vec<f64> {
    let z: Vec<Complex64> = h.iter().zip(w).map(|(h, w)| h * w.sqrt()).collect();
    let mut inc = Complex64::new(0.0, 0.0);
    for i in 1..z.len() {
        if x[i] - x[i - 1] == 1.0 {
            inc += z[i] * z[i - 1].conj();
        }
    }
    let slope = if inc.norm() > 0.0 { inc.arg() } else { 0.0 };
    let rot: Complex64 = z.iter().zip(x).map(|(z, x)| z * Complex64::from_polar(1.0, -slope * x)).sum();
    let icpt = if rot.norm() > 0.0 { rot.arg() } else { 0.0 };
    h.iter()
        .zip(x)
        .map(|(h, x)| {
            let line = slope * x + icpt;
            let r = h.arg() - line;
            line + r - 2.0 * PI * (r / (2.0 * PI)).round()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    /// Radians per bin.
    pub slope: f64,
    /// Radians.
    pub intercept: f64,
    /// Weighted mean squared residual.
    pub mse: f64,
}

/// Closed-form weighted least squares for `y = slope x + intercept`.
/// Returns `None` when all weights are zero. With fewer than two distinct
/// weighted abscissae the slope is zero and the intercept the weighted mean.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((x, y), w) in x.iter().zip(y).zip(w) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
    }
    let slope = if sxx > 1e-12 * sw { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let mse = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((x, y), w)| {
            let r = y - slope * x - intercept;
            w * r * r
        })
        .sum::<f64>()
        / sw;
    Some(LineFit { slope, intercept, mse })
}
