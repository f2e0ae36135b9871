//! Sub-symbol sensing CSI.
//!
//! For sub-symbol `m` and a candidate delay `dn`, the received window
//! `rx[m L + dn .. (m + 1) L + dn]` is divided bin by bin by the spectrum of
//! the pre-distorted transmit window. OPT-Delay picks the `dn` whose CSI
//! phase is closest to a straight line across bins (weighted by the transmit
//! power per bin). The first candidate costs one FFT; the rest slide.
//!
//! Zero-delay self-interference produces a flat profile at `dn = 0`, so
//! reflectors are best placed at two or more samples of delay.

mod fit;
mod sliding;

pub use fit::{unwrap_about_line, unwrap_phases, weighted_line_fit, LineFit};
pub use sliding::{rotation_factors, sliding_dft_step, sliding_dft_step_in_place, SlidingDft};

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dft::{fft, fft_cost};
use crate::error::{param, Error, Result};
use crate::par::{self, Execution};
use crate::units::lin_to_db;
use crate::waveform::{PredistortionPlan, SubSymbolSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelaySearchConfig {
    /// Candidate delays `0..num_candidates`.
    pub num_candidates: usize,
    /// Transmit bins with magnitude at or below this are excluded.
    pub magnitude_floor: f64,
}

impl Default for DelaySearchConfig {
    fn default() -> Self {
        Self::for_fft_size(1024)
    }
}

impl DelaySearchConfig {
    /// `ceil(log2 fft_size)` candidates.
    pub fn for_fft_size(fft_size: usize) -> Self {
        let bits = usize::BITS - fft_size.saturating_sub(1).leading_zeros();
        Self { num_candidates: (bits as usize).max(1), magnitude_floor: 1e-12 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_candidates == 0 {
            return param("num_candidates must be at least 1");
        }
        if !(self.magnitude_floor >= 0.0) {
            return param("magnitude_floor must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensingCsi {
    pub beam_index: usize,
    /// CSI at the selected delay; invalid bins hold zero.
    pub csi: Vec<Complex64>,
    pub valid: Vec<bool>,
    /// Fit weights `|X~[k]|^2`, zero on invalid bins.
    pub weights: Vec<f64>,
    pub delay_star: usize,
    pub fit: LineFit,
    /// Weighted MSE for every candidate delay.
    pub loss_profile: Vec<f64>,
    /// Complex multiply-adds spent (FFT plus per-candidate updates and divisions).
    pub multiply_adds: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CsiFeatures {
    /// Mean `|H[k]|^2` weighted by the fit weights, linear. Weighting keeps
    /// bins where the short window happens to carry little energy from
    /// dominating the estimate with amplified noise.
    pub received_power: f64,
    /// Radians per bin.
    pub phase_slope: f64,
    pub linearity_loss: f64,
}

impl CsiFeatures {
    /// Received power divided by the round-trip beam gain towards the sensing
    /// angle, which leaves reflectivity rather than beam shape.
    pub fn normalized_power(&self, round_trip_gain: f64) -> f64 {
        self.received_power / round_trip_gain
    }
}

pub fn extract_features(csi: &SensingCsi) -> CsiFeatures {
    CsiFeatures {
        received_power: {
            let total: f64 = csi.weights.iter().sum();
            if total > 0.0 {
                csi.csi.iter().zip(&csi.weights).map(|(h, w)| w * h.norm_sqr()).sum::<f64>() / total
            } else {
                0.0
            }
        },
        phase_slope: csi.fit.slope,
        linearity_loss: csi.fit.mse,
    }
}

fn check_window(rx: &[Complex64], tx: &[Complex64], schedule: &SubSymbolSchedule, m: usize, plan: &PredistortionPlan) -> Result<()> {
    if m >= schedule.num_beams() {
        return param(format!("sub-symbol {m} outside a {}-way schedule", schedule.num_beams()));
    }
    if tx.len() < schedule.window(m).end {
        return param(format!("transmit symbol has {} samples, window needs {}", tx.len(), schedule.window(m).end));
    }
    if rx.is_empty() {
        return param("received symbol is empty");
    }
    if plan.len() != schedule.num_beams() {
        return param(format!("{} pre-distortion factors for a {}-way schedule", plan.len(), schedule.num_beams()));
    }
    Ok(())
}

/// Received window for sub-symbol `m` at delay `dn`. `rx` starts at the
/// symbol body and may run on into the following samples; anything past its
/// end reads as zero.
fn rx_window(rx: &[Complex64], schedule: &SubSymbolSchedule, m: usize, dn: usize) -> Vec<Complex64> {
    schedule.window(m).map(|i| rx.get(i + dn).copied().unwrap_or_default()).collect()
}

struct TxSide {
    spectrum: Vec<Complex64>,
    valid: Vec<bool>,
    /// `|X~[k]|^2` on valid bins, zero elsewhere.
    weights: Vec<f64>,
    /// `1 / factor_m`, i.e. `sqrt(mean g_dmrs / mean g_data)`.
    scale: f64,
}

fn tx_side(tx: &[Complex64], schedule: &SubSymbolSchedule, m: usize, plan: &PredistortionPlan, floor: f64) -> Result<TxSide> {
    let factor = plan.factors[m];
    if !(factor > 0.0) {
        return param(format!("pre-distortion factor for sub-symbol {m} must be positive"));
    }
    let spectrum = fft(&tx[schedule.window(m)]);
    let valid: Vec<bool> = spectrum.iter().map(|x| x.norm() > floor).collect();
    let weights = spectrum
        .iter()
        .zip(&valid)
        .map(|(x, v)| if *v { (factor * x.norm()).powi(2) } else { 0.0 })
        .collect();
    Ok(TxSide { spectrum, valid, weights, scale: factor.recip() })
}

fn divide(y: &[Complex64], tx: &TxSide) -> Vec<Complex64> {
    y.iter()
        .zip(&tx.spectrum)
        .zip(&tx.valid)
        .map(|((y, x), v)| if *v { y / x * tx.scale } else { Complex64::new(0.0, 0.0) })
        .collect()
}

fn fit_phase(h: &[Complex64], tx: &TxSide) -> Option<LineFit> {
    let idx: Vec<usize> = (0..h.len()).filter(|&k| tx.valid[k]).collect();
    let x: Vec<f64> = idx.iter().map(|&k| k as f64).collect();
    let w: Vec<f64> = idx.iter().map(|&k| tx.weights[k]).collect();
    let ph = unwrap_about_line(&x, &idx.iter().map(|&k| h[k]).collect::<Vec<_>>(), &w);
    weighted_line_fit(&x, &ph, &w)
}

/// CSI of sub-symbol `m` at delay `dn`. Bins whose transmit magnitude is at or
/// below the floor are returned as zero.
pub fn sub_symbol_csi(
    rx: &[Complex64],
    tx: &[Complex64],
    schedule: &SubSymbolSchedule,
    m: usize,
    dn: usize,
    plan: &PredistortionPlan,
) -> Result<Vec<Complex64>> {
    check_window(rx, tx, schedule, m, plan)?;
    let side = tx_side(tx, schedule, m, plan, DelaySearchConfig::default().magnitude_floor)?;
    Ok(divide(&fft(&rx_window(rx, schedule, m, dn)), &side))
}

fn select(
    m: usize,
    candidates: impl Iterator<Item = Vec<Complex64>>,
    side: &TxSide,
    ops: u64,
) -> Result<SensingCsi> {
    let mut best: Option<(usize, Vec<Complex64>, LineFit)> = None;
    let mut profile = Vec::new();
    for (dn, h) in candidates.enumerate() {
        let fit = fit_phase(&h, side).ok_or(Error::NoUsableSubcarriers)?;
        profile.push(fit.mse);
        if best.as_ref().is_none_or(|b| fit.mse < b.2.mse) {
            best = Some((dn, h, fit));
        }
    }
    let (delay_star, csi, fit) = best.ok_or(Error::NoUsableSubcarriers)?;
    Ok(SensingCsi { beam_index: m, csi, valid: side.valid.clone(), weights: side.weights.clone(), delay_star, fit, loss_profile: profile, multiply_adds: ops })
}

/// OPT-Delay with the sliding-DFT update. Ties go to the smaller delay.
pub fn solve_opt_delay(
    rx: &[Complex64],
    tx: &[Complex64],
    schedule: &SubSymbolSchedule,
    m: usize,
    plan: &PredistortionPlan,
    cfg: &DelaySearchConfig,
) -> Result<SensingCsi> {
    cfg.validate()?;
    check_window(rx, tx, schedule, m, plan)?;
    let side = tx_side(tx, schedule, m, plan, cfg.magnitude_floor)?;
    if !side.valid.iter().any(|v| *v) {
        return Err(Error::NoUsableSubcarriers);
    }
    let len = schedule.sub_len() as u64;
    let end = schedule.window(m).end;
    let mut q = SlidingDft::new(&rx_window(rx, schedule, m, 0));
    let mut spectra = Vec::with_capacity(cfg.num_candidates);
    for dn in 0..cfg.num_candidates {
        if dn > 0 {
            q.push(rx.get(end + dn - 1).copied().unwrap_or_default());
        }
        spectra.push(divide(q.spectrum(), &side));
    }
    let ops = q.multiply_adds() + cfg.num_candidates as u64 * len;
    select(m, spectra.into_iter(), &side, ops)
}

/// OPT-Delay recomputing a full FFT per candidate; reference for the
/// accelerated path.
pub fn solve_opt_delay_recompute(
    rx: &[Complex64],
    tx: &[Complex64],
    schedule: &SubSymbolSchedule,
    m: usize,
    plan: &PredistortionPlan,
    cfg: &DelaySearchConfig,
) -> Result<SensingCsi> {
    cfg.validate()?;
    check_window(rx, tx, schedule, m, plan)?;
    let side = tx_side(tx, schedule, m, plan, cfg.magnitude_floor)?;
    if !side.valid.iter().any(|v| *v) {
        return Err(Error::NoUsableSubcarriers);
    }
    let len = schedule.sub_len();
    let ops = cfg.num_candidates as u64 * (fft_cost(len) + len as u64);
    let spectra = (0..cfg.num_candidates).map(|dn| divide(&fft(&rx_window(rx, schedule, m, dn)), &side));
    select(m, spectra, &side, ops)
}

/// All `M` sub-symbols of one DMRS symbol. `tx` is the CP-stripped symbol;
/// `rx` starts at the received body and should extend past it by the delay
/// search span so late sub-symbols see real samples rather than zeros.
/// `plan` supplies one factor per sub-symbol.
pub fn estimate_symbol(
    rx: &[Complex64],
    tx: &[Complex64],
    schedule: &SubSymbolSchedule,
    plan: &PredistortionPlan,
    cfg: &DelaySearchConfig,
    exec: Execution,
) -> Result<Vec<SensingCsi>> {
    if plan.len() != schedule.num_beams() {
        return param(format!("{} codebook entries for a {}-way schedule", plan.len(), schedule.num_beams()));
    }
    par::try_map_range(exec, schedule.num_beams(), |m| {
        solve_opt_delay(rx, tx, schedule, m, plan, cfg).map_err(|e| Error::Beam { beam: m, source: Box::new(e) })
    })
}

/// One CSV row per estimate: beam index, sensing angle, selected delay,
/// received power in dB, phase slope, linearity loss.
pub fn write_features_csv<W: Write>(w: W, rows: &[(f64, &SensingCsi)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["beam", "sensing_angle_deg", "delay_star", "power_db", "phase_slope", "linearity_loss"])?;
    for (angle, csi) in rows {
        let f = extract_features(csi);
        out.write_record([
            csi.beam_index.to_string(),
            format!("{angle:.3}"),
            csi.delay_star.to_string(),
            format!("{:.6}", lin_to_db(f.received_power)),
            format!("{:.9}", f.phase_slope),
            format!("{:.9}", f.linearity_loss),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    }

    fn delayed(x: &[Complex64], d: usize, c: Complex64) -> Vec<Complex64> {
        (0..x.len()).map(|i| if i >= d { x[i - d] * c } else { Complex64::new(0.0, 0.0) }).collect()
    }

    #[test]
    fn default_candidates() {
        assert_eq!(DelaySearchConfig::default().num_candidates, 10);
        assert_eq!(DelaySearchConfig::for_fft_size(1).num_candidates, 1);
        assert_eq!(DelaySearchConfig::for_fft_size(1000).num_candidates, 10);
    }

    #[test]
    fn identity_csi() {
        let x = random(1024, 1);
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let h = sub_symbol_csi(&x, &x, &s, 4, 0, &PredistortionPlan::identity(34)).unwrap();
        assert!(h.iter().all(|h| (h - 1.0).norm() < 1e-9));
    }

    #[test]
    fn aligned_delay_is_flat() {
        let x = random(1024, 2);
        let c = Complex64::from_polar(0.3, 1.1);
        let rx = delayed(&x, 6, c);
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let h = sub_symbol_csi(&rx, &x, &s, 7, 6, &PredistortionPlan::identity(34)).unwrap();
        assert!(h.iter().all(|h| (h - c).norm() < 1e-9));
    }

    #[test]
    fn one_sample_early_window() {
        // Window one sample early: the received window is the transmit window
        // circularly delayed by one, except sample 0 comes from the previous
        // sub-symbol. Oracle: build that window explicitly.
        let x = random(1024, 3);
        let rx = delayed(&x, 5, Complex64::new(1.0, 0.0));
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let m = 3;
        let h = sub_symbol_csi(&rx, &x, &s, m, 4, &PredistortionPlan::identity(34)).unwrap();
        let w = s.window(m);
        let txw = &x[w.clone()];
        let mut circ: Vec<Complex64> = (0..30).map(|i| txw[(i + 29) % 30]).collect();
        let residual = x[w.start - 1] - txw[29];
        circ[0] += residual;
        let xs = fft(txw);
        let ys = fft(&circ);
        for k in 0..30 {
            let ramp = Complex64::from_polar(1.0, -2.0 * PI * k as f64 / 30.0);
            let expect = ramp + fft(&{
                let mut e = vec![Complex64::new(0.0, 0.0); 30];
                e[0] = residual;
                e
            })[k] / xs[k];
            assert!((h[k] - ys[k] / xs[k]).norm() < 1e-9);
            assert!((h[k] - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn recovers_injected_delay() {
        let x = random(1024, 4);
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let cfg = DelaySearchConfig { num_candidates: 16, ..Default::default() };
        let plan = PredistortionPlan::identity(34);
        let rx = delayed(&x, 7, Complex64::new(0.8, 0.0));
        let est = solve_opt_delay(&rx, &x, &s, 10, &plan, &cfg).unwrap();
        assert_eq!(est.delay_star, 7);
        assert!(est.fit.mse < 1e-18 && est.fit.slope.abs() < 1e-9);
        // Brute-force oracle agrees on the full loss profile.
        let brute = solve_opt_delay_recompute(&rx, &x, &s, 10, &plan, &cfg).unwrap();
        assert_eq!(brute.delay_star, 7);
        for (a, b) in est.loss_profile.iter().zip(&brute.loss_profile) {
            assert!((a - b).abs() < 1e-7 * b.max(1e-12));
        }
        // The true delay is the unique minimum.
        let others = est.loss_profile.iter().enumerate().filter(|(d, _)| *d != 7).map(|(_, v)| *v);
        assert!(others.fold(f64::INFINITY, f64::min) > 1e-3);
    }

    #[test]
    fn pure_rotation() {
        let x = random(1024, 5);
        let rx = delayed(&x, 0, Complex64::from_polar(1.0, PI / 4.0));
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let est = solve_opt_delay(&rx, &x, &s, 0, &PredistortionPlan::identity(34), &DelaySearchConfig::default()).unwrap();
        assert_eq!(est.delay_star, 0);
        assert!((est.fit.intercept - PI / 4.0).abs() < 1e-6);
        assert!(est.fit.slope.abs() < 1e-6);
    }

    #[test]
    fn op_counts() {
        let x = random(1024, 6);
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let plan = PredistortionPlan::identity(34);
        let cfg = DelaySearchConfig::default();
        let a = solve_opt_delay(&x, &x, &s, 0, &plan, &cfg).unwrap();
        let b = solve_opt_delay_recompute(&x, &x, &s, 0, &plan, &cfg).unwrap();
        assert_eq!(a.multiply_adds, 150 + 9 * 30 + 300);
        assert_eq!(b.multiply_adds, 10 * 150 + 300);
        // Bound C (N' log N' + N' N_dn) with C = 2.
        assert!(a.multiply_adds <= 2 * (150 + 300));
    }

    #[test]
    fn no_usable_subcarriers() {
        let x = vec![Complex64::new(0.0, 0.0); 1024];
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let e = solve_opt_delay(&x, &x, &s, 0, &PredistortionPlan::identity(34), &DelaySearchConfig::default()).unwrap_err();
        assert_eq!(e.to_string(), "no usable subcarriers");
    }

    #[test]
    fn features() {
        let x = random(1024, 7);
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let est = solve_opt_delay(&x, &x, &s, 2, &PredistortionPlan::identity(34), &DelaySearchConfig::default()).unwrap();
        let f = extract_features(&est);
        assert!((f.received_power - 1.0).abs() < 1e-9);
        assert!(f.phase_slope.abs() < 1e-12 && f.linearity_loss < 1e-18);
        assert_eq!(f.normalized_power(2.0), f.received_power / 2.0);
    }

    #[test]
    fn two_paths_are_less_linear() {
        let x = random(1024, 8);
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let plan = PredistortionPlan::identity(34);
        let cfg = DelaySearchConfig::default();
        let one = delayed(&x, 2, Complex64::new(1.0, 0.0));
        let two: Vec<Complex64> = one.iter().zip(delayed(&x, 7, Complex64::new(1.0, 0.0))).map(|(a, b)| a + b).collect();
        let f1 = extract_features(&solve_opt_delay(&one, &x, &s, 5, &plan, &cfg).unwrap());
        let f2 = extract_features(&solve_opt_delay(&two, &x, &s, 5, &plan, &cfg).unwrap());
        assert!(f2.linearity_loss > f1.linearity_loss);
    }

    #[test]
    fn predistortion_scale_is_undone() {
        let x = random(1024, 9);
        let s = SubSymbolSchedule::new(1024, 4).unwrap();
        let plan = PredistortionPlan { factors: vec![2.0, 1.0, 0.5, 1.0] };
        // Transmitted window 0 was scaled by 2; the channel is identity.
        let mut sent = x.clone();
        sent[..256].iter_mut().for_each(|v| *v *= 2.0);
        let h = sub_symbol_csi(&sent, &x, &s, 0, 0, &plan).unwrap();
        assert!(h.iter().all(|h| (h - 1.0).norm() < 1e-9));
    }

    #[test]
    fn symbol_estimates() {
        let x = random(1024, 10);
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        let plan = PredistortionPlan::identity(34);
        let cfg = DelaySearchConfig::default();
        let rx = delayed(&x, 3, Complex64::new(0.5, 0.0));
        let seq = estimate_symbol(&rx, &x, &s, &plan, &cfg, Execution::Sequential).unwrap();
        let par = estimate_symbol(&rx, &x, &s, &plan, &cfg, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.len(), 34);
        assert!(seq.iter().all(|c| c.csi.len() == 30 && c.delay_star == 3));
        assert!(estimate_symbol(&rx, &x, &s, &PredistortionPlan::identity(3), &cfg, Execution::Sequential).is_err());
        // M = 1 is a single whole-symbol solve.
        let one = SubSymbolSchedule::new(1024, 1).unwrap();
        let p1 = PredistortionPlan::identity(1);
        let all = estimate_symbol(&rx, &x, &one, &p1, &cfg, Execution::Sequential).unwrap();
        assert_eq!(all[0], solve_opt_delay(&rx, &x, &one, 0, &p1, &cfg).unwrap());
    }

    #[test]
    fn csv_dump() {
        let x = random(1024, 11);
        let s = SubSymbolSchedule::new(1024, 2).unwrap();
        let est = estimate_symbol(&x, &x, &s, &PredistortionPlan::identity(2), &DelaySearchConfig::default(), Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &[(-1.0, &est[0]), (1.0, &est[1])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("beam,sensing_angle_deg,delay_star"));
    }
}
