//! Antenna array geometry, steering vectors, beamforming gain and weight
//! quantization.
//!
//! Angles are radians and gains are linear power ratios throughout; dB and
//! degrees appear only at the CLI/config boundary.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Uniform linear array along the azimuth axis.
    Linear,
    /// Uniform planar array, `rows` along elevation and `cols` along azimuth.
    Planar { rows: usize, cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    num_elements: usize,
    /// Element spacing in wavelengths.
    spacing: f64,
    layout: Layout,
}

/// A look direction. Linear arrays take azimuth only; planar arrays need both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: Option<f64>,
}

impl Direction {
    pub fn azimuth(azimuth: f64) -> Self {
        Self { azimuth, elevation: None }
    }

    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation: Some(elevation) }
    }

    pub fn from_degrees(azimuth: f64, elevation: Option<f64>) -> Self {
        Self {
            azimuth: azimuth.to_radians(),
            elevation: elevation.map(f64::to_radians),
        }
    }

    /// The same direction expressed for `geometry`: elevation is dropped for a
    /// linear array and defaults to 0 for a planar one.
    pub fn fit_to(self, geometry: &ArrayGeometry) -> Self {
        if geometry.is_planar() {
            Self { azimuth: self.azimuth, elevation: Some(self.elevation.unwrap_or(0.0)) }
        } else {
            Self::azimuth(self.azimuth)
        }
    }
}

impl ArrayGeometry {
    pub fn ula(num_elements: usize) -> Result<Self> {
        Self::ula_with_spacing(num_elements, 0.5)
    }

    pub fn ula_with_spacing(num_elements: usize, spacing: f64) -> Result<Self> {
        let g = Self { num_elements, spacing, layout: Layout::Linear };
        g.validate()?;
        Ok(g)
    }

    pub fn planar(rows: usize, cols: usize) -> Result<Self> {
        Self::planar_with_spacing(rows, cols, 0.5)
    }

    pub fn planar_with_spacing(rows: usize, cols: usize, spacing: f64) -> Result<Self> {
        let g = Self {
            num_elements: rows * cols,
            spacing,
            layout: Layout::Planar { rows, cols },
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.num_elements == 0 {
            return param("array needs at least one element");
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return param(format!("element spacing must be positive, got {}", self.spacing));
        }
        Ok(())
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn is_planar(&self) -> bool {
        matches!(self.layout, Layout::Planar { .. })
    }

    /// `N^2`, the conjugate-beamforming peak gain.
    pub fn max_gain(&self) -> f64 {
        (self.num_elements * self.num_elements) as f64
    }

    /// Steering vector towards `dir`. Element `n` of a linear array is
    /// `exp(j 2 pi n d sin(az))`; a planar array uses the separable product of
    /// its column (azimuth) and row (elevation) progressions, row-major.
    pub fn steering(&self, dir: Direction) -> Result<Vec<Complex64>> {
        if !(dir.azimuth.abs() <= PI / 2.0) {
            return param(format!("azimuth {} rad outside [-pi/2, pi/2]", dir.azimuth));
        }
        let k = 2.0 * PI * self.spacing;
        match (self.layout, dir.elevation) {
            (Layout::Linear, None) => {
                let psi = k * dir.azimuth.sin();
                Ok((0..self.num_elements)
                    .map(|n| Complex64::from_polar(1.0, psi * n as f64))
                    .collect())
            }
            (Layout::Planar { rows, cols }, Some(el)) => {
                if !(el.abs() <= PI / 2.0) {
                    return param(format!("elevation {el} rad outside [-pi/2, pi/2]"));
                }
                let psi_az = k * dir.azimuth.sin();
                let psi_el = k * el.sin();
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for c in 0..cols {
                        out.push(Complex64::from_polar(1.0, psi_az * c as f64 + psi_el * r as f64));
                    }
                }
                Ok(out)
            }
            (Layout::Linear, Some(_)) => param("elevation given for a linear array"),
            (Layout::Planar { .. }, None) => param("planar array requires an elevation angle"),
        }
    }
}

/// Steering vector for azimuth/elevation angles in radians.
pub fn steering_vector(
    geometry: &ArrayGeometry,
    azimuth: f64,
    elevation: Option<f64>,
) -> Result<Vec<Complex64>> {
    geometry.steering(Direction { azimuth, elevation })
}

/// `s^T w`, the complex array response.
#[inline]
pub fn response(steering: &[Complex64], weights: &[Complex64]) -> Complex64 {
    steering.iter().zip(weights).map(|(s, w)| s * w).sum()
}

/// Per-element complex weights with `|w_n| <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct Beamformer {
    weights: Vec<Complex64>,
}

/// Amplitudes may exceed one by this much to absorb rounding in projections.
pub const AMPLITUDE_SLACK: f64 = 1e-9;

impl Beamformer {
    pub fn new(weights: Vec<Complex64>) -> Result<Self> {
        if weights.is_empty() {
            return param("beamformer needs at least one weight");
        }
        if let Some((n, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.norm() <= 1.0 + AMPLITUDE_SLACK))
        {
            return param(format!("weight {n} has amplitude {} > 1", w.norm()));
        }
        Ok(Self { weights })
    }

    pub(crate) fn from_raw(weights: Vec<Complex64>) -> Self {
        debug_assert!(weights.iter().all(|w| w.norm() <= 1.0 + AMPLITUDE_SLACK));
        Self { weights }
    }

    /// Conjugate beamformer `conj(s(dir))`, the `N^2` gain beam.
    pub fn conjugate(geometry: &ArrayGeometry, dir: Direction) -> Result<Self> {
        Ok(Self::from_raw(geometry.steering(dir)?.iter().map(|s| s.conj()).collect()))
    }

    pub fn zeros(n: usize) -> Self {
        Self { weights: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Multiplies every weight by `exp(j theta)`.
    pub fn rotated(&self, theta: f64) -> Self {
        let r = Complex64::from_polar(1.0, theta);
        Self { weights: self.weights.iter().map(|w| w * r).collect() }
    }

    pub fn gain(&self, geometry: &ArrayGeometry, dir: Direction) -> Result<f64> {
        beamforming_gain(self, geometry, dir)
    }
}

impl TryFrom<Vec<Complex64>> for Beamformer {
    type Error = crate::Error;

    fn try_from(v: Vec<Complex64>) -> Result<Self> {
        Beamformer::new(v)
    }
}

impl From<Beamformer> for Vec<Complex64> {
    fn from(b: Beamformer) -> Self {
        b.weights
    }
}

/// `|s^T(dir) w|^2`.
pub fn beamforming_gain(w: &Beamformer, geometry: &ArrayGeometry, dir: Direction) -> Result<f64> {
    if w.len() != geometry.num_elements() {
        return param(format!(
            "beamformer has {} weights but the array has {} elements",
            w.len(),
            geometry.num_elements()
        ));
    }
    let s = geometry.steering(dir)?;
    Ok(response(&s, w.weights()).norm_sqr())
}

/// Baseline SNR scaled by the beamforming gain towards `dir`.
pub fn effective_snr(
    base_snr: f64,
    w: &Beamformer,
    geometry: &ArrayGeometry,
    dir: Direction,
) -> Result<f64> {
    if !(base_snr >= 0.0) {
        return param(format!("base SNR must be non-negative, got {base_snr}"));
    }
    Ok(base_snr * beamforming_gain(w, geometry, dir)?)
}

/// Hardware weight resolution.
///
/// Amplitudes snap to `2^amplitude_bits` uniform levels on `[0, 1]`. Phases
/// snap to a uniform grid of `ceil(2 pi / phase_step)` levels covering the
/// circle, so the effective step never exceeds `phase_step` and the grid
/// closes across the `+-pi` seam. For the default 4.87 degree step that is 74
/// levels of 4.865 degrees. Ties go to the lower level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub amplitude_bits: u32,
    pub phase_step: f64,
}

impl Default for QuantizationSpec {
    fn default() -> Self {
        Self { amplitude_bits: 5, phase_step: 4.87f64.to_radians() }
    }
}

impl QuantizationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.amplitude_bits == 0 || self.amplitude_bits > 24 {
            return param(format!("amplitude_bits must be in 1..=24, got {}", self.amplitude_bits));
        }
        if !(self.phase_step > 0.0 && self.phase_step < 2.0 * PI) {
            return param(format!("phase_step must be in (0, 2pi), got {}", self.phase_step));
        }
        Ok(())
    }

    pub fn amplitude_levels(&self) -> u32 {
        1 << self.amplitude_bits
    }

    pub fn phase_levels(&self) -> u32 {
        (2.0 * PI / self.phase_step - 1e-9).ceil() as u32
    }

    /// Spacing of the phase grid actually used.
    pub fn effective_phase_step(&self) -> f64 {
        2.0 * PI / self.phase_levels() as f64
    }
}

/// Nearest multiple of `step` to `x`, ties to the lower multiple.
fn round_half_down(x: f64, step: f64) -> f64 {
    let q = x / step;
    let lo = q.floor();
    let frac = q - lo;
    if frac > 0.5 {
        lo + 1.0
    } else {
        lo
    }
}

pub fn quantize(w: &Beamformer, spec: &QuantizationSpec) -> Result<Beamformer> {
    spec.validate()?;
    let amp_step = 1.0 / (spec.amplitude_levels() - 1) as f64;
    let levels = spec.phase_levels() as f64;
    let ph_step = spec.effective_phase_step();
    let weights = w
        .weights()
        .iter()
        .map(|z| {
            let a = (round_half_down(z.norm().min(1.0), amp_step) * amp_step).min(1.0);
            if a == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let mut k = round_half_down(z.arg(), ph_step);
            // Wrap the level index into [-levels/2, levels/2) so the angle is in [-pi, pi).
            let half = (levels / 2.0).floor();
            k = (k + half).rem_euclid(levels) - half;
            Complex64::from_polar(a, k * ph_step)
        })
        .collect();
    Ok(Beamformer::from_raw(weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_element_steering() {
        let g = ArrayGeometry::ula(1).unwrap();
        for phi in [-1.2, 0.0, 0.7] {
            assert_eq!(steering_vector(&g, phi, None).unwrap(), vec![c(1.0, 0.0)]);
        }
    }

    #[test]
    fn broadside_is_all_ones() {
        let g = ArrayGeometry::ula(8).unwrap();
        for s in steering_vector(&g, 0.0, None).unwrap() {
            assert!((s - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn thirty_degree_quarter_turns() {
        let g = ArrayGeometry::ula(4).unwrap();
        let s = steering_vector(&g, 30f64.to_radians(), None).unwrap();
        let expected = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn elevation_must_match_layout() {
        let ula = ArrayGeometry::ula(4).unwrap();
        assert!(steering_vector(&ula, 0.1, Some(0.0)).is_err());
        let upa = ArrayGeometry::planar(2, 2).unwrap();
        assert!(steering_vector(&upa, 0.1, None).is_err());
        assert_eq!(steering_vector(&upa, 0.1, Some(0.2)).unwrap().len(), 4);
    }

    #[test]
    fn invalid_geometry() {
        assert!(ArrayGeometry::ula(0).is_err());
        assert!(ArrayGeometry::ula_with_spacing(4, 0.0).is_err());
        assert!(ArrayGeometry::ula_with_spacing(4, -0.5).is_err());
    }

    #[test]
    fn conjugate_gain_is_n_squared() {
        let g = ArrayGeometry::ula(16).unwrap();
        let dir = Direction::azimuth(0.3);
        let w = Beamformer::conjugate(&g, dir).unwrap();
        let gain = beamforming_gain(&w, &g, dir).unwrap();
        assert!((gain - 256.0).abs() / 256.0 < 1e-12);
        assert!((crate::units::lin_to_db(gain) - 24.08).abs() < 5e-3);
    }

    #[test]
    fn zero_and_null_gain() {
        let g = ArrayGeometry::ula(16).unwrap();
        assert_eq!(beamforming_gain(&Beamformer::zeros(16), &g, Direction::azimuth(0.2)).unwrap(), 0.0);
        let g2 = ArrayGeometry::ula(2).unwrap();
        let w = Beamformer::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let gain = beamforming_gain(&w, &g2, Direction::azimuth(PI / 2.0)).unwrap();
        assert!(gain < 1e-24);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let g = ArrayGeometry::ula(4).unwrap();
        assert!(beamforming_gain(&Beamformer::zeros(3), &g, Direction::azimuth(0.0)).is_err());
    }

    #[test]
    fn effective_snr_cases() {
        let g = ArrayGeometry::ula(8).unwrap();
        let dir = Direction::azimuth(-0.4);
        let w = Beamformer::conjugate(&g, dir).unwrap();
        assert!((effective_snr(1.0, &w, &g, dir).unwrap() - 64.0).abs() < 1e-9);
        assert_eq!(effective_snr(0.0, &w, &g, dir).unwrap(), 0.0);
        assert!(effective_snr(-1.0, &w, &g, dir).is_err());
        let g2 = ArrayGeometry::ula(2).unwrap();
        let w2 = Beamformer::new(vec![c(1.0, 0.0); 2]).unwrap();
        assert!(effective_snr(10.0, &w2, &g2, Direction::azimuth(PI / 2.0)).unwrap() < 1e-20);
    }

    #[test]
    fn beamformer_rejects_large_amplitude() {
        assert!(Beamformer::new(vec![c(1.1, 0.0)]).is_err());
        assert!(Beamformer::new(vec![]).is_err());
    }

    #[test]
    fn quantize_grid_point_unchanged() {
        let w = Beamformer::new(vec![c(1.0, 0.0)]).unwrap();
        let q = quantize(&w, &QuantizationSpec::default()).unwrap();
        assert_eq!(q.weights()[0], c(1.0, 0.0));
    }

    #[test]
    fn one_bit_amplitude_levels() {
        // Levels are {0, 1}; 0.49 is nearer 0, 0.51 nearer 1, 0.5 ties low.
        let spec = QuantizationSpec { amplitude_bits: 1, phase_step: 0.1 };
        let q = |a: f64| quantize(&Beamformer::new(vec![c(a, 0.0)]).unwrap(), &spec).unwrap().weights()[0].norm();
        assert_eq!(q(0.49), 0.0);
        assert_eq!(q(0.51), 1.0);
        assert_eq!(q(0.5), 0.0);
    }

    #[test]
    fn default_phase_grid() {
        let spec = QuantizationSpec::default();
        assert_eq!(spec.amplitude_levels(), 32);
        assert_eq!(spec.phase_levels(), 74);
        assert!(spec.effective_phase_step() <= spec.phase_step);
    }

    #[test]
    fn phase_seam_wraps_into_range() {
        let spec = QuantizationSpec::default();
        for theta in [PI - 1e-6, -PI, -PI + 1e-6, 3.1] {
            let w = Beamformer::new(vec![Complex64::from_polar(1.0, theta)]).unwrap();
            let q = quantize(&w, &spec).unwrap().weights()[0];
            assert!(q.arg() >= -PI - 1e-12 && q.arg() < PI);
        }
    }

    fn arb_weight() -> impl Strategy<Value = Complex64> {
        (0.0f64..=1.0, -PI..PI).prop_map(|(a, p)| Complex64::from_polar(a, p))
    }

    proptest! {
        #[test]
        fn steering_is_unit_modulus(n in 1usize..40, phi in -1.5f64..1.5, d in 0.1f64..2.0) {
            let g = ArrayGeometry::ula_with_spacing(n, d).unwrap();
            for s in g.steering(Direction::azimuth(phi)).unwrap() {
                prop_assert!((s.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn gain_bounded_by_n_squared(phases in proptest::collection::vec(-PI..PI, 1..32), phi in -1.5f64..1.5) {
            let g = ArrayGeometry::ula(phases.len()).unwrap();
            let w = Beamformer::new(phases.iter().map(|p| Complex64::from_polar(1.0, *p)).collect()).unwrap();
            let gain = w.gain(&g, Direction::azimuth(phi)).unwrap();
            prop_assert!(gain <= g.max_gain() * (1.0 + 1e-12));
        }

        #[test]
        fn gain_invariant_to_global_phase(ws in proptest::collection::vec(arb_weight(), 2..24), phi in -1.5f64..1.5, theta in -PI..PI) {
            let g = ArrayGeometry::ula(ws.len()).unwrap();
            let w = Beamformer::new(ws).unwrap();
            let a = w.gain(&g, Direction::azimuth(phi)).unwrap();
            let b = w.rotated(theta).gain(&g, Direction::azimuth(phi)).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
        }

        #[test]
        fn quantization_error_bounds(ws in proptest::collection::vec(arb_weight(), 1..16), bits in 1u32..8, step_deg in 1.0f64..60.0) {
            let spec = QuantizationSpec { amplitude_bits: bits, phase_step: step_deg.to_radians() };
            let w = Beamformer::new(ws).unwrap();
            let q = quantize(&w, &spec).unwrap();
            let q2 = quantize(&q, &spec).unwrap();
            prop_assert_eq!(&q, &q2);
            let half_amp = 0.5 / (spec.amplitude_levels() - 1) as f64;
            for (a, b) in w.weights().iter().zip(q.weights()) {
                prop_assert!((a.norm() - b.norm()).abs() <= half_amp + 1e-12);
                prop_assert!(b.norm() <= 1.0);
                if b.norm() > 0.0 {
                    let d = (a.arg() - b.arg() + PI).rem_euclid(2.0 * PI) - PI;
                    prop_assert!(d.abs() <= spec.phase_step / 2.0 + 1e-12);
                    prop_assert!(b.arg() >= -PI && b.arg() < PI);
                }
            }
        }
    }
}
