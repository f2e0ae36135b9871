//! ISAC beamformer optimization.
//!
//! [`solve_opt_accel`] maximizes the minimum user SNR while keeping every
//! weight within `epsilon` of the conjugate sensing beam; [`solve_opt_base`]
//! maximizes a weighted sum of sensing and mean user SNR. A [`Codebook`] holds
//! one OPT-Accel beam per sensing angle and is maintained under user motion
//! by [`update_codebook`].

mod accel;
mod base;
mod codebook;

pub use accel::{project_feasible, solve_opt_accel, solve_opt_accel_from};
pub use base::{solve_opt_base, BaseSolution};
pub use codebook::{build_codebook, update_codebook, Codebook, EntryUpdate, UpdateStats};

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, Beamformer, Direction};
use crate::error::{param, Result};

/// Half-width of the array field of view used to validate user angles.
pub const DEFAULT_FOV: f64 = 60.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLink {
    pub direction: Direction,
    /// Linear SNR before beamforming gain.
    pub base_snr: f64,
}

impl UserLink {
    pub fn new(direction: Direction, base_snr: f64) -> Self {
        Self { direction, base_snr }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_snr > 0.0) || !self.base_snr.is_finite() {
            return param(format!("user base SNR must be positive, got {}", self.base_snr));
        }
        let off_fov = |a: f64| a.abs() > DEFAULT_FOV + 1e-12;
        if off_fov(self.direction.azimuth) || self.direction.elevation.is_some_and(off_fov) {
            return param(format!(
                "user direction {:?} outside the +-60 degree field of view",
                self.direction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingTarget {
    pub direction: Direction,
    pub base_snr: f64,
}

impl SensingTarget {
    pub fn new(direction: Direction, base_snr: f64) -> Self {
        Self { direction, base_snr }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_snr > 0.0) || !self.base_snr.is_finite() {
            return param(format!("sensing base SNR must be positive, got {}", self.base_snr));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Per-element perturbation radius around the conjugate sensing beam.
    pub epsilon: f64,
    /// Sensing weight in the OPT-Base objective.
    pub alpha_tradeoff: f64,
    /// Stationarity threshold on the projected gradient, in linear SNR units.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Reuse threshold of the online update, absolute linear SNR.
    pub snr_match_tol: f64,
    /// Randomized starts for a cold OPT-Accel solve.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            alpha_tradeoff: 1.0,
            grad_tol: 1e-2,
            max_iters: 3000,
            snr_match_tol: 1e-2,
            restarts: 4,
            seed: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return param(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.alpha_tradeoff >= 0.0) || !self.alpha_tradeoff.is_finite() {
            return param(format!("alpha must be non-negative, got {}", self.alpha_tradeoff));
        }
        if !(self.grad_tol > 0.0) {
            return param(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if self.max_iters == 0 {
            return param("max_iters must be positive");
        }
        if !(self.snr_match_tol >= 0.0) {
            return param(format!("snr_match_tol must be non-negative, got {}", self.snr_match_tol));
        }
        if self.restarts == 0 {
            return param("restarts must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookEntry {
    pub sensing: Direction,
    pub weights: Beamformer,
    /// Minimum user SNR (linear); `+inf` when there are no users.
    pub gamma_min: f64,
    pub converged: bool,
    /// Set when no perturbation improved on the conjugate beam.
    pub conjugate_fallback: bool,
}

/// Minimum effective SNR over `users`, `+inf` for an empty set.
pub fn gamma_min(w: &Beamformer, geometry: &ArrayGeometry, users: &[UserLink]) -> Result<f64> {
    let mut m = f64::INFINITY;
    for u in users {
        m = m.min(crate::array::effective_snr(u.base_snr, w, geometry, u.direction)?);
    }
    Ok(m)
}

/// Per-user effective SNRs.
pub fn user_snrs(w: &Beamformer, geometry: &ArrayGeometry, users: &[UserLink]) -> Result<Vec<f64>> {
    users
        .iter()
        .map(|u| crate::array::effective_snr(u.base_snr, w, geometry, u.direction))
        .collect()
}

/// Prepared steering matrix and normalized per-user weights.
///
/// SNRs are scaled by `1 / (N^2 max_u gamma_u)` so the smoothed objective is
/// O(1) regardless of array size and link budget.
pub(crate) struct Problem {
    pub rows: Vec<Vec<num_complex::Complex64>>,
    pub scale: Vec<f64>,
    /// Multiply a normalized SNR by this to get linear SNR.
    pub unit: f64,
}

impl Problem {
    pub fn new(geometry: &ArrayGeometry, links: &[(Direction, f64)]) -> Result<Self> {
        let gmax = links.iter().map(|l| l.1).fold(0.0, f64::max);
        let unit = geometry.max_gain() * if gmax > 0.0 { gmax } else { 1.0 };
        let mut rows = Vec::with_capacity(links.len());
        let mut scale = Vec::with_capacity(links.len());
        for (d, g) in links {
            rows.push(geometry.steering(*d)?);
            scale.push(g / unit);
        }
        Ok(Self { rows, scale, unit })
    }

    pub fn responses(&self, w: &[num_complex::Complex64]) -> Vec<num_complex::Complex64> {
        self.rows.iter().map(|a| crate::array::response(a, w)).collect()
    }

    pub fn gains(&self, w: &[num_complex::Complex64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.scale)
            .map(|(a, g)| g * crate::array::response(a, w).norm_sqr())
            .collect()
    }
}

pub(crate) fn check_inputs(
    users: &[UserLink],
    target: &SensingTarget,
    geometry: &ArrayGeometry,
    cfg: &OptimizerConfig,
) -> Result<()> {
    cfg.validate()?;
    target.validate()?;
    geometry.steering(target.direction)?;
    for u in users {
        u.validate()?;
        geometry.steering(u.direction)?;
    }
    Ok(())
}
