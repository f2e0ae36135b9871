//! Beam patterns, the epsilon trade-off sweep and the OPT-Base/OPT-Accel
//! comparison.

use serde::Serialize;

use crate::array::{ArrayGeometry, Beamformer, Direction};
use crate::error::Result;
use crate::optimizer::{solve_opt_accel, solve_opt_base, user_snrs, OptimizerConfig, SensingTarget, UserLink};
use crate::par::{self, Execution};
use crate::units::lin_to_db;

/// Gain of every beam over an azimuth cut (elevation 0 on planar arrays).
/// Row `i` holds `angles_deg[i]` followed by one linear gain per beam.
pub fn pattern_table(geometry: &ArrayGeometry, beams: &[Beamformer], angles_deg: &[f64]) -> Result<Vec<Vec<f64>>> {
    angles_deg
        .iter()
        .map(|&a| {
            let dir = Direction::from_degrees(a, None).fit_to(geometry);
            let mut row = vec![a];
            for b in beams {
                row.push(b.gain(geometry, dir)?);
            }
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub epsilon: f64,
    pub sensing_gain_db: f64,
    pub gamma_min_db: f64,
    pub user_snr_db: Vec<f64>,
}

/// One cold OPT-Accel solve per epsilon.
pub fn tradeoff_sweep(
    users: &[UserLink],
    target: &SensingTarget,
    geometry: &ArrayGeometry,
    cfg: &OptimizerConfig,
    epsilons: &[f64],
    exec: Execution,
) -> Result<Vec<TradeoffPoint>> {
    par::try_map_range(exec, epsilons.len(), |i| {
        let c = OptimizerConfig { epsilon: epsilons[i], ..*cfg };
        let e = solve_opt_accel(users, target, geometry, &c)?;
        let sensing = target.base_snr * e.weights.gain(geometry, target.direction)?;
        Ok(TradeoffPoint {
            epsilon: epsilons[i],
            sensing_gain_db: lin_to_db(sensing),
            gamma_min_db: lin_to_db(e.gamma_min),
            user_snr_db: user_snrs(&e.weights, geometry, users)?.into_iter().map(lin_to_db).collect(),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityRow {
    pub label: String,
    pub angle_deg: f64,
    pub base_db: f64,
    pub accel_db: f64,
}

impl ParityRow {
    pub fn diff_db(&self) -> f64 {
        (self.base_db - self.accel_db).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityReport {
    pub rows: Vec<ParityRow>,
    pub base_converged: bool,
}

impl ParityReport {
    pub fn max_diff_db(&self) -> f64 {
        self.rows.iter().map(ParityRow::diff_db).fold(0.0, f64::max)
    }
}

/// Beamforming gain at the sensing angle and every user angle for both
/// solvers.
pub fn parity(
    users: &[UserLink],
    target: &SensingTarget,
    geometry: &ArrayGeometry,
    cfg: &OptimizerConfig,
) -> Result<ParityReport> {
    let base = solve_opt_base(users, target, geometry, cfg)?;
    let accel = solve_opt_accel(users, target, geometry, cfg)?;
    let mut rows = Vec::with_capacity(users.len() + 1);
    let mut push = |label: String, dir: Direction| -> Result<()> {
        rows.push(ParityRow {
            label,
            angle_deg: dir.azimuth.to_degrees(),
            base_db: lin_to_db(base.weights.gain(geometry, dir)?),
            accel_db: lin_to_db(accel.weights.gain(geometry, dir)?),
        });
        Ok(())
    };
    push("sensing".into(), target.direction)?;
    for (i, u) in users.iter().enumerate() {
        push(format!("user{i}"), u.direction)?;
    }
    Ok(ParityReport { rows, base_converged: base.converged })
}
