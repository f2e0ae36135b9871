//! Codebook maintenance while users move: one `update_codebook` per tick.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, Direction};
use crate::error::{param, Result};
use crate::optimizer::{build_codebook, solve_opt_accel, update_codebook, OptimizerConfig, SensingTarget, UserLink, DEFAULT_FOV};
use crate::par::Execution;
use crate::units::lin_to_db;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub rows: usize,
    pub cols: usize,
    pub user_angles_deg: Vec<f64>,
    pub user_base_snr: f64,
    /// Index of the user that sweeps from `start_deg` to `end_deg`.
    pub moving_user: usize,
    pub start_deg: f64,
    pub end_deg: f64,
    pub duration_s: f64,
    pub tick_s: f64,
    pub sweep_deg: Vec<f64>,
    pub sensing_base_snr: f64,
    pub optimizer: OptimizerConfig,
    /// Ticks re-checked against a cold solve.
    pub soundness_samples: usize,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 8,
            user_angles_deg: vec![-30.0, -10.0, 10.0, 30.0],
            user_base_snr: 1.0,
            moving_user: 0,
            start_deg: -30.0,
            end_deg: 30.0,
            duration_s: 10.0,
            tick_s: 5e-3,
            sweep_deg: vec![0.0],
            sensing_base_snr: 1.0,
            optimizer: OptimizerConfig::default(),
            soundness_samples: 20,
        }
    }
}

impl MobilityConfig {
    pub fn num_ticks(&self) -> usize {
        (self.duration_s / self.tick_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tick_s > 0.0) || !(self.duration_s >= self.tick_s) {
            return param("need duration_s >= tick_s > 0");
        }
        if self.moving_user >= self.user_angles_deg.len() && !self.user_angles_deg.is_empty() {
            return param("moving_user out of range");
        }
        let fov = DEFAULT_FOV.to_degrees();
        if [self.start_deg, self.end_deg].iter().chain(&self.user_angles_deg).any(|a| !(a.abs() <= fov)) {
            return param(format!("user angles must stay within +-{fov} degrees"));
        }
        if self.sweep_deg.is_empty() {
            return param("sensing sweep is empty");
        }
        Ok(())
    }

    /// Moving-user angle at tick `k` (tick 0 is the initial position).
    pub fn angle_at(&self, k: usize) -> f64 {
        let n = self.num_ticks().max(1);
        self.start_deg + (self.end_deg - self.start_deg) * k as f64 / n as f64
    }

    fn users_at(&self, k: usize) -> Vec<UserLink> {
        self.user_angles_deg
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let a = if i == self.moving_user { self.angle_at(k) } else { a };
                UserLink::new(Direction::from_degrees(a, Some(0.0)), self.user_base_snr)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MobilityTick {
    pub tick: usize,
    pub time_s: f64,
    pub moving_angle_deg: f64,
    pub reoptimized: usize,
    /// Stored minimum user SNR of entry 0, dB.
    pub gamma_min_db: f64,
    /// Actual minimum user SNR of entry 0 at this tick, dB.
    pub gamma_min_actual_db: f64,
    /// Gain of entry 0 towards its sensing angle, dB.
    pub sensing_gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoundnessCheck {
    pub tick: usize,
    pub entry: usize,
    pub reused: bool,
    pub stored_gamma_db: f64,
    pub fresh_gamma_db: f64,
    /// A reuse is sound when the cold solve does not beat the stored value by
    /// more than the match tolerance; a re-solve is justified when the cold
    /// solve departs from the stale value by more than it.
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MobilityReport {
    pub ticks: Vec<MobilityTick>,
    pub reoptimized_ticks: usize,
    pub reoptimized_entries: usize,
    pub reoptimized_fraction: f64,
    pub sensing_min_db: f64,
    pub sensing_max_db: f64,
    /// Every tick without a re-solve left the serialized codebook unchanged.
    pub reuse_bytes_stable: bool,
    pub soundness: Vec<SoundnessCheck>,
    /// Wall time of each update. Not part of any written output.
    #[serde(skip)]
    pub update_times: Vec<Duration>,
}

impl MobilityReport {
    pub fn sensing_band_db(&self) -> f64 {
        self.sensing_max_db - self.sensing_min_db
    }

    pub fn soundness_ok(&self) -> bool {
        self.soundness.iter().all(|c| c.consistent)
    }
}

pub fn run_mobility(cfg: &MobilityConfig, seed: u64, exec: Execution) -> Result<MobilityReport> {
    cfg.validate()?;
    let geometry = ArrayGeometry::planar(cfg.rows, cfg.cols)?;
    let opt = OptimizerConfig { seed, ..cfg.optimizer };
    let sweep: Vec<Direction> = cfg.sweep_deg.iter().map(|&a| Direction::from_degrees(a, Some(0.0))).collect();
    let n = cfg.num_ticks();
    let mut cb = build_codebook(&cfg.users_at(0), &sweep, cfg.sensing_base_snr, &geometry, &opt, exec)?;
    let samples: Vec<usize> = (0..cfg.soundness_samples).map(|i| 1 + (2 * i + 1) * n / (2 * cfg.soundness_samples.max(1))).collect();

    let mut ticks = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    let mut soundness = Vec::new();
    let (mut re_ticks, mut re_entries, mut stable) = (0, 0, true);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 1..=n {
        let users = cfg.users_at(k);
        let before = cb.to_json()?;
        let start = Instant::now();
        let (next, stats) = update_codebook(&cb, &users, &geometry, &opt, exec)?;
        times.push(start.elapsed());
        if stats.reoptimized > 0 {
            re_ticks += 1;
            re_entries += stats.reoptimized;
        } else if next.to_json()? != before {
            stable = false;
        }
        if samples.contains(&k) {
            for (i, rec) in stats.entries.iter().enumerate() {
                let target = SensingTarget::new(sweep[i], cfg.sensing_base_snr);
                let fresh = solve_opt_accel(&users, &target, &geometry, &OptimizerConfig { seed: opt.seed.wrapping_add(i as u64), ..opt })?;
                let gap = fresh.gamma_min - rec.gamma_min_before;
                let consistent = if rec.reoptimized { gap.abs() > opt.snr_match_tol } else { gap <= opt.snr_match_tol };
                soundness.push(SoundnessCheck {
                    tick: k,
                    entry: i,
                    reused: !rec.reoptimized,
                    stored_gamma_db: lin_to_db(rec.gamma_min_before),
                    fresh_gamma_db: lin_to_db(fresh.gamma_min),
                    consistent,
                });
            }
        }
        cb = next;
        let e0 = &cb.entries[0];
        let sensing = lin_to_db(e0.weights.gain(&geometry, sweep[0])?);
        lo = lo.min(sensing);
        hi = hi.max(sensing);
        ticks.push(MobilityTick {
            tick: k,
            time_s: k as f64 * cfg.tick_s,
            moving_angle_deg: cfg.angle_at(k),
            reoptimized: stats.reoptimized,
            gamma_min_db: lin_to_db(e0.gamma_min),
            gamma_min_actual_db: lin_to_db(stats.entries[0].gamma_min_predicted),
            sensing_gain_db: sensing,
        });
    }
    Ok(MobilityReport {
        ticks,
        reoptimized_ticks: re_ticks,
        reoptimized_entries: re_entries,
        reoptimized_fraction: re_ticks as f64 / n.max(1) as f64,
        sensing_min_db: lo,
        sensing_max_db: hi,
        reuse_bytes_stable: stable,
        soundness,
        update_times: times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_users_are_always_reused() {
        let cfg = MobilityConfig { start_deg: -30.0, end_deg: -30.0, duration_s: 0.1, soundness_samples: 0, ..Default::default() };
        let r = run_mobility(&cfg, 1, Execution::Sequential).unwrap();
        assert_eq!(r.ticks.len(), 20);
        assert_eq!(r.reoptimized_ticks, 0);
        assert!(r.reuse_bytes_stable);
        assert!(r.sensing_band_db() == 0.0);
    }

    #[test]
    fn trajectory_endpoints() {
        let cfg = MobilityConfig::default();
        assert_eq!(cfg.num_ticks(), 2000);
        assert_eq!(cfg.angle_at(0), -30.0);
        assert_eq!(cfg.angle_at(2000), 30.0);
    }

    #[test]
    fn rejects_out_of_fov() {
        let cfg = MobilityConfig { end_deg: 75.0, ..Default::default() };
        assert!(run_mobility(&cfg, 1, Execution::Sequential).is_err());
    }
}
