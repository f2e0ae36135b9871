//! Codebook construction, online update under user motion, and the on-disk
//! format.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{gamma_min, solve_opt_accel, solve_opt_accel_from, CodebookEntry, OptimizerConfig, SensingTarget, UserLink};
use crate::array::{ArrayGeometry, Beamformer, Direction};
use crate::error::{param, Error, Result};
use crate::par::{self, Execution};
use crate::units::{db_to_lin, lin_to_db};

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub entries: Vec<CodebookEntry>,
    /// Users the codebook was last updated for.
    pub users: Vec<UserLink>,
    /// Base SNR of the sensing path, shared by every entry.
    pub sensing_base_snr: f64,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn beams(&self) -> Vec<Beamformer> {
        self.entries.iter().map(|e| e.weights.clone()).collect()
    }

    pub fn sensing_directions(&self) -> Vec<Direction> {
        self.entries.iter().map(|e| e.sensing).collect()
    }
}

/// Seed for entry `i`: entry 0 uses the configured seed, so a one-angle
/// codebook equals a direct solve.
fn entry_cfg(cfg: &OptimizerConfig, i: usize) -> OptimizerConfig {
    OptimizerConfig { seed: cfg.seed.wrapping_add(i as u64), ..*cfg }
}

pub fn build_codebook(
    users: &[UserLink],
    sweep: &[Direction],
    sensing_base_snr: f64,
    geometry: &ArrayGeometry,
    cfg: &OptimizerConfig,
    exec: Execution,
) -> Result<Codebook> {
    if sweep.is_empty() {
        return param("sensing sweep is empty");
    }
    let entries = par::try_map_range(exec, sweep.len(), |i| {
        let target = SensingTarget::new(sweep[i], sensing_base_snr);
        solve_opt_accel(users, &target, geometry, &entry_cfg(cfg, i))
            .map_err(|e| Error::Beam { beam: i, source: Box::new(e) })
    })?;
    Ok(Codebook { entries, users: users.to_vec(), sensing_base_snr })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryUpdate {
    pub index: usize,
    pub reoptimized: bool,
    /// Stored minimum SNR before the update.
    pub gamma_min_before: f64,
    /// Minimum SNR of the old weights for the new user positions.
    pub gamma_min_predicted: f64,
    pub gamma_min_after: f64,
    pub solve_time: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub reused: usize,
    pub reoptimized: usize,
    pub entries: Vec<EntryUpdate>,
}

impl UpdateStats {
    pub fn total_solve_time(&self) -> Duration {
        self.entries.iter().map(|e| e.solve_time).sum()
    }
}

/// One step of the online update.
///
/// For every entry the old weights are evaluated at the new user positions.
/// If the resulting minimum SNR is within `snr_match_tol` of the stored
/// `gamma_min` the entry is kept verbatim, stored `gamma_min` included, so a
/// slowly drifting bottleneck cannot walk away from the last solved value by
/// more than the tolerance. Otherwise the entry is re-solved warm-started from
/// its old weights.
pub fn update_codebook(
    codebook: &Codebook,
    moved_users: &[UserLink],
    geometry: &ArrayGeometry,
    cfg: &OptimizerConfig,
    exec: Execution,
) -> Result<(Codebook, UpdateStats)> {
    if moved_users.len() != codebook.users.len() {
        return param(format!(
            "codebook has {} users, update supplied {}",
            codebook.users.len(),
            moved_users.len()
        ));
    }
    cfg.validate()?;
    let results = par::try_map_range(exec, codebook.len(), |i| {
        let old = &codebook.entries[i];
        let predicted = gamma_min(&old.weights, geometry, moved_users)?;
        let reuse = old.gamma_min.is_infinite()
            || (predicted - old.gamma_min).abs() <= cfg.snr_match_tol;
        if reuse {
            let rec = EntryUpdate {
                index: i,
                reoptimized: false,
                gamma_min_before: old.gamma_min,
                gamma_min_predicted: predicted,
                gamma_min_after: old.gamma_min,
                solve_time: Duration::ZERO,
            };
            return Ok((old.clone(), rec));
        }
        let start = Instant::now();
        let target = SensingTarget::new(old.sensing, codebook.sensing_base_snr);
        let new = solve_opt_accel_from(&old.weights, moved_users, &target, geometry, &entry_cfg(cfg, i))
            .map_err(|e| Error::Beam { beam: i, source: Box::new(e) })?;
        let rec = EntryUpdate {
            index: i,
            reoptimized: true,
            gamma_min_before: old.gamma_min,
            gamma_min_predicted: predicted,
            gamma_min_after: new.gamma_min,
            solve_time: start.elapsed(),
        };
        Ok::<_, Error>((new, rec))
    })?;
    let mut stats = UpdateStats::default();
    let mut entries = Vec::with_capacity(results.len());
    for (e, rec) in results {
        if rec.reoptimized {
            stats.reoptimized += 1;
        } else {
            stats.reused += 1;
        }
        stats.entries.push(rec);
        entries.push(e);
    }
    Ok((
        Codebook { entries, users: moved_users.to_vec(), sensing_base_snr: codebook.sensing_base_snr },
        stats,
    ))
}

pub const CODEBOOK_FORMAT: &str = "beamswitch-codebook";
pub const CODEBOOK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FileEntry {
    sensing_azimuth_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensing_elevation_deg: Option<f64>,
    /// `null` encodes the no-user `+inf` sentinel.
    gamma_min_db: Option<f64>,
    converged: bool,
    conjugate_fallback: bool,
    weights: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct FileCodebook {
    format: String,
    version: u32,
    num_elements: usize,
    sensing_base_snr: f64,
    entries: Vec<FileEntry>,
}

impl Codebook {
    /// Serializes the entries (not the user snapshot) as pretty JSON. The
    /// output depends only on the entries, so a codebook that was entirely
    /// reused serializes to identical bytes.
    pub fn to_json(&self) -> Result<String> {
        let file = FileCodebook {
            format: CODEBOOK_FORMAT.into(),
            version: CODEBOOK_VERSION,
            num_elements: self.entries.first().map_or(0, |e| e.weights.len()),
            sensing_base_snr: self.sensing_base_snr,
            entries: self
                .entries
                .iter()
                .map(|e| FileEntry {
                    sensing_azimuth_deg: e.sensing.azimuth.to_degrees(),
                    sensing_elevation_deg: e.sensing.elevation.map(f64::to_degrees),
                    gamma_min_db: e.gamma_min.is_finite().then(|| lin_to_db(e.gamma_min)),
                    converged: e.converged,
                    conjugate_fallback: e.conjugate_fallback,
                    weights: e.weights.weights().iter().map(|w| [w.re, w.im]).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a codebook file and attaches the user snapshot it applies to.
    pub fn from_json(text: &str, users: Vec<UserLink>) -> Result<Self> {
        let file: FileCodebook = serde_json::from_str(text)?;
        if file.format != CODEBOOK_FORMAT {
            return Err(Error::Format(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != CODEBOOK_VERSION {
            return Err(Error::Format(format!("unsupported codebook version {}", file.version)));
        }
        let entries = file
            .entries
            .into_iter()
            .map(|e| {
                if e.weights.len() != file.num_elements {
                    return Err(Error::Format(format!(
                        "entry has {} weights, header says {}",
                        e.weights.len(),
                        file.num_elements
                    )));
                }
                let weights =
                    Beamformer::new(e.weights.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())?;
                Ok(CodebookEntry {
                    sensing: Direction {
                        azimuth: e.sensing_azimuth_deg.to_radians(),
                        elevation: e.sensing_elevation_deg.map(f64::to_radians),
                    },
                    weights,
                    gamma_min: e.gamma_min_db.map_or(f64::INFINITY, db_to_lin),
                    converged: e.converged,
                    conjugate_fallback: e.conjugate_fallback,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Codebook { entries, users, sensing_base_snr: file.sensing_base_snr })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ArrayGeometry, Vec<UserLink>, Vec<Direction>, OptimizerConfig) {
        let g = ArrayGeometry::ula(16).unwrap();
        let users = vec![
            UserLink::new(Direction::azimuth(30f64.to_radians()), 1.0),
            UserLink::new(Direction::azimuth(-30f64.to_radians()), 1.0),
        ];
        let sweep = [0.0, 5.0, 10.0, 15.0].map(|d: f64| Direction::azimuth(d.to_radians())).to_vec();
        (g, users, sweep, OptimizerConfig::default())
    }

    #[test]
    fn build_one_entry_per_angle() {
        let (g, users, sweep, cfg) = setup();
        let cb = build_codebook(&users, &sweep, 1.0, &g, &cfg, Execution::default()).unwrap();
        assert_eq!(cb.len(), 4);
        for (e, d) in cb.entries.iter().zip(&sweep) {
            assert_eq!(e.sensing, *d);
            let direct = gamma_min(&e.weights, &g, &users).unwrap();
            assert!((direct - e.gamma_min).abs() <= 1e-6 * direct);
        }
    }

    #[test]
    fn build_is_mode_independent() {
        let (g, users, sweep, cfg) = setup();
        let a = build_codebook(&users, &sweep, 1.0, &g, &cfg, Execution::Sequential).unwrap();
        let b = build_codebook(&users, &sweep, 1.0, &g, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_angle_equals_direct_solve() {
        let (g, users, sweep, cfg) = setup();
        let cb = build_codebook(&users, &sweep[..1], 1.0, &g, &cfg, Execution::default()).unwrap();
        let e = solve_opt_accel(&users, &SensingTarget::new(sweep[0], 1.0), &g, &cfg).unwrap();
        assert_eq!(cb.entries[0], e);
    }

    #[test]
    fn empty_users_gives_conjugate_codebook() {
        let (g, _, sweep, cfg) = setup();
        let cb = build_codebook(&[], &sweep, 1.0, &g, &cfg, Execution::default()).unwrap();
        for e in &cb.entries {
            assert_eq!(e.gamma_min, f64::INFINITY);
            assert_eq!(e.weights, Beamformer::conjugate(&g, e.sensing).unwrap());
        }
        let (next, stats) = update_codebook(&cb, &[], &g, &cfg, Execution::default()).unwrap();
        assert_eq!(stats.reused, 4);
        assert_eq!(next.entries, cb.entries);
    }

    #[test]
    fn empty_sweep_is_an_error() {
        let (g, users, _, cfg) = setup();
        assert!(build_codebook(&users, &[], 1.0, &g, &cfg, Execution::default()).is_err());
    }

    #[test]
    fn static_users_reuse_everything() {
        let (g, users, sweep, cfg) = setup();
        let cb = build_codebook(&users, &sweep, 1.0, &g, &cfg, Execution::default()).unwrap();
        let (next, stats) = update_codebook(&cb, &users, &g, &cfg, Execution::default()).unwrap();
        assert_eq!((stats.reused, stats.reoptimized), (4, 0));
        assert_eq!(next.to_json().unwrap(), cb.to_json().unwrap());
    }

    #[test]
    fn cardinality_mismatch() {
        let (g, users, sweep, cfg) = setup();
        let cb = build_codebook(&users, &sweep, 1.0, &g, &cfg, Execution::default()).unwrap();
        assert!(update_codebook(&cb, &users[..1], &g, &cfg, Execution::default()).is_err());
    }

    #[test]
    fn non_bottleneck_motion_is_reused() {
        // Three users; move the one with the most headroom a little.
        let g = ArrayGeometry::ula(16).unwrap();
        let users = vec![
            UserLink::new(Direction::azimuth(30f64.to_radians()), 1.0),
            UserLink::new(Direction::azimuth(-30f64.to_radians()), 1.0),
            UserLink::new(Direction::azimuth(2f64.to_radians()), 1.0),
        ];
        let cfg = OptimizerConfig::default();
        let sweep = [Direction::azimuth(0.0)];
        let cb = build_codebook(&users, &sweep, 1.0, &g, &cfg, Execution::default()).unwrap();
        let mut moved = users.clone();
        moved[2].direction = Direction::azimuth(1f64.to_radians());
        let snr = super::super::user_snrs(&cb.entries[0].weights, &g, &moved).unwrap();
        assert!(snr[2] > cb.entries[0].gamma_min + 1.0);
        let (next, stats) = update_codebook(&cb, &moved, &g, &cfg, Execution::default()).unwrap();
        assert_eq!(stats.reused, 1);
        assert_eq!(next.entries[0].weights, cb.entries[0].weights);
    }

    #[test]
    fn bottleneck_motion_triggers_resolve() {
        let (g, users, sweep, cfg) = setup();
        let cb = build_codebook(&users, &sweep[..1], 1.0, &g, &cfg, Execution::default()).unwrap();
        let mut moved = users.clone();
        moved[0].direction = Direction::azimuth(24f64.to_radians());
        let (next, stats) = update_codebook(&cb, &moved, &g, &cfg, Execution::default()).unwrap();
        assert_eq!(stats.reoptimized, 1);
        let rec = &stats.entries[0];
        assert!(rec.gamma_min_predicted < rec.gamma_min_before - cfg.snr_match_tol);
        assert!(next.entries[0].gamma_min >= rec.gamma_min_predicted);
        assert_ne!(next.entries[0].gamma_min, cb.entries[0].gamma_min);
        // A fresh cold solve lands in the same neighbourhood.
        let fresh = solve_opt_accel(&moved, &SensingTarget::new(sweep[0], 1.0), &g, &cfg).unwrap();
        assert!((lin_to_db(fresh.gamma_min) - lin_to_db(next.entries[0].gamma_min)).abs() < 1.0);
    }

    #[test]
    fn json_round_trip() {
        let (g, users, sweep, cfg) = setup();
        let cb = build_codebook(&users, &sweep, 1.0, &g, &cfg, Execution::default()).unwrap();
        let text = cb.to_json().unwrap();
        let back = Codebook::from_json(&text, users.clone()).unwrap();
        assert_eq!(back.beams(), cb.beams());
        for (a, b) in back.entries.iter().zip(&cb.entries) {
            assert!((a.sensing.azimuth - b.sensing.azimuth).abs() < 1e-12);
            assert!((a.gamma_min - b.gamma_min).abs() < 1e-9 * b.gamma_min);
        }
        assert!(Codebook::from_json(&text.replace("beamswitch-codebook", "other"), users).is_err());
    }
}
