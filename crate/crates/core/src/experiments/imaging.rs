//! 2D imaging: one sub-symbol beam per pixel direction over an
//! azimuth/elevation grid, DMRS slot after DMRS slot.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, Direction};
use crate::channel::{apply_monostatic, RxPattern, Scene};
use crate::error::{param, Result};
use crate::optimizer::{build_codebook, OptimizerConfig, DEFAULT_FOV};
use crate::par::{self, Execution};
use crate::sensing::{estimate_symbol, extract_features, DelaySearchConfig};
use crate::units::lin_to_db;
use crate::waveform::{generate_slot, predistort_dmrs, BeamPlan, Modulation, Numerology, PredistortionPlan, SubSymbolSchedule};

use super::link::data_beamformer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    pub az_angles_deg: Vec<f64>,
    pub el_angles_deg: Vec<f64>,
    /// Sub-symbol beams per DMRS symbol.
    pub num_beams: usize,
    pub numerology: Numerology,
    pub modulation: Modulation,
    pub optimizer: OptimizerConfig,
    pub delay: DelaySearchConfig,
}

fn degree_grid() -> Vec<f64> {
    (-15..=15).map(f64::from).collect()
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            az_angles_deg: degree_grid(),
            el_angles_deg: degree_grid(),
            num_beams: 34,
            numerology: Numerology::default(),
            modulation: Modulation::Qpsk,
            optimizer: OptimizerConfig::default(),
            delay: DelaySearchConfig::default(),
        }
    }
}

/// Air time for a sweep of `directions` at `directions_per_slot`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AirTime {
    pub directions: usize,
    pub directions_per_slot: usize,
    pub slots: usize,
    /// Whole slots.
    pub slot_time_s: f64,
    /// DMRS symbols that actually carry a beam.
    pub dmrs_symbols_used: usize,
    /// `directions / num_beams` symbols, fractional.
    pub dmrs_symbols_fractional: f64,
    /// Full slots plus the final partial slot counted by the DMRS symbols it
    /// needs, `floor(directions / directions_per_slot)` slots of air time.
    pub dmrs_time_s: f64,
}

impl AirTime {
    pub fn new(directions: usize, num_beams: usize, num: &Numerology) -> Self {
        let per_symbol = num_beams.max(1);
        let per_slot = per_symbol * num.dmrs_symbol_indices.len().max(1);
        let slots = directions.div_ceil(per_slot);
        Self {
            directions,
            directions_per_slot: per_slot,
            slots,
            slot_time_s: slots as f64 * num.nominal_slot_duration(),
            dmrs_symbols_used: directions.div_ceil(per_symbol),
            dmrs_symbols_fractional: directions as f64 / per_symbol as f64,
            dmrs_time_s: (directions / per_slot) as f64 * num.nominal_slot_duration(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImagingGrid {
    pub az_angles_deg: Vec<f64>,
    pub el_angles_deg: Vec<f64>,
    /// `heatmap[e][a]`: received power over TX gain at `(az[a], el[e])`, dB.
    pub heatmap: Vec<Vec<f64>>,
    /// Received power without gain normalization, dB.
    pub raw: Vec<Vec<f64>>,
    /// Selected delay per pixel.
    pub delay: Vec<Vec<usize>>,
    pub air_time: AirTime,
}

impl ImagingGrid {
    /// `(el index, az index)` of the brightest pixel.
    pub fn peak(&self) -> (usize, usize) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (e, row) in self.heatmap.iter().enumerate() {
            for (a, &v) in row.iter().enumerate() {
                if v > best.2 {
                    best = (e, a, v);
                }
            }
        }
        (best.0, best.1)
    }

    /// Pixels strictly brighter than their 8-neighbourhood.
    pub fn local_maxima(&self) -> Vec<(usize, usize, f64)> {
        let (ne, na) = (self.el_angles_deg.len() as isize, self.az_angles_deg.len() as isize);
        let mut out = Vec::new();
        for e in 0..ne {
            for a in 0..na {
                let v = self.heatmap[e as usize][a as usize];
                let mut top = true;
                for de in -1..=1 {
                    for da in -1..=1 {
                        let (y, x) = (e + de, a + da);
                        if (de, da) != (0, 0) && (0..ne).contains(&y) && (0..na).contains(&x) && self.heatmap[y as usize][x as usize] >= v {
                            top = false;
                        }
                    }
                }
                if top {
                    out.push((e as usize, a as usize, v));
                }
            }
        }
        out.sort_by(|p, q| q.2.total_cmp(&p.2));
        out
    }

    pub fn range_db(&self) -> f64 {
        let all = self.heatmap.iter().flatten();
        let hi = all.clone().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = all.copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["az_deg", "el_deg", "power_db", "raw_power_db", "delay_star"])?;
        for (e, el) in self.el_angles_deg.iter().enumerate() {
            for (a, az) in self.az_angles_deg.iter().enumerate() {
                out.write_record([
                    format!("{az:.3}"),
                    format!("{el:.3}"),
                    format!("{:.6}", self.heatmap[e][a]),
                    format!("{:.6}", self.raw[e][a]),
                    self.delay[e][a].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// 8-bit binary PGM, min mapped to 0 and max to 255. The top row is the
/// highest elevation.
pub fn write_pgm<W: Write>(mut w: W, grid: &ImagingGrid) -> Result<()> {
    let h = grid.el_angles_deg.len();
    let wd = grid.az_angles_deg.len();
    let all = grid.heatmap.iter().flatten();
    let hi = all.clone().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = all.copied().fold(f64::INFINITY, f64::min);
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{wd} {h}\n255\n")?;
    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by(|&p, &q| grid.el_angles_deg[q].total_cmp(&grid.el_angles_deg[p]));
    let mut bytes = Vec::with_capacity(h * wd);
    for e in order {
        for v in &grid.heatmap[e] {
            bytes.push(((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Sweeps the grid in row-major order (elevation outer), `num_beams`
/// directions per DMRS symbol. The last slot is padded with repeats of its
/// final direction; padded estimates are dropped.
pub fn run_imaging(
    scene: &Scene,
    geometry: &ArrayGeometry,
    cfg: &ImagingConfig,
    seed: u64,
    exec: Execution,
) -> Result<ImagingGrid> {
    scene.validate()?;
    let num = &cfg.numerology;
    num.validate()?;
    if cfg.az_angles_deg.is_empty() || cfg.el_angles_deg.is_empty() {
        return param("imaging grid is empty");
    }
    let fov = DEFAULT_FOV.to_degrees();
    if cfg.az_angles_deg.iter().chain(&cfg.el_angles_deg).any(|a| !(a.abs() <= fov)) {
        return param(format!("imaging angles must lie within +-{fov} degrees"));
    }
    let dirs: Vec<Direction> = cfg
        .el_angles_deg
        .iter()
        .flat_map(|&e| cfg.az_angles_deg.iter().map(move |&a| Direction::from_degrees(a, Some(e)).fit_to(geometry)))
        .collect();
    let links: Vec<_> = scene.users.iter().map(|u| u.link).collect();
    let user_dirs: Vec<Direction> = links.iter().map(|l| l.direction).collect();
    let codebook = build_codebook(&links, &dirs, 1.0, geometry, &cfg.optimizer, exec)?;
    let beams = codebook.beams();
    let data_beam = data_beamformer(geometry, &user_dirs)?;
    let schedule = SubSymbolSchedule::new(num.fft_size, cfg.num_beams)?;
    let dmrs = num.dmrs_symbols();
    let per_slot = cfg.num_beams * dmrs.len();
    let air_time = AirTime::new(dirs.len(), cfg.num_beams, num);
    let rx_pattern = RxPattern::broadside_4x4();

    let slots = par::try_map_range(exec, air_time.slots, |slot| {
        let idx = |k: usize| (slot * per_slot + k).min(dirs.len() - 1);
        let sets: Vec<Vec<_>> = (0..dmrs.len())
            .map(|i| (0..cfg.num_beams).map(|m| beams[idx(i * cfg.num_beams + m)].clone()).collect())
            .collect();
        let plan = BeamPlan::switched_per_symbol(num, &schedule, &sets, data_beam.clone())?;
        let s = seed.wrapping_add(slot as u64 * 2);
        let reference = generate_slot(num, cfg.modulation, s)?;
        // Pre-distortion is per codebook, and each DMRS symbol here has its own
        // beam set, so sensing runs on the undistorted waveform.
        let pd = PredistortionPlan::identity(cfg.num_beams);
        let tx = predistort_dmrs(&reference, &schedule, &pd)?;
        let rx = apply_monostatic(&tx.samples, &plan, geometry, scene, &rx_pattern, Some(s + 1))?;
        let mut out = Vec::with_capacity(per_slot);
        for (i, &sym) in dmrs.iter().enumerate() {
            let est = estimate_symbol(&rx[num.body_start(sym)..], reference.body(sym), &schedule, &pd, &cfg.delay, Execution::Sequential)?;
            for (m, csi) in est.into_iter().enumerate() {
                let k = slot * per_slot + i * cfg.num_beams + m;
                if k < dirs.len() {
                    out.push((extract_features(&csi).received_power, csi.delay_star));
                }
            }
        }
        Ok::<_, crate::Error>(out)
    })?;
    let pixels: Vec<(f64, usize)> = slots.into_iter().flatten().collect();
    let na = cfg.az_angles_deg.len();
    let mut heatmap = vec![vec![0.0; na]; cfg.el_angles_deg.len()];
    let mut raw = heatmap.clone();
    let mut delay = vec![vec![0usize; na]; cfg.el_angles_deg.len()];
    for (k, ((p, d), dir)) in pixels.iter().zip(&dirs).enumerate() {
        let (e, a) = (k / na, k % na);
        let g = beams[k].gain(geometry, *dir)?;
        raw[e][a] = lin_to_db(*p);
        heatmap[e][a] = lin_to_db(p / g);
        delay[e][a] = *d;
    }
    Ok(ImagingGrid {
        az_angles_deg: cfg.az_angles_deg.clone(),
        el_angles_deg: cfg.el_angles_deg.clone(),
        heatmap,
        raw,
        delay,
        air_time,
    })
}
