//! End-to-end slot simulation: codebook, pre-distortion, switched DMRS,
//! per-user demodulation and monostatic sensing. Also the SUBF and
//! fixed-beam baselines on the same scene.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{beamforming_gain, ArrayGeometry, Beamformer, Direction};
use crate::channel::{apply_downlink, apply_monostatic, RxPattern, Scene, SceneUser};
use crate::error::{param, Result};
use crate::optimizer::{build_codebook, Codebook, OptimizerConfig};
use crate::par::Execution;
use crate::sensing::{estimate_symbol, extract_features, DelaySearchConfig, SensingCsi};
use crate::units::lin_to_db;
use crate::waveform::{
    average_user_csi, demodulate_and_score, generate_slot, genie_csi, predistort_dmrs, BeamPlan, Modulation, Numerology,
    PredistortionPlan, SlotWaveform, SubSymbolSchedule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub numerology: Numerology,
    pub modulation: Modulation,
    /// Sub-symbol sensing directions, one per beam.
    pub sweep: Vec<Direction>,
    pub optimizer: OptimizerConfig,
    pub sensing_base_snr: f64,
    pub predistortion: bool,
    /// When set, each user's downlink noise is chosen so the data symbols
    /// arrive at this SNR; otherwise the scene noise power is used.
    pub target_snr_db: Option<f64>,
    pub delay: DelaySearchConfig,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            numerology: Numerology::default(),
            modulation: Modulation::Qam64,
            sweep: super::default_sweep(34),
            optimizer: OptimizerConfig::default(),
            sensing_base_snr: 1.0,
            predistortion: true,
            target_snr_db: None,
            delay: DelaySearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserReport {
    pub index: usize,
    pub azimuth_deg: f64,
    pub data_gain_db: f64,
    pub evm_estimated: f64,
    pub ber_estimated: f64,
    pub evm_genie: f64,
    pub ber_genie: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub users: Vec<UserReport>,
    /// Sensing estimates of the first DMRS symbol, one per sweep direction.
    pub sensing: Vec<SensingCsi>,
    pub sensing_angles_deg: Vec<f64>,
    /// TX gain of each sensing beam towards its own direction.
    pub sensing_gains: Vec<f64>,
    pub predistortion: PredistortionPlan,
    pub codebook: Codebook,
    pub switches_per_dmrs: usize,
    /// Transmitted slot after pre-distortion.
    pub tx_samples: Vec<Complex64>,
}

/// Multi-user data beam: sum of per-user conjugate beams scaled so the
/// largest element has unit amplitude. Broadside conjugate with no users.
pub fn data_beamformer(geometry: &ArrayGeometry, users: &[Direction]) -> Result<Beamformer> {
    if users.is_empty() {
        return Beamformer::conjugate(geometry, Direction::new(0.0, 0.0).fit_to(geometry));
    }
    let mut w = vec![Complex64::new(0.0, 0.0); geometry.num_elements()];
    for d in users {
        let c = Beamformer::conjugate(geometry, d.fit_to(geometry))?;
        w.iter_mut().zip(c.weights()).for_each(|(a, b)| *a += b);
    }
    let peak = w.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak > 0.0 {
        w.iter_mut().for_each(|v| *v /= peak);
    }
    Beamformer::new(w)
}

fn user_seed(seed: u64, u: usize) -> u64 {
    seed.wrapping_add(0x1000 + u as u64)
}

fn sensing_seed(seed: u64) -> u64 {
    seed.wrapping_add(0x2000)
}

fn data_power(num: &Numerology) -> f64 {
    num.occupied_subcarriers as f64 / num.fft_size as f64
}

/// Demodulates one user with estimated and genie CSI. `reference` is the
/// standard (undistorted) slot.
#[allow(clippy::too_many_arguments)]
fn score_user(
    index: usize,
    user: &SceneUser,
    tx: &[Complex64],
    reference: &SlotWaveform,
    plan: &BeamPlan,
    data_beam: &Beamformer,
    geometry: &ArrayGeometry,
    scene: &Scene,
    cfg: &LinkConfig,
    seed: u64,
) -> Result<UserReport> {
    let g = beamforming_gain(data_beam, geometry, user.link.direction.fit_to(geometry))?;
    let mut local = scene.clone();
    if let Some(snr) = cfg.target_snr_db {
        let p = user.path.attenuation.powi(2) * g * data_power(&cfg.numerology);
        if !(p > 0.0) {
            return param(format!("user {index} receives no data power"));
        }
        local.noise_power = crate::waveform::noise_power_for_snr(p, snr);
    }
    let rx = apply_downlink(tx, plan, user, geometry, &local, Some(user_seed(seed, index)))?;
    let est = average_user_csi(&rx, reference)?;
    let genie = genie_csi(&cfg.numerology, user.path.coefficient() * g.sqrt(), user.path.delay_samples);
    let a = demodulate_and_score(&rx, reference, &est, cfg.modulation)?;
    let b = demodulate_and_score(&rx, reference, &genie, cfg.modulation)?;
    Ok(UserReport {
        index,
        azimuth_deg: user.link.direction.azimuth.to_degrees(),
        data_gain_db: lin_to_db(g),
        evm_estimated: a.evm_percent,
        ber_estimated: a.ber,
        evm_genie: b.evm_percent,
        ber_genie: b.ber,
    })
}

/// One slot end to end.
pub fn simulate(scene: &Scene, geometry: &ArrayGeometry, cfg: &LinkConfig, seed: u64, exec: Execution) -> Result<SimulationReport> {
    scene.validate()?;
    let num = &cfg.numerology;
    let links: Vec<_> = scene.users.iter().map(|u| u.link).collect();
    let dirs: Vec<Direction> = links.iter().map(|l| l.direction).collect();
    let codebook = build_codebook(&links, &cfg.sweep, cfg.sensing_base_snr, geometry, &cfg.optimizer, exec)?;
    let beams = codebook.beams();
    let data_beam = data_beamformer(geometry, &dirs)?;
    let schedule = SubSymbolSchedule::new(num.fft_size, beams.len())?;
    let pd = if cfg.predistortion && !dirs.is_empty() {
        PredistortionPlan::from_beams(geometry, &dirs, &data_beam, &beams)?
    } else {
        PredistortionPlan::identity(beams.len())
    };
    let reference = generate_slot(num, cfg.modulation, seed)?;
    let tx = predistort_dmrs(&reference, &schedule, &pd)?;
    let plan = BeamPlan::switched(num, &schedule, &beams, data_beam.clone())?;

    let users = scene
        .users
        .iter()
        .enumerate()
        .map(|(u, user)| score_user(u, user, &tx.samples, &reference, &plan, &data_beam, geometry, scene, cfg, seed))
        .collect::<Result<Vec<_>>>()?;

    let rx = apply_monostatic(&tx.samples, &plan, geometry, scene, &RxPattern::broadside_4x4(), Some(sensing_seed(seed)))?;
    let s0 = *num.dmrs_symbols().first().ok_or_else(|| crate::Error::Parameter("numerology has no DMRS symbols".into()))?;
    let sensing = estimate_symbol(&rx[num.body_start(s0)..], reference.body(s0), &schedule, &pd, &cfg.delay, exec)?;
    let sensing_gains = cfg
        .sweep
        .iter()
        .zip(&beams)
        .map(|(d, b)| b.gain(geometry, d.fit_to(geometry)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationReport {
        users,
        sensing,
        sensing_angles_deg: cfg.sweep.iter().map(|d| d.azimuth.to_degrees()).collect(),
        sensing_gains,
        predistortion: pd,
        switches_per_dmrs: plan.switches_in_symbol(num, s0),
        codebook,
        tx_samples: tx.samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// Conjugate beam to the first user on every symbol.
    Subf,
    /// One conjugate sensing beam per DMRS symbol, full-symbol CSI.
    FixedBeamSsb,
    /// Sub-symbol switching with the optimized codebook.
    SubSymbol,
}

impl BaselineMode {
    pub const ALL: [BaselineMode; 3] = [BaselineMode::Subf, BaselineMode::FixedBeamSsb, BaselineMode::SubSymbol];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::Subf => "subf",
            BaselineMode::FixedBeamSsb => "fixed-beam-ssb",
            BaselineMode::SubSymbol => "sub-symbol",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensingSummary {
    pub angle_deg: f64,
    pub delay_star: usize,
    /// Weighted mean `|H|^2`, dB.
    pub mean_power_db: f64,
    /// Mean power over the TX beam gain towards the angle, dB.
    pub normalized_power_db: f64,
    pub linearity_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub mode: BaselineMode,
    pub users: Vec<UserReport>,
    pub sensing: Vec<SensingSummary>,
    pub beam_switches_per_dmrs: usize,
}

fn summarize(csi: &SensingCsi, angle_deg: f64, tx_gain: f64) -> SensingSummary {
    let f = extract_features(csi);
    let mean = f.received_power;
    SensingSummary {
        angle_deg,
        delay_star: csi.delay_star,
        mean_power_db: lin_to_db(mean),
        normalized_power_db: lin_to_db(mean / tx_gain),
        linearity_loss: f.linearity_loss,
    }
}

/// Evenly spread picks from the sweep, one per DMRS symbol.
fn fixed_beam_angles(sweep: &[Direction], count: usize) -> Vec<Direction> {
    (0..count).map(|i| sweep[((2 * i + 1) * sweep.len()) / (2 * count)]).collect()
}

/// Runs one mode on a common scene. The fixed-beam mode carries no
/// pre-distortion: its DMRS beams are sensing beams, as in an SSB sweep.
pub fn run_baseline(
    mode: BaselineMode,
    scene: &Scene,
    geometry: &ArrayGeometry,
    cfg: &LinkConfig,
    seed: u64,
    exec: Execution,
) -> Result<BaselineReport> {
    if mode == BaselineMode::SubSymbol {
        let r = simulate(scene, geometry, cfg, seed, exec)?;
        let sensing = r
            .sensing
            .iter()
            .zip(&r.sensing_angles_deg)
            .zip(&r.sensing_gains)
            .map(|((c, a), g)| summarize(c, *a, *g))
            .collect();
        return Ok(BaselineReport { mode, users: r.users, sensing, beam_switches_per_dmrs: r.switches_per_dmrs });
    }
    scene.validate()?;
    let num = &cfg.numerology;
    let dirs: Vec<Direction> = scene.users.iter().map(|u| u.link.direction).collect();
    let dmrs = num.dmrs_symbols();
    let (data_beam, sensing_dirs) = match mode {
        BaselineMode::Subf => {
            let first = *dirs.first().ok_or_else(|| crate::Error::Parameter("SUBF needs a user".into()))?;
            (Beamformer::conjugate(geometry, first.fit_to(geometry))?, vec![first; dmrs.len()])
        }
        _ => {
            if cfg.sweep.is_empty() {
                return param("sensing sweep is empty");
            }
            (data_beamformer(geometry, &dirs)?, fixed_beam_angles(&cfg.sweep, dmrs.len()))
        }
    };
    let dmrs_beams = sensing_dirs
        .iter()
        .map(|d| {
            if mode == BaselineMode::Subf {
                Ok(data_beam.clone())
            } else {
                Beamformer::conjugate(geometry, d.fit_to(geometry))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = BeamPlan::per_dmrs_symbol(num, &dmrs_beams, data_beam.clone())?;
    let reference = generate_slot(num, cfg.modulation, seed)?;
    let users = scene
        .users
        .iter()
        .enumerate()
        .map(|(u, user)| score_user(u, user, &reference.samples, &reference, &plan, &data_beam, geometry, scene, cfg, seed))
        .collect::<Result<Vec<_>>>()?;

    let rx = apply_monostatic(&reference.samples, &plan, geometry, scene, &RxPattern::broadside_4x4(), Some(sensing_seed(seed)))?;
    let whole = SubSymbolSchedule::new(num.fft_size, 1)?;
    let mut sensing = Vec::with_capacity(dmrs.len());
    for ((&s, d), b) in dmrs.iter().zip(&sensing_dirs).zip(&dmrs_beams) {
        let est = estimate_symbol(&rx[num.body_start(s)..], reference.body(s), &whole, &PredistortionPlan::identity(1), &cfg.delay, exec)?;
        sensing.push(summarize(&est[0], d.azimuth.to_degrees(), b.gain(geometry, d.fit_to(geometry))?));
    }
    Ok(BaselineReport { mode, users, sensing, beam_switches_per_dmrs: plan.switches_in_symbol(num, dmrs[0]) })
}
