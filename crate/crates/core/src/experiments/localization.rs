//! SP localization: a linear map from stacked per-beam CSI features to
//! reflector distance and angle, calibrated by least squares on simulated
//! runs.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, Beamformer, Direction};
use crate::channel::{apply_monostatic, PathModel, Reflector, RxPattern, Scene};
use crate::error::{param, Error, Result};
use crate::par::{self, Execution};
use crate::sensing::{estimate_symbol, extract_features, CsiFeatures, DelaySearchConfig};
use crate::units::{lin_to_db, path_length_to_samples};
use crate::waveform::{generate_slot, BeamPlan, Modulation, Numerology, PredistortionPlan, SubSymbolSchedule};

/// Features per beam in the stacked vector.
pub const FEATURES_PER_BEAM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub num_elements: usize,
    pub sweep_start_deg: f64,
    pub sweep_step_deg: f64,
    pub num_beams: usize,
    /// Reflector ranges for the distance experiment, at `distance_azimuth_deg`.
    pub distances_m: Vec<f64>,
    pub distance_azimuth_deg: f64,
    /// Reflector angles for the angle experiment, at `angle_range_m`.
    pub angles_deg: Vec<f64>,
    pub angle_range_m: f64,
    pub slots_per_position: usize,
    pub train_per_position: usize,
    pub noise_power: f64,
    pub self_interference_inr_db: Option<f64>,
    pub numerology: Numerology,
    pub delay: DelaySearchConfig,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            num_elements: 8,
            sweep_start_deg: -16.5,
            sweep_step_deg: 1.0,
            num_beams: 34,
            distances_m: (10..=80).map(|d| d as f64 / 10.0).collect(),
            distance_azimuth_deg: 0.0,
            angles_deg: (-15..=15).map(f64::from).collect(),
            angle_range_m: 3.0,
            slots_per_position: 25,
            train_per_position: 15,
            noise_power: 1e-3,
            self_interference_inr_db: Some(20.0),
            numerology: Numerology::default(),
            delay: DelaySearchConfig::default(),
        }
    }
}

impl LocalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_per_position == 0 || self.train_per_position >= self.slots_per_position {
            return param("train_per_position must be in 1..slots_per_position");
        }
        if self.distances_m.iter().any(|d| !(*d > 0.0)) || self.angle_range_m <= 0.0 {
            return param("reflector ranges must be positive");
        }
        if self.num_beams == 0 {
            return param("num_beams must be positive");
        }
        Ok(())
    }
}

/// One simulated slot: stacked features and the quantity to predict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingRun {
    pub features: Vec<f64>,
    pub truth: f64,
}

/// `[power dB, phase slope, linearity loss]` per beam, beams in order. Power
/// enters in dB and the loss stays linear: the former tracks `log r`, the
/// latter grows like `r^4` once noise dominates the phase residual.
pub fn sp_feature_vector(features: &[CsiFeatures]) -> Vec<f64> {
    features
        .iter()
        .flat_map(|f| [lin_to_db(f.received_power.max(1e-300)), f.phase_slope, f.linearity_loss])
        .collect()
}

/// Standardized linear regressor, `y = bias + sum_i w_i (x_i - mean_i) / scale_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpRegressor {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl SpRegressor {
    /// Minimum-norm least squares on standardized features (SVD
    /// pseudo-inverse). Constant columns get zero weight.
    pub fn fit(runs: &[TrainingRun]) -> Result<Self> {
        let first = runs.first().ok_or_else(|| Error::RankDeficient("no training runs".into()))?;
        let p = first.features.len();
        if runs.iter().any(|r| r.features.len() != p) {
            return param("training runs have different feature lengths");
        }
        if runs.iter().any(|r| !r.truth.is_finite() || r.features.iter().any(|v| !v.is_finite())) {
            return param("training data must be finite");
        }
        let n = runs.len() as f64;
        let bias = runs.iter().map(|r| r.truth).sum::<f64>() / n;
        let mut mean = vec![0.0; p];
        let mut scale = vec![0.0; p];
        for r in runs {
            mean.iter_mut().zip(&r.features).for_each(|(m, v)| *m += v / n);
        }
        for r in runs {
            scale.iter_mut().zip(&r.features).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
        }
        let informative = scale.iter().any(|s| *s > 0.0);
        scale.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        let spread = runs.iter().any(|r| r.truth != bias);
        if !spread {
            return Ok(Self { mean, scale, weights: vec![0.0; p], bias });
        }
        if !informative {
            return Err(Error::RankDeficient("every feature is constant but the truth varies".into()));
        }
        let x = DMatrix::from_fn(runs.len(), p, |i, j| (runs[i].features[j] - mean[j]) / scale[j]);
        let y = DVector::from_iterator(runs.len(), runs.iter().map(|r| r.truth - bias));
        let svd = x.svd(true, true);
        let tol = svd.singular_values.max() * 1e-10;
        let w = svd.solve(&y, tol).map_err(|e| Error::Parameter(e.to_string()))?;
        Ok(Self { mean, scale, weights: w.iter().copied().collect(), bias })
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return param(format!("{} features for {} weights", features.len(), self.weights.len()));
        }
        Ok(self.bias
            + features
                .iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((x, m), s), w)| w * (x - m) / s)
                .sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpWeights {
    pub distance: SpRegressor,
    pub angle: SpRegressor,
    pub calibrated: bool,
}

pub fn calibrate_sp(distance_runs: &[TrainingRun], angle_runs: &[TrainingRun]) -> Result<SpWeights> {
    Ok(SpWeights { distance: SpRegressor::fit(distance_runs)?, angle: SpRegressor::fit(angle_runs)?, calibrated: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpEstimate {
    pub distance_m: f64,
    pub angle_deg: f64,
}

pub fn sp_localize(features: &[CsiFeatures], weights: &SpWeights) -> Result<SpEstimate> {
    if !weights.calibrated {
        return param("SP weights are not calibrated");
    }
    let x = sp_feature_vector(features);
    Ok(SpEstimate { distance_m: weights.distance.predict(&x)?, angle_deg: weights.angle.predict(&x)? })
}

/// Features of one slot, averaged over its DMRS symbols.
fn slot_features(
    cfg: &LocalizationConfig,
    geometry: &ArrayGeometry,
    plan: &BeamPlan,
    schedule: &SubSymbolSchedule,
    range_m: f64,
    azimuth_deg: f64,
    seed: u64,
) -> Result<Vec<CsiFeatures>> {
    let num = &cfg.numerology;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let delay = path_length_to_samples(2.0 * range_m, num.sample_rate);
    let mut scene = Scene::new(cfg.noise_power);
    scene.self_interference_inr_db = cfg.self_interference_inr_db;
    scene.reflectors.push(Reflector {
        direction: Direction::from_degrees(azimuth_deg, None),
        path: PathModel::new(range_m.powi(-2).min(1.0), phase, delay)?,
        label: "target".into(),
    });
    let slot = generate_slot(num, Modulation::Qpsk, seed)?;
    let rx = apply_monostatic(&slot.samples, plan, geometry, &scene, &RxPattern::broadside_4x4(), Some(seed ^ 0x5eed))?;
    let pd = PredistortionPlan::identity(cfg.num_beams);
    let dmrs = num.dmrs_symbols();
    let mut acc = vec![CsiFeatures { received_power: 0.0, phase_slope: 0.0, linearity_loss: 0.0 }; cfg.num_beams];
    for &s in &dmrs {
        let est = estimate_symbol(&rx[num.body_start(s)..], slot.body(s), schedule, &pd, &cfg.delay, Execution::Sequential)?;
        for (a, c) in acc.iter_mut().zip(&est) {
            let f = extract_features(c);
            a.received_power += f.received_power;
            a.phase_slope += f.phase_slope;
            a.linearity_loss += f.linearity_loss;
        }
    }
    let k = dmrs.len() as f64;
    for a in &mut acc {
        a.received_power /= k;
        a.phase_slope /= k;
        a.linearity_loss /= k;
    }
    Ok(acc)
}

/// Runs for one experiment, split per position into disjoint seeded
/// train/test subsets.
#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<TrainingRun>,
    pub test: Vec<TrainingRun>,
}

/// Simulates the distance grid and the angle grid. Positions are the truth
/// values; every slot draws its own reflector phase and noise.
pub fn localization_dataset(cfg: &LocalizationConfig, seed: u64, exec: Execution) -> Result<(Split, Split)> {
    cfg.validate()?;
    let geometry = ArrayGeometry::ula(cfg.num_elements)?;
    let sweep = super::azimuth_sweep(cfg.sweep_start_deg, cfg.sweep_step_deg, cfg.num_beams, None);
    let beams = sweep.iter().map(|d| Beamformer::conjugate(&geometry, *d)).collect::<Result<Vec<_>>>()?;
    let schedule = SubSymbolSchedule::new(cfg.numerology.fft_size, cfg.num_beams)?;
    let plan = BeamPlan::switched(&cfg.numerology, &schedule, &beams, beams[beams.len() / 2].clone())?;

    let positions: Vec<(f64, f64, f64)> = cfg
        .distances_m
        .iter()
        .map(|&r| (r, cfg.distance_azimuth_deg, r))
        .chain(cfg.angles_deg.iter().map(|&a| (cfg.angle_range_m, a, a)))
        .collect();
    let spp = cfg.slots_per_position;
    let runs = par::try_map_range(exec, positions.len() * spp, |k| {
        let (range, az, truth) = positions[k / spp];
        let f = slot_features(cfg, &geometry, &plan, &schedule, range, az, seed.wrapping_add(1 + k as u64))?;
        Ok::<_, Error>(TrainingRun { features: sp_feature_vector(&f), truth })
    })?;

    let nd = cfg.distances_m.len();
    let mut dist = Split::default();
    let mut ang = Split::default();
    for (p, chunk) in runs.chunks(spp).enumerate() {
        let mut order: Vec<usize> = (0..spp).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(p as u64)));
        let split = if p < nd { &mut dist } else { &mut ang };
        for (i, &j) in order.iter().enumerate() {
            let r = chunk[j].clone();
            if i < cfg.train_per_position {
                split.train.push(r);
            } else {
                split.test.push(r);
            }
        }
    }
    Ok((dist, ang))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationReport {
    /// `(truth, prediction)` on held-out distance runs.
    pub distance: Vec<(f64, f64)>,
    pub angle: Vec<(f64, f64)>,
    pub median_distance_error_m: f64,
    pub median_angle_error_deg: f64,
    pub weights: SpWeights,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Calibrates on the training halves and scores the held-out runs.
pub fn evaluate_localization(cfg: &LocalizationConfig, seed: u64, exec: Execution) -> Result<LocalizationReport> {
    let (dist, ang) = localization_dataset(cfg, seed, exec)?;
    let weights = calibrate_sp(&dist.train, &ang.train)?;
    let score = |runs: &[TrainingRun], r: &SpRegressor| -> Result<Vec<(f64, f64)>> {
        runs.iter().map(|t| Ok((t.truth, r.predict(&t.features)?))).collect()
    };
    let distance = score(&dist.test, &weights.distance)?;
    let angle = score(&ang.test, &weights.angle)?;
    Ok(LocalizationReport {
        median_distance_error_m: median(distance.iter().map(|(t, p)| (t - p).abs()).collect()),
        median_angle_error_deg: median(angle.iter().map(|(t, p)| (t - p).abs()).collect()),
        distance,
        angle,
        weights,
    })
}
