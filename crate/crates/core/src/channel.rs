//! Dominant-path channel: `y[n] = sqrt(g) alpha e^{j dtheta} x[n - d] + noise`.
//!
//! The beamforming gain `g` is that of the beamformer active when the delayed
//! sample left the array, so a path straddling a sub-symbol boundary carries
//! the gains of both beams. Only the gain magnitude enters; the beam's phase
//! response towards the path is not modeled.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, Beamformer, Direction};
use crate::error::{param, Result};
use crate::optimizer::UserLink;
use crate::units::{db_to_amplitude, db_to_lin, path_length_to_samples};
use crate::waveform::BeamPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathModel {
    /// Amplitude attenuation in `[0, 1]`.
    pub attenuation: f64,
    pub phase_shift: f64,
    pub delay_samples: usize,
}

impl PathModel {
    pub fn new(attenuation: f64, phase_shift: f64, delay_samples: usize) -> Result<Self> {
        let p = Self { attenuation, phase_shift, delay_samples };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.attenuation) {
            return param(format!("path attenuation {} outside [0, 1]", self.attenuation));
        }
        Ok(())
    }

    pub fn coefficient(&self) -> Complex64 {
        Complex64::from_polar(self.attenuation, self.phase_shift)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub direction: Direction,
    pub path: PathModel,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneUser {
    pub link: UserLink,
    pub path: PathModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub users: Vec<SceneUser>,
    pub reflectors: Vec<Reflector>,
    pub noise_power: f64,
    /// Residual TX-to-RX leakage relative to the noise floor; `None` disables it.
    pub self_interference_inr_db: Option<f64>,
}

impl Scene {
    pub fn new(noise_power: f64) -> Self {
        Self { users: vec![], reflectors: vec![], noise_power, self_interference_inr_db: Some(20.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            return param(format!("noise power must be positive, got {}", self.noise_power));
        }
        for r in &self.reflectors {
            r.path.validate()?;
        }
        for u in &self.users {
            u.path.validate()?;
            u.link.validate()?;
        }
        Ok(())
    }
}

/// Receive-side array pattern for monostatic sensing.
#[derive(Debug, Clone, PartialEq)]
pub struct RxPattern {
    geometry: ArrayGeometry,
    beam: Beamformer,
}

impl RxPattern {
    pub fn new(geometry: ArrayGeometry, beam: Beamformer) -> Result<Self> {
        if beam.len() != geometry.num_elements() {
            return param("RX beam does not match the RX array");
        }
        Ok(Self { geometry, beam })
    }

    /// 4x4 planar array with a fixed conjugate beam towards broadside.
    pub fn broadside_4x4() -> Self {
        let geometry = ArrayGeometry::planar(4, 4).expect("valid geometry");
        let beam = Beamformer::conjugate(&geometry, Direction::new(0.0, 0.0)).expect("broadside is valid");
        Self { geometry, beam }
    }

    /// Flat unit gain (an isotropic receiver).
    pub fn isotropic() -> Self {
        let geometry = ArrayGeometry::ula(1).expect("valid geometry");
        Self { beam: Beamformer::conjugate(&geometry, Direction::azimuth(0.0)).expect("valid"), geometry }
    }

    pub fn gain(&self, dir: Direction) -> Result<f64> {
        self.beam.gain(&self.geometry, dir.fit_to(&self.geometry))
    }
}

/// Complex Gaussian noise with variance `power`, seeded.
pub fn awgn(len: usize, power: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = Normal::new(0.0, (power / 2.0).sqrt()).expect("finite variance");
    (0..len).map(|_| Complex64::new(nd.sample(&mut rng), nd.sample(&mut rng))).collect()
}

/// Adds one delayed, beam-weighted copy of `x` into `y`.
fn add_path(
    y: &mut [Complex64],
    x: &[Complex64],
    plan: &BeamPlan,
    amps: &[f64],
    coef: Complex64,
    delay: usize,
) {
    for n in delay..y.len().min(x.len() + delay) {
        let t = n - delay;
        y[n] += x[t] * coef * amps[plan.sample_beam[t]];
    }
}

fn check_plan(x: &[Complex64], plan: &BeamPlan) -> Result<()> {
    if plan.sample_beam.len() != x.len() {
        return param(format!("beam plan covers {} samples, waveform has {}", plan.sample_beam.len(), x.len()));
    }
    Ok(())
}

/// Downlink to one user. `noise_seed = None` gives the noiseless response.
pub fn apply_downlink(
    x: &[Complex64],
    plan: &BeamPlan,
    user: &SceneUser,
    geometry: &ArrayGeometry,
    scene: &Scene,
    noise_seed: Option<u64>,
) -> Result<Vec<Complex64>> {
    check_plan(x, plan)?;
    user.path.validate()?;
    let amps: Vec<f64> = plan.gains_towards(geometry, user.link.direction)?.iter().map(|g| g.sqrt()).collect();
    let mut y = match noise_seed {
        Some(seed) => {
            scene.validate()?;
            awgn(x.len(), scene.noise_power, seed)
        }
        None => vec![Complex64::new(0.0, 0.0); x.len()],
    };
    add_path(&mut y, x, plan, &amps, user.path.coefficient(), user.path.delay_samples);
    Ok(y)
}

/// Round trip through every reflector back to the co-located RX array, plus
/// zero-delay self-interference at the configured INR and AWGN.
pub fn apply_monostatic(
    x: &[Complex64],
    plan: &BeamPlan,
    geometry: &ArrayGeometry,
    scene: &Scene,
    rx: &RxPattern,
    noise_seed: Option<u64>,
) -> Result<Vec<Complex64>> {
    check_plan(x, plan)?;
    let mut y = match noise_seed {
        Some(seed) => {
            scene.validate()?;
            awgn(x.len(), scene.noise_power, seed)
        }
        None => vec![Complex64::new(0.0, 0.0); x.len()],
    };
    for r in &scene.reflectors {
        r.path.validate()?;
        let g_rx = rx.gain(r.direction)?;
        let amps: Vec<f64> =
            plan.gains_towards(geometry, r.direction)?.iter().map(|g| (g * g_rx).sqrt()).collect();
        add_path(&mut y, x, plan, &amps, r.path.coefficient(), r.path.delay_samples);
    }
    if let Some(inr_db) = scene.self_interference_inr_db {
        let px = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len().max(1) as f64;
        if px > 0.0 {
            let a = (db_to_lin(inr_db) * scene.noise_power / px).sqrt();
            y.iter_mut().zip(x).for_each(|(y, x)| *y += x * a);
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub azimuth_deg: f64,
    #[serde(default)]
    pub elevation_deg: Option<f64>,
    #[serde(default)]
    pub base_snr_db: f64,
    #[serde(default)]
    pub attenuation_db: f64,
    #[serde(default)]
    pub phase_deg: f64,
    #[serde(default)]
    pub delay_samples: Option<usize>,
    /// One-way link distance, converted to whole samples.
    #[serde(default)]
    pub distance_m: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectorSpec {
    #[serde(default)]
    pub label: String,
    pub azimuth_deg: f64,
    #[serde(default)]
    pub elevation_deg: Option<f64>,
    #[serde(default)]
    pub attenuation_db: f64,
    #[serde(default)]
    pub phase_deg: f64,
    #[serde(default)]
    pub delay_samples: Option<usize>,
    /// Range to the reflector; the round trip is twice this.
    #[serde(default)]
    pub range_m: Option<f64>,
}

fn default_inr() -> Option<f64> {
    Some(20.0)
}

/// Scene file contents: angles in degrees, attenuation in dB (power, <= 0),
/// delays in samples or meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub noise_power: f64,
    #[serde(default = "default_inr")]
    pub self_interference_inr_db: Option<f64>,
    #[serde(default)]
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub reflectors: Vec<ReflectorSpec>,
}

fn resolve_delay(samples: Option<usize>, meters: Option<f64>, sample_rate: f64, what: &str) -> Result<usize> {
    match (samples, meters) {
        (Some(d), None) => Ok(d),
        (None, Some(m)) if m >= 0.0 => Ok(path_length_to_samples(m, sample_rate)),
        (None, None) => Ok(0),
        (None, Some(m)) => param(format!("{what}: negative distance {m}")),
        (Some(_), Some(_)) => param(format!("{what}: give delay in samples or meters, not both")),
    }
}

fn attenuation(db: f64, what: &str) -> Result<f64> {
    if db > 0.0 {
        return param(format!("{what}: attenuation {db} dB would amplify"));
    }
    Ok(db_to_amplitude(db))
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self { noise_power: 1e-3, self_interference_inr_db: default_inr(), users: Vec::new(), reflectors: Vec::new() }
    }
}

impl SceneSpec {
    pub fn resolve(&self, sample_rate: f64) -> Result<Scene> {
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let what = format!("user {i}");
                Ok(SceneUser {
                    link: UserLink::new(Direction::from_degrees(u.azimuth_deg, u.elevation_deg), db_to_lin(u.base_snr_db)),
                    path: PathModel::new(
                        attenuation(u.attenuation_db, &what)?,
                        u.phase_deg.to_radians(),
                        resolve_delay(u.delay_samples, u.distance_m, sample_rate, &what)?,
                    )?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let reflectors = self
            .reflectors
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let what = format!("reflector {i}");
                Ok(Reflector {
                    direction: Direction::from_degrees(r.azimuth_deg, r.elevation_deg),
                    path: PathModel::new(
                        attenuation(r.attenuation_db, &what)?,
                        r.phase_deg.to_radians(),
                        resolve_delay(r.delay_samples, r.range_m.map(|m| 2.0 * m), sample_rate, &what)?,
                    )?,
                    label: r.label.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scene = Scene { users, reflectors, noise_power: self.noise_power, self_interference_inr_db: self.self_interference_inr_db };
        scene.validate()?;
        Ok(scene)
    }
}
