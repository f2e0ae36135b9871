//! Run configuration: one JSON file, every section optional.

use serde::{Deserialize, Serialize};

use beamswitch::channel::{SceneSpec, UserSpec};
use beamswitch::experiments::{azimuth_sweep, ImagingConfig, LinkConfig, LocalizationConfig, MobilityConfig};
use beamswitch::optimizer::{OptimizerConfig, UserLink};
use beamswitch::sensing::DelaySearchConfig;
use beamswitch::units::db_to_lin;
use beamswitch::waveform::{Modulation, Numerology};
use beamswitch::{ArrayGeometry, Direction, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase", deny_unknown_fields)]
pub enum ArraySpec {
    Ula {
        elements: usize,
        #[serde(default = "half")]
        spacing: f64,
    },
    Planar {
        rows: usize,
        cols: usize,
        #[serde(default = "half")]
        spacing: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl Default for ArraySpec {
    fn default() -> Self {
        ArraySpec::Ula { elements: 16, spacing: 0.5 }
    }
}

impl ArraySpec {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        match *self {
            ArraySpec::Ula { elements, spacing } => ArrayGeometry::ula_with_spacing(elements, spacing),
            ArraySpec::Planar { rows, cols, spacing } => ArrayGeometry::planar_with_spacing(rows, cols, spacing),
        }
    }
}

/// `count` azimuths from `start_deg` in `step_deg` steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub start_deg: f64,
    pub step_deg: f64,
    pub count: usize,
    pub elevation_deg: Option<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { start_deg: -16.5, step_deg: 1.0, count: 34, elevation_deg: None }
    }
}

impl SweepSpec {
    pub fn directions(&self) -> Vec<Direction> {
        azimuth_sweep(self.start_deg, self.step_deg, self.count, self.elevation_deg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookSection {
    pub sweep: SweepSpec,
    pub sensing_base_snr_db: f64,
    /// New user positions for an update pass; same count as the scene users.
    pub moved_users: Option<Vec<UserSpec>>,
}

impl Default for CodebookSection {
    fn default() -> Self {
        Self { sweep: SweepSpec::default(), sensing_base_snr_db: 0.0, moved_users: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternSection {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl Default for PatternSection {
    fn default() -> Self {
        Self { start_deg: -90.0, stop_deg: 90.0, step_deg: 0.5 }
    }
}

impl PatternSection {
    pub fn angles(&self) -> Vec<f64> {
        let n = ((self.stop_deg - self.start_deg) / self.step_deg).floor().max(0.0) as usize;
        (0..=n).map(|i| self.start_deg + self.step_deg * i as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradeoffSection {
    pub epsilons: Vec<f64>,
    pub sensing_azimuth_deg: f64,
    pub sensing_base_snr_db: f64,
    /// Also compare OPT-Base against OPT-Accel on the same problem.
    pub parity: bool,
}

impl Default for TradeoffSection {
    fn default() -> Self {
        Self {
            epsilons: (0..=6).map(|i| 0.25 * i as f64).collect(),
            sensing_azimuth_deg: 0.0,
            sensing_base_snr_db: 0.0,
            parity: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub numerology: Numerology,
    pub modulation: Modulation,
    pub sweep: SweepSpec,
    pub sensing_base_snr_db: f64,
    pub predistortion: bool,
    pub target_snr_db: Option<f64>,
    pub delay: DelaySearchConfig,
    /// Also run the SUBF and fixed-beam baselines.
    pub baselines: bool,
    /// Write the transmitted slot as an IQ file.
    pub export_iq: bool,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            numerology: Numerology::default(),
            modulation: Modulation::Qam64,
            sweep: SweepSpec::default(),
            sensing_base_snr_db: 0.0,
            predistortion: true,
            target_snr_db: Some(30.0),
            delay: DelaySearchConfig::default(),
            baselines: true,
            export_iq: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub sub_lens: Vec<usize>,
    pub candidates: Vec<usize>,
    pub repetitions: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { sub_lens: vec![16, 30, 64, 128], candidates: vec![2, 4, 8, 10, 16, 32], repetitions: 200 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub array: ArraySpec,
    pub optimizer: OptimizerConfig,
    pub scene: SceneSpec,
    pub codebook: CodebookSection,
    pub pattern: PatternSection,
    pub tradeoff: TradeoffSection,
    pub link: LinkSection,
    pub imaging: ImagingSection,
    pub localization: LocalizationConfig,
    pub mobility: MobilityConfig,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            array: ArraySpec::default(),
            optimizer: OptimizerConfig::default(),
            scene: SceneSpec::default(),
            codebook: CodebookSection::default(),
            pattern: PatternSection::default(),
            tradeoff: TradeoffSection::default(),
            link: LinkSection::default(),
            imaging: ImagingSection::default(),
            localization: LocalizationConfig::default(),
            mobility: MobilityConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

/// Imaging uses its own array and scene so one config file can hold both a
/// link scene and an imaging scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingSection {
    pub array: ArraySpec,
    pub scene: SceneSpec,
    pub grid: ImagingConfig,
}

impl Default for ImagingSection {
    fn default() -> Self {
        let mut scene = SceneSpec { noise_power: 1e-2, ..Default::default() };
        for (label, az, el, att, delay) in [("a", -9.0, -7.0, 0.0, 3), ("b", 8.0, 8.0, -6.0206, 5)] {
            scene.reflectors.push(beamswitch::channel::ReflectorSpec {
                label: label.into(),
                azimuth_deg: az,
                elevation_deg: Some(el),
                attenuation_db: att,
                phase_deg: 0.0,
                delay_samples: Some(delay),
                range_m: None,
            });
        }
        Self { array: ArraySpec::Planar { rows: 8, cols: 8, spacing: 0.5 }, scene, grid: ImagingConfig::default() }
    }
}

impl RunConfig {
    /// Applies the seed to every nested solver configuration.
    pub fn resolve_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.optimizer.seed = self.seed;
        self.imaging.grid.optimizer.seed = self.seed;
        self.mobility.optimizer.seed = self.seed;
    }

    pub fn users(&self) -> Result<Vec<UserLink>> {
        let sr = self.link.numerology.sample_rate;
        Ok(self.scene.resolve(sr)?.users.into_iter().map(|u| u.link).collect())
    }

    pub fn moved_users(&self) -> Result<Option<Vec<UserLink>>> {
        let Some(m) = &self.codebook.moved_users else { return Ok(None) };
        let spec = SceneSpec { users: m.clone(), reflectors: Vec::new(), ..self.scene.clone() };
        Ok(Some(spec.resolve(self.link.numerology.sample_rate)?.users.into_iter().map(|u| u.link).collect()))
    }

    pub fn link_config(&self) -> LinkConfig {
        let l = &self.link;
        LinkConfig {
            numerology: l.numerology.clone(),
            modulation: l.modulation,
            sweep: l.sweep.directions(),
            optimizer: self.optimizer,
            sensing_base_snr: db_to_lin(l.sensing_base_snr_db),
            predistortion: l.predistortion,
            target_snr_db: l.target_snr_db,
            delay: l.delay,
        }
    }
}
