//! Experiment drivers behind the CLI: beam patterns and the epsilon
//! trade-off, end-to-end link simulation and baselines, 2D imaging, SP
//! localization, and the mobility run.

mod imaging;
mod link;
mod localization;
mod mobility;
mod patterns;

pub use imaging::{run_imaging, write_pgm, AirTime, ImagingConfig, ImagingGrid};
pub use link::{
    data_beamformer, run_baseline, simulate, BaselineMode, SensingSummary, BaselineReport, LinkConfig, SimulationReport, UserReport,
};
pub use localization::{
    calibrate_sp, evaluate_localization, localization_dataset, sp_feature_vector, sp_localize, LocalizationConfig, FEATURES_PER_BEAM,
    LocalizationReport, SpEstimate, SpRegressor, SpWeights, Split, TrainingRun,
};
pub use mobility::{run_mobility, MobilityConfig, MobilityReport, MobilityTick, SoundnessCheck};
pub use patterns::{parity, pattern_table, tradeoff_sweep, ParityReport, ParityRow, TradeoffPoint};

use crate::array::Direction;

/// `count` azimuth directions from `start_deg` in `step_deg` increments,
/// optionally with a fixed elevation.
pub fn azimuth_sweep(start_deg: f64, step_deg: f64, count: usize, elevation_deg: Option<f64>) -> Vec<Direction> {
    (0..count)
        .map(|i| Direction::from_degrees(start_deg + step_deg * i as f64, elevation_deg))
        .collect()
}

/// The default 34-beam sweep, -16.5 to +16.5 degrees in 1 degree steps.
pub fn default_sweep(num_beams: usize) -> Vec<Direction> {
    let start = -(num_beams as f64 - 1.0) / 2.0;
    azimuth_sweep(start, 1.0, num_beams, None)
}
