//! dB and degree conversions used at I/O boundaries.

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Amplitude ratio for an attenuation given in dB (power).
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

pub fn rad(deg: f64) -> f64 {
    deg.to_radians()
}

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts a propagation path length to whole samples, rounding to nearest.
pub fn path_length_to_samples(meters: f64, sample_rate: f64) -> usize {
    (meters / SPEED_OF_LIGHT * sample_rate).round().max(0.0) as usize
}
