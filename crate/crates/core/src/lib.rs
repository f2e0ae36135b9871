//! Sub-symbol beam switching for joint mmWave sensing and communication.
//!
//! The crate covers the whole simulation pipeline: ISAC codebook
//! optimization ([`optimizer`]), slot waveform generation with DMRS
//! pre-distortion ([`waveform`]), a dominant-path channel ([`channel`]), the
//! sub-symbol sensing CSI estimator with a sliding-DFT delay search
//! ([`sensing`]), and experiment drivers ([`experiments`]) used by the
//! `beamswitch` binary.
//!
//! Heavy loops run through [`par`], which uses rayon when the `parallel`
//! feature is on (the default) and plain iterators otherwise.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod channel;
pub mod dft;
pub mod error;
pub mod experiments;
pub mod optimizer;
pub mod par;
pub mod sensing;
pub mod units;
pub mod waveform;

pub use array::{
    beamforming_gain, effective_snr, quantize, steering_vector, ArrayGeometry, Beamformer,
    Direction, Layout, QuantizationSpec,
};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use par::Execution;
