//! Simplified NR-style slot waveforms.
//!
//! A slot is `symbols_per_slot` OFDM symbols, each `cp_length + fft_size`
//! samples. The middle `occupied_subcarriers` bins carry unit-power
//! constellation points; DMRS symbols carry a seeded QPSK sequence. The
//! transform pair is unitary (`1/sqrt(N)` both ways), so a bin and a time
//! sample see the same noise variance.

mod iq;
mod modulation;
mod predistort;
mod receiver;
mod schedule;

pub use iq::{read_iq, write_iq, IqHeader};
pub use modulation::Modulation;
pub use predistort::{predistort_dmrs, PredistortionPlan};
pub use receiver::{
    average_user_csi, demodulate_and_score, estimate_user_csi, genie_csi, noise_power_for_snr,
    LinkScore,
};
pub use schedule::{BeamPlan, SubSymbolSchedule};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dft::{fft_unitary, ifft_unitary};
use crate::error::{param, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Numerology {
    pub fft_size: usize,
    pub occupied_subcarriers: usize,
    pub cp_length: usize,
    pub sample_rate: f64,
    pub symbols_per_slot: usize,
    /// One-based symbol indices carrying DMRS.
    pub dmrs_symbol_indices: Vec<usize>,
}

impl Default for Numerology {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            occupied_subcarriers: 768,
            cp_length: 72,
            sample_rate: 122.88e6,
            symbols_per_slot: 14,
            dmrs_symbol_indices: vec![3, 4, 11, 12],
        }
    }
}

impl Numerology {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 {
            return param("fft_size must be positive");
        }
        if self.occupied_subcarriers == 0 || self.occupied_subcarriers > self.fft_size {
            return param(format!(
                "occupied subcarriers {} must be in 1..={}",
                self.occupied_subcarriers, self.fft_size
            ));
        }
        if self.cp_length > self.fft_size {
            return param("cyclic prefix longer than the symbol");
        }
        if !(self.sample_rate > 0.0) {
            return param("sample_rate must be positive");
        }
        if self.symbols_per_slot == 0 {
            return param("symbols_per_slot must be positive");
        }
        for &d in &self.dmrs_symbol_indices {
            if d == 0 || d > self.symbols_per_slot {
                return param(format!("DMRS symbol index {d} outside 1..={}", self.symbols_per_slot));
            }
        }
        Ok(())
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_length
    }

    pub fn slot_len(&self) -> usize {
        self.symbol_len() * self.symbols_per_slot
    }

    pub fn slot_duration(&self) -> f64 {
        self.slot_len() as f64 / self.sample_rate
    }

    /// NR slot length for this subcarrier spacing, `1 ms * 15 kHz / scs`.
    /// Longer than [`Self::slot_duration`] because the extended first CP of
    /// each half subframe is not modelled.
    pub fn nominal_slot_duration(&self) -> f64 {
        1e-3 * 15e3 / (self.sample_rate / self.fft_size as f64)
    }

    /// Sample offset of symbol `s` (zero-based), CP included.
    pub fn symbol_start(&self, s: usize) -> usize {
        s * self.symbol_len()
    }

    /// Sample offset of the CP-stripped body of symbol `s` (zero-based).
    pub fn body_start(&self, s: usize) -> usize {
        self.symbol_start(s) + self.cp_length
    }

    /// Zero-based DMRS symbol indices.
    pub fn dmrs_symbols(&self) -> Vec<usize> {
        self.dmrs_symbol_indices.iter().map(|d| d - 1).collect()
    }

    pub fn is_dmrs(&self, s: usize) -> bool {
        self.dmrs_symbol_indices.contains(&(s + 1))
    }

    pub fn data_symbols(&self) -> Vec<usize> {
        (0..self.symbols_per_slot).filter(|&s| !self.is_dmrs(s)).collect()
    }

    /// FFT bin indices of the occupied subcarriers, ordered from the lowest
    /// signed frequency `-occupied/2` upwards.
    pub fn occupied_bins(&self) -> Vec<usize> {
        let n = self.fft_size as isize;
        let lo = -(self.occupied_subcarriers as isize / 2);
        (0..self.occupied_subcarriers as isize)
            .map(|i| (lo + i).rem_euclid(n) as usize)
            .collect()
    }

    /// Signed subcarrier index for each entry of [`occupied_bins`](Self::occupied_bins).
    pub fn occupied_offsets(&self) -> Vec<isize> {
        let lo = -(self.occupied_subcarriers as isize / 2);
        (0..self.occupied_subcarriers as isize).map(|i| lo + i).collect()
    }

    pub fn body<'a>(&self, samples: &'a [Complex64], s: usize) -> &'a [Complex64] {
        let b = self.body_start(s);
        &samples[b..b + self.fft_size]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotWaveform {
    pub numerology: Numerology,
    pub modulation: Modulation,
    /// Frequency grid per symbol, `fft_size` bins each.
    pub grids: Vec<Vec<Complex64>>,
    /// Time-domain samples for the whole slot, CP included.
    pub samples: Vec<Complex64>,
    /// Payload bits per symbol; empty for DMRS symbols.
    pub bits: Vec<Vec<u8>>,
}

impl SlotWaveform {
    /// CP-stripped samples of symbol `s`.
    pub fn body(&self, s: usize) -> &[Complex64] {
        self.numerology.body(&self.samples, s)
    }
}

/// Builds time samples (with CP) from one frequency grid.
pub(crate) fn modulate_symbol(grid: &[Complex64], cp: usize) -> Vec<Complex64> {
    let body = ifft_unitary(grid);
    let n = body.len();
    let mut out = Vec::with_capacity(n + cp);
    out.extend_from_slice(&body[n - cp..]);
    out.extend_from_slice(&body);
    out
}

/// Recomputes the grid of symbol `s` from its time samples.
pub(crate) fn regrid(num: &Numerology, samples: &[Complex64], s: usize) -> Vec<Complex64> {
    fft_unitary(num.body(samples, s))
}

pub fn generate_slot(numerology: &Numerology, modulation: Modulation, seed: u64) -> Result<SlotWaveform> {
    numerology.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = numerology.occupied_bins();
    let n = numerology.fft_size;
    let mut grids = Vec::with_capacity(numerology.symbols_per_slot);
    let mut bits = Vec::with_capacity(numerology.symbols_per_slot);
    let mut samples = Vec::with_capacity(numerology.slot_len());
    for s in 0..numerology.symbols_per_slot {
        let mut grid = vec![Complex64::new(0.0, 0.0); n];
        let mut payload = Vec::new();
        if numerology.is_dmrs(s) {
            for &k in &bins {
                let q: [u8; 2] = [rng.random_range(0..2), rng.random_range(0..2)];
                grid[k] = Modulation::Qpsk.map(&q);
            }
        } else {
            let b = modulation.bits_per_symbol();
            payload = (0..bins.len() * b).map(|_| rng.random_range(0..2u8)).collect();
            for (&k, chunk) in bins.iter().zip(payload.chunks(b)) {
                grid[k] = modulation.map(chunk);
            }
        }
        samples.extend(modulate_symbol(&grid, numerology.cp_length));
        grids.push(grid);
        bits.push(payload);
    }
    Ok(SlotWaveform { numerology: numerology.clone(), modulation, grids, samples, bits })
}
