//! User-side processing: DMRS channel estimation, equalization, EVM and BER.

use num_complex::Complex64;
use serde::Serialize;

use super::{Modulation, Numerology, SlotWaveform};
use crate::dft::fft_unitary;
use crate::error::{param, Result};

/// `H[k] = Y[k] / X[k]` over the occupied bins, ordered as
/// [`Numerology::occupied_bins`]. Both inputs are CP-stripped symbols.
pub fn estimate_user_csi(rx: &[Complex64], tx: &[Complex64], num: &Numerology) -> Result<Vec<Complex64>> {
    if rx.len() != num.fft_size || tx.len() != num.fft_size {
        return param(format!(
            "symbols must have {} samples, got rx {} tx {}",
            num.fft_size,
            rx.len(),
            tx.len()
        ));
    }
    let y = fft_unitary(rx);
    let x = fft_unitary(tx);
    Ok(num.occupied_bins().iter().map(|&k| y[k] / x[k]).collect())
}

/// Mean of the per-DMRS-symbol estimates. `reference` is the slot as the
/// standard defines it, i.e. without any BS-side pre-distortion.
pub fn average_user_csi(rx: &[Complex64], reference: &SlotWaveform) -> Result<Vec<Complex64>> {
    let num = &reference.numerology;
    if rx.len() < num.slot_len() {
        return param(format!("received slot has {} samples, need {}", rx.len(), num.slot_len()));
    }
    let dmrs = num.dmrs_symbols();
    if dmrs.is_empty() {
        return param("numerology has no DMRS symbols");
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); num.occupied_subcarriers];
    for &s in &dmrs {
        let h = estimate_user_csi(num.body(rx, s), reference.body(s), num)?;
        acc.iter_mut().zip(h).for_each(|(a, h)| *a += h);
    }
    let k = dmrs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}

/// True frequency response of a single path `amplitude * x[n - delay]`
/// (delay within the CP) over the occupied bins.
pub fn genie_csi(num: &Numerology, amplitude: Complex64, delay: usize) -> Vec<Complex64> {
    let n = num.fft_size as f64;
    num.occupied_bins()
        .iter()
        .map(|&k| amplitude * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * delay) as f64 / n))
        .collect()
}

/// Noise variance giving `snr_db` against a given per-sample signal power.
pub fn noise_power_for_snr(signal_power: f64, snr_db: f64) -> f64 {
    signal_power / crate::units::db_to_lin(snr_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkScore {
    pub evm_percent: f64,
    pub ber: f64,
    pub symbols: usize,
}

/// Equalizes every data symbol of `rx` by `csi`, slices to the nearest
/// point and scores against `tx`. EVM is RMS error over RMS reference.
pub fn demodulate_and_score(
    rx: &[Complex64],
    tx: &SlotWaveform,
    csi: &[Complex64],
    modulation: Modulation,
) -> Result<LinkScore> {
    if modulation != tx.modulation {
        return param(format!("slot carries {:?}, demodulating as {:?}", tx.modulation, modulation));
    }
    let num = &tx.numerology;
    if csi.len() != num.occupied_subcarriers {
        return param(format!("CSI has {} bins, expected {}", csi.len(), num.occupied_subcarriers));
    }
    if rx.len() < num.slot_len() {
        return param(format!("received slot has {} samples, need {}", rx.len(), num.slot_len()));
    }
    let bins = num.occupied_bins();
    let (mut err, mut refp) = (0.0, 0.0);
    let (mut bit_errors, mut bits_total) = (0usize, 0usize);
    let mut decided = Vec::with_capacity(modulation.bits_per_symbol());
    let mut count = 0;
    for s in num.data_symbols() {
        let y = fft_unitary(num.body(rx, s));
        let sent = &tx.bits[s];
        for (i, (&k, h)) in bins.iter().zip(csi).enumerate() {
            let z = y[k] / h;
            let x = tx.grids[s][k];
            err += (z - x).norm_sqr();
            refp += x.norm_sqr();
            decided.clear();
            modulation.demap(z, &mut decided);
            let b = modulation.bits_per_symbol();
            let truth = &sent[i * b..(i + 1) * b];
            bit_errors += decided.iter().zip(truth).filter(|(a, b)| a != b).count();
            bits_total += b;
        }
        count += 1;
    }
    Ok(LinkScore {
        evm_percent: 100.0 * (err / refp).sqrt(),
        ber: bit_errors as f64 / bits_total.max(1) as f64,
        symbols: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::generate_slot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identity_channel() {
        let num = Numerology::default();
        let slot = generate_slot(&num, Modulation::Qpsk, 1).unwrap();
        let s = num.dmrs_symbols()[0];
        let h = estimate_user_csi(slot.body(s), slot.body(s), &num).unwrap();
        assert_eq!(h.len(), 768);
        assert!(h.iter().all(|h| (h - 1.0).norm() < 1e-12));
    }

    #[test]
    fn scaled_and_rotated() {
        let num = Numerology::default();
        let slot = generate_slot(&num, Modulation::Qpsk, 1).unwrap();
        let s = num.dmrs_symbols()[0];
        let a = Complex64::from_polar(0.5, std::f64::consts::PI / 3.0);
        let rx: Vec<Complex64> = slot.body(s).iter().map(|x| x * a).collect();
        let h = estimate_user_csi(&rx, slot.body(s), &num).unwrap();
        assert!(h.iter().all(|h| (h - a).norm() < 1e-12));
    }

    #[test]
    fn delay_gives_linear_phase() {
        // Delay within the CP: the body sees a circular shift of 3 samples.
        let num = Numerology::default();
        let slot = generate_slot(&num, Modulation::Qpsk, 4).unwrap();
        let s = num.dmrs_symbols()[0];
        let b = num.body_start(s);
        let rx: Vec<Complex64> = (0..num.fft_size).map(|i| slot.samples[b + i - 3]).collect();
        let h = estimate_user_csi(&rx, slot.body(s), &num).unwrap();
        let genie = genie_csi(&num, Complex64::new(1.0, 0.0), 3);
        for (a, g) in h.iter().zip(&genie) {
            assert!((a - g).norm() < 1e-9);
        }
        // Adjacent occupied bins differ by -2 pi 3 / N in phase.
        let step = (h[1] / h[0]).arg();
        assert!((step + 2.0 * std::f64::consts::PI * 3.0 / 1024.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_genie_is_perfect() {
        let num = Numerology::default();
        let slot = generate_slot(&num, Modulation::Qam64, 5).unwrap();
        let csi = vec![Complex64::new(1.0, 0.0); 768];
        let score = demodulate_and_score(&slot.samples, &slot, &csi, Modulation::Qam64).unwrap();
        assert!(score.evm_percent < 1e-9);
        assert_eq!(score.ber, 0.0);
        assert_eq!(score.symbols, 10);
        assert!(demodulate_and_score(&slot.samples, &slot, &csi, Modulation::Qam16).is_err());
    }

    #[test]
    fn evm_tracks_snr() {
        // Unitary transforms: per-bin SNR equals 1 / sigma^2 for unit-power points.
        let num = Numerology::default();
        let slot = generate_slot(&num, Modulation::Qam64, 6).unwrap();
        let csi = vec![Complex64::new(1.0, 0.0); 768];
        for snr_db in [0.0, 10.0, 20.0, 30.0] {
            let var = noise_power_for_snr(1.0, snr_db);
            let nd = Normal::new(0.0, (var / 2.0).sqrt()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let rx: Vec<Complex64> =
                slot.samples.iter().map(|x| x + Complex64::new(nd.sample(&mut rng), nd.sample(&mut rng))).collect();
            let score = demodulate_and_score(&rx, &slot, &csi, Modulation::Qam64).unwrap();
            let expect = 100.0 * 10f64.powf(-snr_db / 20.0);
            assert!((score.evm_percent - expect).abs() < 0.1 * expect, "{snr_db}: {}", score.evm_percent);
        }
    }
}
