use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{regrid, SlotWaveform, SubSymbolSchedule};
use crate::array::{ArrayGeometry, Beamformer, Direction};
use crate::error::{param, Error, Result};

/// Per-sub-symbol DMRS amplitude factors
/// `sqrt(sum_u g_data(u) / sum_u g_dmrs(m, u))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredistortionPlan {
    pub factors: Vec<f64>,
}

impl PredistortionPlan {
    pub fn identity(num_beams: usize) -> Self {
        Self { factors: vec![1.0; num_beams] }
    }

    /// `data_gains[u]` is the data-beam gain towards user `u`;
    /// `dmrs_gains[m][u]` the gain of sub-symbol beam `m`.
    pub fn from_gains(data_gains: &[f64], dmrs_gains: &[Vec<f64>]) -> Result<Self> {
        if data_gains.is_empty() {
            return param("pre-distortion needs at least one user");
        }
        let num: f64 = data_gains.iter().sum();
        let factors = dmrs_gains
            .iter()
            .enumerate()
            .map(|(m, g)| {
                if g.len() != data_gains.len() {
                    return param(format!("sub-symbol {m} has {} user gains, expected {}", g.len(), data_gains.len()));
                }
                let den: f64 = g.iter().sum();
                if !(den > 0.0) {
                    return Err(Error::ZeroCommGain { beam: m });
                }
                Ok((num / den).sqrt())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { factors })
    }

    pub fn from_beams(
        geometry: &ArrayGeometry,
        users: &[Direction],
        data_beam: &Beamformer,
        dmrs_beams: &[Beamformer],
    ) -> Result<Self> {
        let gain = |w: &Beamformer, d: &Direction| crate::array::beamforming_gain(w, geometry, d.fit_to(geometry));
        let data = users.iter().map(|d| gain(data_beam, d)).collect::<Result<Vec<_>>>()?;
        let dmrs = dmrs_beams
            .iter()
            .map(|w| users.iter().map(|d| gain(w, d)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_gains(&data, &dmrs)
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

/// Scales every DMRS sub-symbol by its factor. CP samples take the factor of
/// the body sample they copy; the unused tail takes the last factor. DMRS
/// grids are recomputed, data symbols are left untouched.
pub fn predistort_dmrs(slot: &SlotWaveform, schedule: &SubSymbolSchedule, plan: &PredistortionPlan) -> Result<SlotWaveform> {
    let num = &slot.numerology;
    if schedule.fft_size() != num.fft_size {
        return param("schedule and numerology disagree on fft_size");
    }
    if plan.len() != schedule.num_beams() {
        return param(format!("{} factors for a {}-way schedule", plan.len(), schedule.num_beams()));
    }
    let mut out = slot.clone();
    let n = num.fft_size;
    let cp = num.cp_length;
    for s in num.dmrs_symbols() {
        let st = num.symbol_start(s);
        let scale = |i: usize| Complex64::new(plan.factors[schedule.beam_of_sample(i)], 0.0);
        for i in 0..cp {
            out.samples[st + i] *= scale(n - cp + i);
        }
        for i in 0..n {
            out.samples[st + cp + i] *= scale(i);
        }
        out.grids[s] = regrid(num, &out.samples, s);
    }
    Ok(out)
}
