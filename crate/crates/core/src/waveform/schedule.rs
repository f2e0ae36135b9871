use crate::array::{ArrayGeometry, Beamformer, Direction};
use crate::error::{param, Result};

use super::Numerology;

/// Partition of one DMRS symbol body into `num_beams` windows of
/// `sub_len = floor(fft_size / num_beams)` samples. The `fft_size - M sub_len`
/// trailing samples keep the last beam but are not used for sensing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubSymbolSchedule {
    num_beams: usize,
    sub_len: usize,
    fft_size: usize,
}

impl SubSymbolSchedule {
    pub fn new(fft_size: usize, num_beams: usize) -> Result<Self> {
        if num_beams == 0 || num_beams > fft_size {
            return param(format!("num_beams must be in 1..={fft_size}, got {num_beams}"));
        }
        Ok(Self { num_beams, sub_len: fft_size / num_beams, fft_size })
    }

    pub fn num_beams(&self) -> usize {
        self.num_beams
    }

    pub fn sub_len(&self) -> usize {
        self.sub_len
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn unused_tail(&self) -> usize {
        self.fft_size - self.num_beams * self.sub_len
    }

    /// Body sample range of sub-symbol `m`.
    pub fn window(&self, m: usize) -> std::ops::Range<usize> {
        m * self.sub_len..(m + 1) * self.sub_len
    }

    /// Beam driving body sample `n`.
    pub fn beam_of_sample(&self, n: usize) -> usize {
        (n / self.sub_len).min(self.num_beams - 1)
    }

    /// Whether body sample `n` belongs to a sensing window.
    pub fn is_used(&self, n: usize) -> bool {
        n < self.num_beams * self.sub_len
    }
}

/// Which beamformer drives every sample of a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPlan {
    pub beams: Vec<Beamformer>,
    /// Index into `beams` for every slot sample, CP included.
    pub sample_beam: Vec<usize>,
}

impl BeamPlan {
    /// One beamformer for the whole slot.
    pub fn fixed(num: &Numerology, beam: Beamformer) -> Self {
        Self { beams: vec![beam], sample_beam: vec![0; num.slot_len()] }
    }

    /// Sub-symbol switching through `dmrs_beams` in every DMRS symbol, the
    /// data beam elsewhere.
    pub fn switched(
        num: &Numerology,
        schedule: &SubSymbolSchedule,
        dmrs_beams: &[Beamformer],
        data_beam: Beamformer,
    ) -> Result<Self> {
        let per: Vec<Vec<Beamformer>> = vec![dmrs_beams.to_vec(); num.dmrs_symbol_indices.len()];
        Self::switched_per_symbol(num, schedule, &per, data_beam)
    }

    /// Sub-symbol switching with a different beam set in each DMRS symbol
    /// (`per_symbol[i]` drives the `i`-th DMRS symbol).
    ///
    /// CP samples take the beam of the body sample they copy, so the cyclic
    /// structure of each sub-symbol survives the switch.
    pub fn switched_per_symbol(
        num: &Numerology,
        schedule: &SubSymbolSchedule,
        per_symbol: &[Vec<Beamformer>],
        data_beam: Beamformer,
    ) -> Result<Self> {
        num.validate()?;
        if schedule.fft_size() != num.fft_size {
            return param("schedule and numerology disagree on fft_size");
        }
        if per_symbol.len() != num.dmrs_symbol_indices.len() {
            return param(format!(
                "{} beam sets for {} DMRS symbols",
                per_symbol.len(),
                num.dmrs_symbol_indices.len()
            ));
        }
        let mut beams = vec![data_beam];
        let mut sample_beam = vec![0usize; num.slot_len()];
        for (set, s) in per_symbol.iter().zip(num.dmrs_symbols()) {
            if set.len() != schedule.num_beams() {
                return param(format!("{} beams for a {}-way schedule", set.len(), schedule.num_beams()));
            }
            let base = beams.len();
            beams.extend(set.iter().cloned());
            let n = num.fft_size;
            let cp = num.cp_length;
            let st = num.symbol_start(s);
            for i in 0..cp {
                sample_beam[st + i] = base + schedule.beam_of_sample(n - cp + i);
            }
            for i in 0..n {
                sample_beam[st + cp + i] = base + schedule.beam_of_sample(i);
            }
        }
        Ok(Self { beams, sample_beam })
    }

    /// One beam per DMRS symbol without sub-symbol switching, data beam
    /// elsewhere.
    pub fn per_dmrs_symbol(num: &Numerology, dmrs_beams: &[Beamformer], data_beam: Beamformer) -> Result<Self> {
        let schedule = SubSymbolSchedule::new(num.fft_size, 1)?;
        let per: Vec<Vec<Beamformer>> = dmrs_beams.iter().map(|b| vec![b.clone()]).collect();
        Self::switched_per_symbol(num, &schedule, &per, data_beam)
    }

    pub fn beam_at(&self, sample: usize) -> &Beamformer {
        &self.beams[self.sample_beam[sample]]
    }

    /// Beamforming gain of every beam towards `dir`.
    pub fn gains_towards(&self, geometry: &ArrayGeometry, dir: Direction) -> Result<Vec<f64>> {
        let s = geometry.steering(dir.fit_to(geometry))?;
        self.beams
            .iter()
            .map(|b| {
                if b.len() != s.len() {
                    return param("beam length does not match the array");
                }
                Ok(crate::array::response(&s, b.weights()).norm_sqr())
            })
            .collect()
    }

    /// Number of beam changes within DMRS symbol `s` (zero-based) body.
    pub fn switches_in_symbol(&self, num: &Numerology, s: usize) -> usize {
        let b = num.body_start(s);
        let seg = &self.sample_beam[b..b + num.fft_size];
        1 + seg.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let s = SubSymbolSchedule::new(1024, 34).unwrap();
        assert_eq!(s.sub_len(), 30);
        assert_eq!(s.unused_tail(), 4);
        assert_eq!(s.window(33), 990..1020);
        assert_eq!(s.beam_of_sample(1023), 33);
        assert!(!s.is_used(1020));
        // 30 samples at 122.88 MHz is about 0.24 us.
        assert!((30.0f64 / 122.88e6 - 0.244e-6).abs() < 1e-9);
    }

    #[test]
    fn schedule_bounds() {
        assert!(SubSymbolSchedule::new(1024, 0).is_err());
        assert!(SubSymbolSchedule::new(16, 17).is_err());
        let one = SubSymbolSchedule::new(1024, 1).unwrap();
        assert_eq!(one.window(0), 0..1024);
    }

    #[test]
    fn switched_plan_layout() {
        let num = Numerology::default();
        let g = ArrayGeometry::ula(4).unwrap();
        let sched = SubSymbolSchedule::new(num.fft_size, 34).unwrap();
        let beams: Vec<Beamformer> = (0..34)
            .map(|m| Beamformer::conjugate(&g, Direction::azimuth((m as f64 - 16.5).to_radians())).unwrap())
            .collect();
        let data = Beamformer::conjugate(&g, Direction::azimuth(0.0)).unwrap();
        let plan = BeamPlan::switched(&num, &sched, &beams, data.clone()).unwrap();
        assert_eq!(plan.beams.len(), 1 + 4 * 34);
        assert_eq!(plan.switches_in_symbol(&num, 2), 34);
        assert_eq!(plan.switches_in_symbol(&num, 0), 1);
        assert_eq!(plan.beam_at(0), &data);
        let b = num.body_start(2);
        assert_eq!(plan.beam_at(b + 31), &beams[1]);
        // The CP copies body samples 952.., which belong to beams 31..=33.
        assert_eq!(plan.beam_at(num.symbol_start(2)), &beams[31]);
        assert_eq!(plan.beam_at(b - 1), &beams[33]);
    }
}
