//! Queue-based sliding DFT.
//!
//! Advancing a length-`N` window by one sample (dequeue `y_out`, enqueue
//! `y_in`) updates its DFT in `O(N)`:
//! `Y'[k] = (Y[k] + y_in - y_out) e^{+j 2 pi k / N}` under the forward
//! `e^{-j 2 pi k n / N}` convention.

use std::collections::VecDeque;

use num_complex::Complex64;

use crate::dft::{fft, fft_cost};

/// `e^{+j 2 pi k / n}` for `k = 0..n`.
pub fn rotation_factors(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

pub fn sliding_dft_step(spectrum: &[Complex64], y_in: Complex64, y_out: Complex64) -> Vec<Complex64> {
    let mut out = spectrum.to_vec();
    sliding_dft_step_in_place(&mut out, &rotation_factors(spectrum.len()), y_in, y_out);
    out
}

pub fn sliding_dft_step_in_place(spectrum: &mut [Complex64], rot: &[Complex64], y_in: Complex64, y_out: Complex64) {
    let d = y_in - y_out;
    for (y, r) in spectrum.iter_mut().zip(rot) {
        *y = (*y + d) * r;
    }
}

/// A window of samples and its spectrum, kept in sync as samples are pushed.
#[derive(Debug, Clone)]
pub struct SlidingDft {
    queue: VecDeque<Complex64>,
    spectrum: Vec<Complex64>,
    rot: Vec<Complex64>,
    multiply_adds: u64,
}

impl SlidingDft {
    /// Starts from a full FFT of `window`.
    pub fn new(window: &[Complex64]) -> Self {
        Self {
            queue: window.iter().copied().collect(),
            spectrum: fft(window),
            rot: rotation_factors(window.len()),
            multiply_adds: fft_cost(window.len()),
        }
    }

    /// Dequeues the oldest sample, enqueues `y_in`, updates the spectrum.
    pub fn push(&mut self, y_in: Complex64) {
        let y_out = self.queue.pop_front().unwrap_or_default();
        self.queue.push_back(y_in);
        sliding_dft_step_in_place(&mut self.spectrum, &self.rot, y_in, y_out);
        self.multiply_adds += self.spectrum.len() as u64;
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn window(&self) -> impl Iterator<Item = &Complex64> {
        self.queue.iter()
    }

    /// Complex multiply-adds spent so far (FFT counted as `N ceil(log2 N)`).
    pub fn multiply_adds(&self) -> u64 {
        self.multiply_adds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dft::tests::naive_dft;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn constant_window_stays_in_dc() {
        let w = vec![Complex64::new(0.7, -0.2); 16];
        let s = naive_dft(&w);
        let next = sliding_dft_step(&s, w[0], w[0]);
        assert!((next[0] - s[0]).norm() < 1e-12);
        assert!(next[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn one_step_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Complex64> = (0..31).map(|_| Complex64::new(rng.random(), rng.random())).collect();
        let s0 = naive_dft(&x[..30]);
        let s1 = sliding_dft_step(&s0, x[30], x[0]);
        assert!(rel_err(&s1, &naive_dft(&x[1..31])) < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn sweep_matches_direct(seed in 0u64..10_000, n_idx in 0usize..3, steps in 1usize..=64) {
            let n = [16, 30, 64][n_idx];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Complex64> = (0..n + steps).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let mut s = SlidingDft::new(&x[..n]);
            for d in 1..=steps {
                s.push(x[n + d - 1]);
                prop_assert!(rel_err(s.spectrum(), &naive_dft(&x[d..d + n])) < 1e-7);
            }
            prop_assert_eq!(s.multiply_adds(), fft_cost(n) + (steps * n) as u64);
        }
    }
}
