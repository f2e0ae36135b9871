//! FFT helpers. Forward transforms use the `exp(-j 2 pi k n / N)` kernel.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Unnormalized forward DFT.
pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if !buf.is_empty() {
        plan(buf.len(), false).process(&mut buf);
    }
    buf
}

/// Unitary forward DFT (scaled by `1/sqrt(N)`).
pub fn fft_unitary(x: &[Complex64]) -> Vec<Complex64> {
    let scale = 1.0 / (x.len() as f64).sqrt();
    let mut buf = fft(x);
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

/// Unitary inverse DFT (scaled by `1/sqrt(N)`).
pub fn ifft_unitary(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if buf.is_empty() {
        return buf;
    }
    plan(buf.len(), true).process(&mut buf);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

/// Complex multiply-adds charged for one `n`-point FFT in operation counts:
/// `n * ceil(log2 n)`, the radix-2 figure.
pub fn fft_cost(n: usize) -> u64 {
    if n <= 1 {
        return 0;
    }
    let stages = usize::BITS - (n - 1).leading_zeros();
    (n as u64) * stages as u64
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Direct O(N^2) forward DFT, `e^{-j 2 pi k n / N}` kernel.
    pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_matches_naive() {
        let x: Vec<Complex64> = (0..30).map(|i| Complex64::new((i as f64 * 0.7).cos(), (i * i) as f64 % 3.0)).collect();
        for (a, b) in fft(&x).iter().zip(naive_dft(&x)) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn unitary_round_trip() {
        let x: Vec<Complex64> = (0..30)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let y = ifft_unitary(&fft_unitary(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_sign_convention() {
        // x[n] = exp(j 2 pi n / N) lands entirely in bin 1.
        let n = 16;
        let x: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * i as f64 / n as f64))
            .collect();
        let spec = fft(&x);
        assert!((spec[1].re - n as f64).abs() < 1e-9);
        assert!(spec[0].norm() < 1e-9 && spec[n - 1].norm() < 1e-9);
    }

    #[test]
    fn cost_model() {
        assert_eq!(fft_cost(1), 0);
        assert_eq!(fft_cost(2), 2);
        assert_eq!(fft_cost(30), 150);
        assert_eq!(fft_cost(32), 160);
        assert_eq!(fft_cost(1024), 10240);
    }
}
