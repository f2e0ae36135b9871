//! OPT-Base: maximize `alpha Gamma_s + mean_u Gamma_u` under `|w_n| <= 1`.
//!
//! The objective is a convex quadratic in `w`, so its maximum sits on the
//! boundary and the problem is nonconvex. Projected gradient ascent from a
//! multi-beam start (sum of conjugate beams towards every target) finds the
//! local maximum nearest that start. Only improving steps are accepted, so the
//! recorded objective never decreases.

use num_complex::Complex64;

use super::{check_inputs, OptimizerConfig, Problem, SensingTarget, UserLink};
use crate::array::{ArrayGeometry, Beamformer};
use crate::error::{param, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BaseSolution {
    pub weights: Beamformer,
    /// Objective at the returned weights, linear SNR.
    pub objective: f64,
    /// Objective after every accepted iteration, starting with the initial point.
    pub history: Vec<f64>,
    pub converged: bool,
}

fn objective(p: &Problem, w: &[Complex64]) -> f64 {
    p.gains(w).iter().sum()
}

fn unit_clip(w: &mut [Complex64]) {
    for x in w {
        let a = x.norm();
        if a > 1.0 {
            *x /= a;
        }
    }
}

/// Rotates `w` so that `w_0` has the phase of `reference`.
fn fix_gauge(w: &mut [Complex64], reference: Complex64) {
    if w[0].norm() > 0.0 && reference.norm() > 0.0 {
        let rot = Complex64::from_polar(1.0, reference.arg() - w[0].arg());
        w.iter_mut().for_each(|x| *x *= rot);
    }
}

pub fn solve_opt_base(
    users: &[UserLink],
    target: &SensingTarget,
    geometry: &ArrayGeometry,
    cfg: &OptimizerConfig,
) -> Result<BaseSolution> {
    if users.is_empty() {
        return param("OPT-Base needs at least one user");
    }
    check_inputs(users, target, geometry, cfg)?;
    let u = users.len() as f64;
    let mut links = vec![(target.direction, cfg.alpha_tradeoff * target.base_snr)];
    links.extend(users.iter().map(|l| (l.direction, l.base_snr / u)));
    let p = Problem::new(geometry, &links)?;
    let c0 = geometry.steering(target.direction)?[0].conj();

    let n = geometry.num_elements();
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    for (a, s) in p.rows.iter().zip(&p.scale) {
        let k = s.sqrt();
        for (wn, an) in w.iter_mut().zip(a) {
            *wn += an.conj() * k;
        }
    }
    let m = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if m < 1e-12 {
        w = p.rows[0].iter().map(|a| a.conj()).collect();
    } else {
        w.iter_mut().for_each(|z| *z /= m);
    }
    fix_gauge(&mut w, c0);

    let mut val = objective(&p, &w);
    let mut history = vec![val * p.unit];
    let mut step: f64 = 0.1;
    let mut converged = false;
    let mut trial = w.clone();
    for _ in 0..cfg.max_iters {
        let r = p.responses(&w);
        let mut grad = vec![Complex64::new(0.0, 0.0); n];
        for ((a, rk), s) in p.rows.iter().zip(&r).zip(&p.scale) {
            let k = rk * (2.0 * s);
            for (g, an) in grad.iter_mut().zip(a) {
                *g += an.conj() * k;
            }
        }
        let gn = grad.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if gn < 1e-14 {
            converged = true;
            break;
        }
        step = (step * 2.0).min(0.1);
        let mut next = None;
        while step >= 1e-12 {
            for ((t, wn), g) in trial.iter_mut().zip(&w).zip(&grad) {
                *t = wn + g * (step / gn);
            }
            unit_clip(&mut trial);
            fix_gauge(&mut trial, c0);
            let v = objective(&p, &trial);
            if v > val {
                next = Some(v);
                break;
            }
            step *= 0.5;
        }
        let Some(v) = next else {
            converged = true;
            break;
        };
        let moved = w.iter().zip(&trial).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        std::mem::swap(&mut w, &mut trial);
        val = v;
        history.push(val * p.unit);
        if moved / step * gn * p.unit < cfg.grad_tol {
            converged = true;
            break;
        }
    }
    Ok(BaseSolution { weights: Beamformer::from_raw(w), objective: val * p.unit, history, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Direction;

    #[test]
    fn coincident_user_and_sensing() {
        let g = ArrayGeometry::ula(8).unwrap();
        let d = Direction::azimuth(0.2);
        let users = [UserLink::new(d, 1.0)];
        let t = SensingTarget::new(d, 1.0);
        let cfg = OptimizerConfig::default();
        let sol = solve_opt_base(&users, &t, &g, &cfg).unwrap();
        let c = Beamformer::conjugate(&g, d).unwrap();
        for (a, b) in sol.weights.weights().iter().zip(c.weights()) {
            assert!((a - b).norm() < 1e-6);
        }
        assert!((sol.objective - 2.0 * 64.0).abs() < 1e-6);
    }

    #[test]
    fn objective_history_non_decreasing() {
        let g = ArrayGeometry::ula(16).unwrap();
        let users = [
            UserLink::new(Direction::azimuth(0.5), 1.0),
            UserLink::new(Direction::azimuth(-0.5), 1.0),
        ];
        let t = SensingTarget::new(Direction::azimuth(0.0), 1.0);
        let sol = solve_opt_base(&users, &t, &g, &OptimizerConfig::default()).unwrap();
        assert!(sol.history.windows(2).all(|h| h[1] >= h[0]));
        assert!(sol.weights.weights().iter().all(|w| w.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn alpha_zero_ignores_sensing() {
        let g = ArrayGeometry::ula(8).unwrap();
        let users = [UserLink::new(Direction::azimuth(0.3), 1.0)];
        let t = SensingTarget::new(Direction::azimuth(-0.6), 1.0);
        let cfg = OptimizerConfig { alpha_tradeoff: 0.0, ..Default::default() };
        let sol = solve_opt_base(&users, &t, &g, &cfg).unwrap();
        assert!((sol.objective - 64.0).abs() < 1e-6, "{}", sol.objective);
    }

    #[test]
    fn no_users_is_an_error() {
        let g = ArrayGeometry::ula(4).unwrap();
        let t = SensingTarget::new(Direction::azimuth(0.0), 1.0);
        assert!(solve_opt_base(&[], &t, &g, &OptimizerConfig::default()).is_err());
    }
}
