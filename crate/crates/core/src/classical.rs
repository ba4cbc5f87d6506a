//! Classical standard map: trajectories, Lyapunov exponents and the
//! action-correlator estimates of golden-rule decay rates.
//!
//! The perturbation `σ cos x` and the coupling `ε sin(x1 - x2 - φ)` are
//! kicked, so the action they add per period is `strength · f(x)` and the
//! quantum phase is that over `ħ`. The rate per period is therefore
//! `(strength/ħ)² Σ_m C(m)` with `C` the lag-`m` autocorrelation of `f`
//! along trajectories sampled from the uniform (invariant) measure.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use crate::state_prep::sample_rng;

const TWO_PI: f64 = 2.0 * PI;

/// Lag-`m` products are averaged over this many time origins per trajectory.
pub const CORRELATOR_ORIGINS: usize = 64;

/// Default correlator truncation lag.
pub const DEFAULT_MAX_LAG: usize = 10;

/// One period: kick `p' = p + K sin x`, then drift `x' = x + p'`, both mod 2π.
pub fn standard_map_step(x: f64, p: f64, k: f64) -> (f64, f64) {
    let p_next = (p + k * x.sin()).rem_euclid(TWO_PI);
    let x_next = (x + p_next).rem_euclid(TWO_PI);
    (x_next, p_next)
}

/// Jacobian of [`standard_map_step`] at `x`, row-major `[[∂x'/∂x, ∂x'/∂p], [∂p'/∂x, ∂p'/∂p]]`.
pub fn tangent_map(x: f64, k: f64) -> [[f64; 2]; 2] {
    let c = k * x.cos();
    [[1.0 + c, 1.0], [c, 1.0]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalTrajectory {
    pub k: f64,
    /// `(x, p)` at every step, starting with the initial condition.
    pub points: Vec<(f64, f64)>,
}

impl ClassicalTrajectory {
    pub fn generate(x0: f64, p0: f64, k: f64, steps: usize) -> Self {
        let mut points = Vec::with_capacity(steps + 1);
        let (mut x, mut p) = (x0.rem_euclid(TWO_PI), p0.rem_euclid(TWO_PI));
        points.push((x, p));
        for _ in 0..steps {
            (x, p) = standard_map_step(x, p, k);
            points.push((x, p));
        }
        Self { k, points }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    pub lambda: f64,
    /// Standard error over trajectories.
    pub error: f64,
    pub n_trajectories: usize,
    pub transient_discard: usize,
}

/// Largest Lyapunov exponent of the standard map from tangent-vector growth,
/// averaged over `n_traj` uniformly drawn initial conditions.
pub fn lyapunov_exponent(k: f64, n_traj: usize, t_steps: usize, seed: u64) -> LyapunovEstimate {
    let transient = (t_steps / 10).min(100);
    let per_traj: Vec<f64> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let mut x = rng.random_range(0.0..TWO_PI);
            let mut p = rng.random_range(0.0..TWO_PI);
            for _ in 0..transient {
                (x, p) = standard_map_step(x, p, k);
            }
            let (mut dx, mut dp) = (1.0f64, 0.0f64);
            let mut log_growth = 0.0;
            for _ in 0..t_steps {
                let j = tangent_map(x, k);
                let ndx = j[0][0] * dx + j[0][1] * dp;
                let ndp = j[1][0] * dx + j[1][1] * dp;
                let norm = ndx.hypot(ndp);
                log_growth += norm.ln();
                dx = ndx / norm;
                dp = ndp / norm;
                (x, p) = standard_map_step(x, p, k);
            }
            log_growth / t_steps.max(1) as f64
        })
        .collect();
    let (lambda, error) = mean_and_stderr(&per_traj);
    LyapunovEstimate {
        lambda,
        error,
        n_trajectories: n_traj,
        transient_discard: transient,
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    /// Decay rate per kick period.
    pub gamma: f64,
    /// `Σ_{m=-L}^{L} C(m)`.
    pub correlator_sum: f64,
    /// `C(0), C(1), ..., C(L)`.
    pub correlator: Vec<f64>,
    pub prefactor: f64,
    pub n_trajectories: usize,
    pub truncation_lag: usize,
}

/// Autocorrelation `C(m) = ⟨f_0 f_m⟩`, `m = 0..=max_lag`, of an observable
/// sampled along trajectories. `observable(rng)` returns the series
/// `f_0, f_1, ...` of one trajectory with `max_lag + CORRELATOR_ORIGINS`
/// entries.
fn autocorrelation<F>(n_traj: usize, max_lag: usize, seed: u64, series: F) -> Vec<f64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, usize) -> Vec<f64> + Sync,
{
    let len = max_lag + CORRELATOR_ORIGINS;
    let per_traj: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let f = series(&mut rng, len);
            (0..=max_lag)
                .map(|m| {
                    (0..CORRELATOR_ORIGINS).map(|s| f[s] * f[s + m]).sum::<f64>()
                        / CORRELATOR_ORIGINS as f64
                })
                .collect()
        })
        .collect();
    let mut c = vec![0.0; max_lag + 1];
    for row in &per_traj {
        for (acc, v) in c.iter_mut().zip(row) {
            *acc += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= n_traj.max(1) as f64);
    c
}

fn rate_from_correlator(
    strength: f64,
    hbar_eff: f64,
    correlator: Vec<f64>,
    n_traj: usize,
    max_lag: usize,
) -> RateEstimate {
    let correlator_sum = correlator[0] + 2.0 * correlator[1..].iter().sum::<f64>();
    let prefactor = (strength / hbar_eff).powi(2);
    RateEstimate {
        gamma: prefactor * correlator_sum,
        correlator_sum,
        correlator,
        prefactor,
        n_trajectories: n_traj,
        truncation_lag: max_lag,
    }
}

fn orbit_x(rng: &mut rand_chacha::ChaCha8Rng, k: f64, len: usize) -> Vec<f64> {
    let mut x = rng.random_range(0.0..TWO_PI);
    let mut p = rng.random_range(0.0..TWO_PI);
    (0..len)
        .map(|_| {
            let cur = x;
            (x, p) = standard_map_step(x, p, k);
            cur
        })
        .collect()
}

/// Golden-rule rate of the kick imperfection `σ1 cos x` at kick strength `K1`.
pub fn gamma_sigma1(
    sigma1: f64,
    k1: f64,
    hbar_eff: f64,
    n_traj: usize,
    max_lag: usize,
    seed: u64,
) -> RateEstimate {
    let c = autocorrelation(n_traj, max_lag, seed, |rng, len| {
        orbit_x(rng, k1, len).into_iter().map(f64::cos).collect()
    });
    rate_from_correlator(sigma1, hbar_eff, c, n_traj, max_lag)
}

/// Golden-rule rate of the coupling `ε sin(x1 - x2 - φ)` along independent
/// trajectories of the two rotators.
#[allow(clippy::too_many_arguments)]
pub fn gamma_coupling(
    eps: f64,
    k1: f64,
    k2: f64,
    phase_offset: f64,
    hbar_eff: f64,
    n_traj: usize,
    max_lag: usize,
    seed: u64,
) -> RateEstimate {
    let d = autocorrelation(n_traj, max_lag, seed, |rng, len| {
        let x1 = orbit_x(rng, k1, len);
        let x2 = orbit_x(rng, k2, len);
        x1.iter()
            .zip(&x2)
            .map(|(a, b)| (a - b - phase_offset).sin())
            .collect()
    });
    rate_from_correlator(eps, hbar_eff, d, n_traj, max_lag)
}
