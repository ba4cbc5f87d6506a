//! Initial states: Gaussian wavepackets for the controlled particle and
//! seeded samples of the uncontrolled particle's state.
//!
//! Mixed states of particle 2 are realized as ensembles of pure states; the
//! echo is linear in the particle-2 density matrix, so averaging over the
//! samples reproduces the mixture.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{EchoError, Result};
use crate::torus::{hbar_eff, site_momentum, site_position, Basis, WaveFunction1P};

/// Gaussian wavepacket centred at `(r0, p0)` on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct WavepacketSpec {
    pub r0: f64,
    pub p0: f64,
    /// Position width; `None` means `sqrt(ħ_eff)`.
    pub sigma_x: Option<f64>,
}

impl WavepacketSpec {
    pub fn new(r0: f64, p0: f64) -> Self {
        Self {
            r0,
            p0,
            sigma_x: None,
        }
    }

    pub fn width(&self, n: usize) -> f64 {
        self.sigma_x.unwrap_or_else(|| hbar_eff(n).sqrt())
    }
}

/// `ψ(x) ∝ Σ_w exp[i p0 (x + 2πw - r0)/ħ - (x + 2πw - r0)²/(2σ²)]`, `|w| ≤ 1`.
pub fn make_wavepacket(spec: &WavepacketSpec, n: usize) -> Result<WaveFunction1P> {
    if n < 2 {
        return Err(EchoError::InvalidParam {
            name: "n",
            reason: format!("must be >= 2, got {n}"),
        });
    }
    let sigma = spec.width(n);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(EchoError::InvalidParam {
            name: "sigma_x",
            reason: format!("must be a positive finite width, got {sigma}"),
        });
    }
    if !spec.r0.is_finite() || !spec.p0.is_finite() {
        return Err(EchoError::InvalidParam {
            name: "r0/p0",
            reason: "wavepacket centre must be finite".into(),
        });
    }
    let hbar = hbar_eff(n);
    let amplitudes = (0..n)
        .map(|m| {
            let x = site_position(n, m);
            (-1..=1)
                .map(|w| {
                    let d = x + 2.0 * PI * w as f64 - spec.r0;
                    Complex64::from_polar((-d * d / (2.0 * sigma * sigma)).exp(), spec.p0 * d / hbar)
                })
                .sum()
        })
        .collect();
    let mut psi = WaveFunction1P::new(amplitudes, Basis::Position);
    if psi.norm_sqr() == 0.0 {
        return Err(EchoError::InvalidParam {
            name: "sigma_x",
            reason: "wavepacket underflows on the grid".into(),
        });
    }
    psi.normalize();
    Ok(psi)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rho2Kind {
    /// The same wavepacket for every sample.
    Wavepacket(WavepacketSpec),
    /// Normalized complex-Gaussian vectors.
    RandomPure,
    /// Position eigenstates `|m⟩` drawn with probability `|a_m|²`; random
    /// weights are drawn from the seed when none are given.
    RandomMixture { weights: Option<Vec<f64>> },
    /// Free-rotor momentum states drawn with probability `∝ exp(-β p²/2)`.
    Thermal { beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rho2Spec {
    pub kind: Rho2Kind,
    pub sample_count: usize,
    pub seed: u64,
}

/// Stream reserved for drawing the random mixture weights themselves.
const WEIGHT_STREAM: u64 = u64::MAX;

/// Generator for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Momentum of index `k` folded into `[-π, π)`.
fn centred_momentum(n: usize, k: usize) -> f64 {
    if k < n / 2 {
        site_momentum(n, k)
    } else {
        site_momentum(n, k) - 2.0 * PI
    }
}

fn mixture_weights(weights: &Option<Vec<f64>>, n: usize, seed: u64) -> Result<Vec<f64>> {
    match weights {
        Some(w) => {
            if w.len() != n {
                return Err(EchoError::InvalidParam {
                    name: "weights",
                    reason: format!("expected {n} mixture weights, got {}", w.len()),
                });
            }
            Ok(w.clone())
        }
        None => {
            let mut rng = sample_rng(seed, WEIGHT_STREAM);
            Ok((0..n)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    re * re + im * im
                })
                .collect())
        }
    }
}

/// Sample `index` of the particle-2 ensemble, a deterministic function of
/// `(spec.seed, index)`.
pub fn sample_rho2(spec: &Rho2Spec, n: usize, index: usize) -> Result<WaveFunction1P> {
    if index >= spec.sample_count {
        return Err(EchoError::InvalidParam {
            name: "index",
            reason: format!("{index} out of range for {} samples", spec.sample_count),
        });
    }
    let mut rng = sample_rng(spec.seed, index as u64);
    match &spec.kind {
        Rho2Kind::Wavepacket(wp) => make_wavepacket(wp, n),
        Rho2Kind::RandomPure => {
            let amplitudes = (0..n)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let mut psi = WaveFunction1P::new(amplitudes, Basis::Position);
            psi.normalize();
            Ok(psi)
        }
        Rho2Kind::RandomMixture { weights } => {
            let w = mixture_weights(weights, n, spec.seed)?;
            let dist = WeightedIndex::new(&w).map_err(|e| EchoError::InvalidParam {
                name: "weights",
                reason: e.to_string(),
            })?;
            Ok(WaveFunction1P::position_state(n, dist.sample(&mut rng)))
        }
        Rho2Kind::Thermal { beta } => {
            if beta.is_nan() || *beta < 0.0 {
                return Err(EchoError::InvalidParam {
                    name: "beta",
                    reason: format!("must be >= 0, got {beta}"),
                });
            }
            if beta.is_infinite() {
                return Ok(WaveFunction1P::momentum_state(n, 0));
            }
            let w: Vec<f64> = (0..n)
                .map(|k| {
                    let p = centred_momentum(n, k);
                    (-beta * p * p / 2.0).exp()
                })
                .collect();
            let dist = WeightedIndex::new(&w).map_err(|e| EchoError::InvalidParam {
                name: "beta",
                reason: e.to_string(),
            })?;
            Ok(WaveFunction1P::momentum_state(n, dist.sample(&mut rng)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Dft;
    use proptest::prelude::*;

    fn position_moments(psi: &WaveFunction1P, n: usize) -> (f64, f64) {
        let mean: f64 = psi
            .amplitudes
            .iter()
            .enumerate()
            .map(|(m, z)| z.norm_sqr() * site_position(n, m))
            .sum();
        let var: f64 = psi
            .amplitudes
            .iter()
            .enumerate()
            .map(|(m, z)| z.norm_sqr() * (site_position(n, m) - mean).powi(2))
            .sum();
        (mean, var)
    }

    #[test]
    fn centred_packet_is_symmetric() {
        let n = 64;
        let psi = make_wavepacket(&WavepacketSpec::new(PI, 0.0), n).unwrap();
        for d in 1..32 {
            let a = psi.amplitudes[32 + d].norm();
            let b = psi.amplitudes[32 - d].norm();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn packet_variance_matches_width() {
        let n = 256;
        let spec = WavepacketSpec::new(PI, 1.0);
        let psi = make_wavepacket(&spec, n).unwrap();
        let (mean, var) = position_moments(&psi, n);
        let sigma = spec.width(n);
        assert!((mean - PI).abs() < sigma);
        assert!((var / (sigma * sigma / 2.0) - 1.0).abs() < 0.2, "var = {var}");
    }

    #[test]
    fn packet_peaks_at_its_momentum() {
        let n = 128;
        let dft = Dft::new(n);
        for p0 in [0.0, 1.3, 2.0, 4.5] {
            let mut psi = make_wavepacket(&WavepacketSpec::new(2.0, p0), n).unwrap();
            psi.to_basis(Basis::Momentum, &dft);
            let argmax = psi
                .amplitudes
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap()
                .0;
            let expected = (p0 * n as f64 / (2.0 * PI)).round() as usize % n;
            assert_eq!(argmax, expected, "p0 = {p0}");
        }
    }

    #[test]
    fn rejects_non_positive_width() {
        let mut spec = WavepacketSpec::new(1.0, 1.0);
        spec.sigma_x = Some(0.0);
        assert!(make_wavepacket(&spec, 64).is_err());
        spec.sigma_x = Some(-1.0);
        assert!(make_wavepacket(&spec, 64).is_err());
    }

    #[test]
    fn thermal_ground_state_at_zero_temperature() {
        let spec = Rho2Spec {
            kind: Rho2Kind::Thermal { beta: f64::INFINITY },
            sample_count: 10,
            seed: 9,
        };
        let ground = WaveFunction1P::momentum_state(32, 0);
        for i in 0..10 {
            assert_eq!(sample_rho2(&spec, 32, i).unwrap(), ground);
        }
        let cold = Rho2Spec {
            kind: Rho2Kind::Thermal { beta: 1e6 },
            ..spec
        };
        assert_eq!(sample_rho2(&cold, 32, 3).unwrap(), ground);
    }

    #[test]
    fn degenerate_mixture_picks_first_state() {
        let mut weights = vec![0.0; 16];
        weights[0] = 1.0;
        let spec = Rho2Spec {
            kind: Rho2Kind::RandomMixture {
                weights: Some(weights),
            },
            sample_count: 50,
            seed: 1,
        };
        for i in 0..50 {
            assert_eq!(
                sample_rho2(&spec, 16, i).unwrap(),
                WaveFunction1P::position_state(16, 0)
            );
        }
    }

    #[test]
    fn random_pure_states_are_isotropic() {
        let n = 8;
        let samples = 10_000;
        let spec = Rho2Spec {
            kind: Rho2Kind::RandomPure,
            sample_count: samples,
            seed: 42,
        };
        let mut sum = vec![0.0; n];
        let mut sum_sq = vec![0.0; n];
        for i in 0..samples {
            let psi = sample_rho2(&spec, n, i).unwrap();
            for (m, z) in psi.amplitudes.iter().enumerate() {
                sum[m] += z.norm_sqr();
                sum_sq[m] += z.norm_sqr().powi(2);
            }
        }
        for m in 0..n {
            let mean = sum[m] / samples as f64;
            let var = sum_sq[m] / samples as f64 - mean * mean;
            let se = (var / samples as f64).sqrt();
            assert!((mean - 1.0 / n as f64).abs() < 3.0 * se, "site {m}: {mean}");
        }
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let spec = Rho2Spec {
            kind: Rho2Kind::RandomPure,
            sample_count: 2,
            seed: 0,
        };
        assert!(sample_rho2(&spec, 8, 2).is_err());
    }

    proptest! {
        #[test]
        fn wavepackets_are_normalized(r0 in 0.0..(2.0 * PI), p0 in 0.0..(2.0 * PI), log_n in 2u32..9) {
            let n = 1usize << log_n;
            let psi = make_wavepacket(&WavepacketSpec::new(r0, p0), n).unwrap();
            prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn samples_are_normalized_and_reproducible(seed in any::<u64>(), index in 0usize..100, kind in 0usize..3) {
            let kind = match kind {
                0 => Rho2Kind::RandomPure,
                1 => Rho2Kind::RandomMixture { weights: None },
                _ => Rho2Kind::Thermal { beta: 0.5 },
            };
            let spec = Rho2Spec { kind, sample_count: 100, seed };
            let a = sample_rho2(&spec, 32, index).unwrap();
            let b = sample_rho2(&spec, 32, index).unwrap();
            prop_assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
            prop_assert_eq!(a, b);
        }
    }
}
