//! Boltzmann echo of the coupled rotators and the one-particle Loschmidt
//! echo, for single initial states and averaged over seeded ensembles.
//!
//! For a measurement time `t` the joint state `ψ1 ⊗ φ2` is propagated `t`
//! forward periods and then `t` backward periods; the echo is the weight of
//! the reduced particle-1 state on `ψ1`. Forward legs are shared between
//! measurement times: the forward state is advanced once up to `max(times)`
//! and a backward leg is branched off at every measurement time, so one
//! realization costs `max(times) + Σ t_i` Floquet steps.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{EchoError, Result};
use crate::state_prep::{make_wavepacket, sample_rho2, sample_rng, Rho2Spec, WavepacketSpec};
use crate::torus::{
    apply_step, build_backward_step, build_forward_step, FloquetStep, JointState, ModelParams,
    SingleStep, WaveFunction1P,
};

const NORM_TOL: f64 = 1e-8;

/// Default ceiling on the Floquet steps of one run.
pub const DEFAULT_STEP_BUDGET: u64 = 50_000_000;

/// Every period up to 30, then every 5 periods up to `t_max`.
pub fn default_times(t_max: u32) -> Vec<u32> {
    let mut times: Vec<u32> = (0..=t_max.min(30)).collect();
    times.extend((35..=t_max).step_by(5));
    times
}

/// Floquet steps needed for one realization with checkpointed forward legs.
pub fn steps_per_realization(times: &[u32]) -> u64 {
    let t_max = times.iter().copied().max().unwrap_or(0) as u64;
    t_max + times.iter().map(|&t| t as u64).sum::<u64>()
}

fn validate_times(times: &[u32]) -> Result<()> {
    if times.is_empty() {
        return Err(EchoError::InvalidParam {
            name: "times",
            reason: "at least one measurement time is required".into(),
        });
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EchoError::InvalidParam {
            name: "times",
            reason: "measurement times must be strictly increasing".into(),
        });
    }
    Ok(())
}

fn check_normalized(psi: &WaveFunction1P) -> Result<()> {
    let norm_sqr = psi.norm_sqr();
    if (norm_sqr - 1.0).abs() > NORM_TOL {
        return Err(EchoError::NotNormalized {
            norm_sqr,
            tol: NORM_TOL,
        });
    }
    Ok(())
}

/// `Σ_j |Σ_m ψ1*(m) Ψ(m, j)|² = ⟨ψ1| Tr₂ |Ψ⟩⟨Ψ| |ψ1⟩`.
pub fn reduced_overlap(psi1: &WaveFunction1P, state: &JointState) -> f64 {
    let n = state.n();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    for (a, row) in psi1.amplitudes.iter().zip(state.amplitudes.chunks_exact(n)) {
        let a = a.conj();
        for (cj, z) in c.iter_mut().zip(row) {
            *cj += a * z;
        }
    }
    c.iter().map(|z| z.norm_sqr()).sum()
}

/// Forward and backward periods of one parameter set.
#[derive(Debug, Clone)]
pub struct EchoPropagator {
    pub forward: FloquetStep,
    pub backward: FloquetStep,
}

impl EchoPropagator {
    pub fn new(params: &ModelParams) -> Result<Self> {
        Ok(Self {
            forward: build_forward_step(params)?,
            backward: build_backward_step(params)?,
        })
    }

    /// Boltzmann echo of `ψ1 ⊗ φ2` at every time in `times` (strictly
    /// increasing).
    pub fn echo_at_times(
        &self,
        psi1: &WaveFunction1P,
        phi2: &WaveFunction1P,
        times: &[u32],
    ) -> Result<Vec<f64>> {
        validate_times(times)?;
        check_normalized(psi1)?;
        check_normalized(phi2)?;
        let mut forward = JointState::product(psi1, phi2)?;
        if forward.n() != self.forward.n() {
            return Err(EchoError::ContractViolation(format!(
                "states have N = {}, propagator has N = {}",
                forward.n(),
                self.forward.n()
            )));
        }
        let mut elapsed = 0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            if t == 0 {
                out.push(1.0);
                continue;
            }
            while elapsed < t {
                apply_step(&self.forward, &mut forward)?;
                elapsed += 1;
            }
            let mut state = forward.clone();
            for _ in 0..t {
                apply_step(&self.backward, &mut state)?;
            }
            out.push(reduced_overlap(psi1, &state));
        }
        Ok(out)
    }
}

/// `M_B(t)` for one pure-state realization `ψ1 ⊗ φ2`.
pub fn boltzmann_echo_single(
    params: &ModelParams,
    psi1: &WaveFunction1P,
    phi2: &WaveFunction1P,
    t: u32,
) -> Result<f64> {
    Ok(EchoPropagator::new(params)?.echo_at_times(psi1, phi2, &[t])?[0])
}

/// Ensemble echo measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoRunSpec {
    pub params: ModelParams,
    /// Width of the particle-1 packet and, when `random_centers` is off,
    /// its fixed centre.
    pub psi1: WavepacketSpec,
    /// Draw a uniform `(r0, p0)` per realization.
    pub random_centers: bool,
    pub rho2: Rho2Spec,
    pub times: Vec<u32>,
    pub realizations: usize,
    pub seed: u64,
    pub step_budget: u64,
}

impl EchoRunSpec {
    pub fn new(params: ModelParams, rho2: Rho2Spec, times: Vec<u32>, realizations: usize) -> Self {
        Self {
            params,
            psi1: WavepacketSpec::new(PI, 0.0),
            random_centers: true,
            rho2,
            times,
            realizations,
            seed: 0,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    /// Total Floquet steps of the run.
    pub fn step_cost(&self) -> u64 {
        self.realizations as u64 * steps_per_realization(&self.times)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        validate_times(&self.times)?;
        if self.realizations == 0 {
            return Err(EchoError::InvalidParam {
                name: "realizations",
                reason: "must be positive".into(),
            });
        }
        if self.rho2.sample_count == 0 {
            return Err(EchoError::InvalidParam {
                name: "rho2.sample_count",
                reason: "must be positive".into(),
            });
        }
        let estimated = self.step_cost();
        if estimated > self.step_budget {
            return Err(EchoError::StepBudgetExceeded {
                estimated,
                budget: self.step_budget,
            });
        }
        Ok(())
    }
}

/// Keeps packet centres independent of particle-2 samples sharing a seed.
const CENTER_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

/// Particle-1 wavepacket of realization `index`.
pub fn realization_psi1(
    base: &WavepacketSpec,
    random_centers: bool,
    n: usize,
    seed: u64,
    index: usize,
) -> Result<WaveFunction1P> {
    let spec = if random_centers {
        let mut rng = sample_rng(seed ^ CENTER_SEED_MIX, index as u64);
        WavepacketSpec {
            r0: rng.random_range(0.0..2.0 * PI),
            p0: rng.random_range(0.0..2.0 * PI),
            sigma_x: base.sigma_x,
        }
    } else {
        base.clone()
    };
    make_wavepacket(&spec, n)
}

/// Echo samples with per-time ensemble statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoCurve {
    pub times: Vec<u32>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub realizations: usize,
    pub params: ModelParams,
    /// `samples[r][i]` is realization `r` at `times[i]`.
    pub samples: Vec<Vec<f64>>,
}

impl EchoCurve {
    /// Reduces per-realization samples in realization order.
    pub fn from_samples(times: Vec<u32>, params: ModelParams, samples: Vec<Vec<f64>>) -> Self {
        let r = samples.len();
        let mut mean = vec![0.0; times.len()];
        let mut stderr = vec![0.0; times.len()];
        for i in 0..times.len() {
            let m = samples.iter().map(|s| s[i]).sum::<f64>() / r as f64;
            mean[i] = m;
            if r > 1 {
                let var = samples.iter().map(|s| (s[i] - m).powi(2)).sum::<f64>() / (r - 1) as f64;
                stderr[i] = (var / r as f64).sqrt();
            }
        }
        Self {
            times,
            mean,
            stderr,
            realizations: r,
            params,
            samples,
        }
    }

    /// Curve from given means, without per-realization samples.
    pub fn from_means(times: Vec<u32>, mean: Vec<f64>, stderr: Vec<f64>, params: ModelParams) -> Self {
        Self {
            times,
            mean,
            stderr,
            realizations: 1,
            params,
            samples: Vec::new(),
        }
    }
}

/// Ensemble-averaged Boltzmann echo. Realizations run on the current rayon
/// pool; the reduction order is fixed, so the result does not depend on the
/// number of workers.
pub fn boltzmann_echo_curve(spec: &EchoRunSpec) -> Result<EchoCurve> {
    spec.validate()?;
    let n = spec.params.n;
    let propagator = EchoPropagator::new(&spec.params)?;
    let samples = (0..spec.realizations)
        .into_par_iter()
        .map(|r| {
            let psi1 = realization_psi1(&spec.psi1, spec.random_centers, n, spec.seed, r)?;
            let phi2 = sample_rho2(&spec.rho2, n, r % spec.rho2.sample_count)?;
            propagator.echo_at_times(&psi1, &phi2, &spec.times)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EchoCurve::from_samples(
        spec.times.clone(),
        spec.params.clone(),
        samples,
    ))
}

/// `|⟨ψ| (U_{K+σ}†)^t U_K^t |ψ⟩|²` at every time in `times`.
pub fn loschmidt_echo_at_times(
    forward: &SingleStep,
    backward: &SingleStep,
    psi: &WaveFunction1P,
    times: &[u32],
) -> Result<Vec<f64>> {
    validate_times(times)?;
    check_normalized(psi)?;
    let mut fwd = psi.clone();
    let mut elapsed = 0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t == 0 {
            out.push(1.0);
            continue;
        }
        while elapsed < t {
            forward.apply(&mut fwd)?;
            elapsed += 1;
        }
        let mut state = fwd.clone();
        for _ in 0..t {
            backward.apply(&mut state)?;
        }
        out.push(psi.inner(&state)?.norm_sqr());
    }
    Ok(out)
}

/// Ensemble one-particle Loschmidt echo. Realization `r` uses the same
/// particle-1 packet as realization `r` of a Boltzmann run with equal
/// `(psi1, random_centers, seed)`.
#[allow(clippy::too_many_arguments)]
pub fn loschmidt_echo_curve(
    n: usize,
    k1: f64,
    sigma1: f64,
    psi1: &WavepacketSpec,
    random_centers: bool,
    times: &[u32],
    realizations: usize,
    seed: u64,
) -> Result<EchoCurve> {
    let mut params = ModelParams::new(n);
    params.k1 = k1;
    params.sigma1 = sigma1;
    params.validate()?;
    validate_times(times)?;
    if realizations == 0 {
        return Err(EchoError::InvalidParam {
            name: "realizations",
            reason: "must be positive".into(),
        });
    }
    let forward = SingleStep::forward(n, k1, params.period);
    let backward = SingleStep::backward(n, k1 + sigma1, params.period);
    let samples = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let psi = realization_psi1(psi1, random_centers, n, seed, r)?;
            loschmidt_echo_at_times(&forward, &backward, &psi, times)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EchoCurve::from_samples(times.to_vec(), params, samples))
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EchoError::InvalidParam {
            name: "workers",
            reason: e.to_string(),
        })?;
    Ok(pool.install(f))
}
