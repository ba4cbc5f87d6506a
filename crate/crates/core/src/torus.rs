//! Kicked rotators quantized on the torus.
//!
//! Both position and momentum live on `N` sites: `x_m = 2πm/N`,
//! `p_n = 2πn/N`, with effective Planck constant `ħ = 2π/N`. One kick period
//! is exact: a position-diagonal kick phase followed by a momentum-diagonal
//! free phase. The two bases are related by the unitary discrete Fourier
//! transform `φ(n) = N^{-1/2} Σ_m ψ(m) exp(-2πi nm/N)`.
//!
//! Joint states are stored row-major with the particle-1 site as the row
//! index, i.e. amplitude `(m1, m2)` sits at `m1 * N + m2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{EchoError, Result};

/// Largest `N` for which [`dense_propagator`] will build the `N²×N²` matrix.
pub const DENSE_MAX_N: usize = 32;

/// Physical parameters of the coupled kicked rotators.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Hilbert dimension per particle.
    pub n: usize,
    pub k1: f64,
    pub k2: f64,
    /// Kick-strength imperfection of the reversed particle-1 dynamics.
    pub sigma1: f64,
    pub sigma2: f64,
    pub eps_f: f64,
    pub eps_b: f64,
    /// Offset in the coupling `ε sin(x1 - x2 - offset)`.
    pub phase_offset: f64,
    /// Kick period.
    pub period: f64,
}

impl ModelParams {
    /// Chaotic rotators at `K1 = K2 = 10.09`, unperturbed and uncoupled.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            k1: 10.09,
            k2: 10.09,
            sigma1: 0.0,
            sigma2: 0.0,
            eps_f: 0.0,
            eps_b: 0.0,
            phase_offset: 0.33,
            period: 1.0,
        }
    }

    /// Sets the same coupling on the forward and backward legs.
    pub fn with_coupling(mut self, eps: f64) -> Self {
        self.eps_f = eps;
        self.eps_b = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(EchoError::InvalidParam {
                name: "n",
                reason: format!("must be a power of two >= 2, got {}", self.n),
            });
        }
        let reals = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("eps_f", self.eps_f),
            ("eps_b", self.eps_b),
            ("phase_offset", self.phase_offset),
            ("period", self.period),
        ];
        for (name, v) in reals {
            if !v.is_finite() {
                return Err(EchoError::InvalidParam {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        for (name, v) in [("eps_f", self.eps_f), ("eps_b", self.eps_b)] {
            if v < 0.0 {
                return Err(EchoError::InvalidParam {
                    name,
                    reason: format!("must be >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn hbar_eff(&self) -> f64 {
        hbar_eff(self.n)
    }
}

pub fn hbar_eff(n: usize) -> f64 {
    2.0 * PI / n as f64
}

/// Position of site `m` on an `n`-site torus.
pub fn site_position(n: usize, m: usize) -> f64 {
    2.0 * PI * m as f64 / n as f64
}

/// Momentum `p_k = 2πk/N` of momentum index `k`.
pub fn site_momentum(n: usize, k: usize) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Position,
    Momentum,
}

/// Unitary DFT plans for one torus size.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("n", &self.n).finish()
    }
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized position → momentum transform of every length-`n` row.
    fn forward_rows_raw(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    fn inverse_rows_raw(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
    }

    /// Unitary position → momentum transform of every length-`n` row.
    pub fn forward_rows(&self, data: &mut [Complex64]) {
        self.forward.process(data);
        scale(data, 1.0 / (self.n as f64).sqrt());
    }

    /// Unitary momentum → position transform of every length-`n` row.
    pub fn inverse_rows(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        scale(data, 1.0 / (self.n as f64).sqrt());
    }
}

fn scale(data: &mut [Complex64], s: f64) {
    for z in data.iter_mut() {
        *z *= s;
    }
}

/// In-place transpose of a square row-major `n×n` grid.
fn transpose_square(data: &mut [Complex64], n: usize) {
    const BLOCK: usize = 32;
    for ib in (0..n).step_by(BLOCK) {
        for jb in (ib..n).step_by(BLOCK) {
            for i in ib..(ib + BLOCK).min(n) {
                let j0 = if ib == jb { i + 1 } else { jb };
                for j in j0..(jb + BLOCK).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// One-particle wavefunction on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction1P {
    pub amplitudes: Vec<Complex64>,
    pub basis: Basis,
}

impl WaveFunction1P {
    pub fn new(amplitudes: Vec<Complex64>, basis: Basis) -> Self {
        Self { amplitudes, basis }
    }

    /// Position eigenstate `|m⟩`.
    pub fn position_state(n: usize, m: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n];
        amplitudes[m] = Complex64::new(1.0, 0.0);
        Self::new(amplitudes, Basis::Position)
    }

    /// Momentum eigenstate `|p_k⟩` written in the position basis.
    pub fn momentum_state(n: usize, k: usize) -> Self {
        let norm = 1.0 / (n as f64).sqrt();
        let amplitudes = (0..n)
            .map(|m| {
                let phase = 2.0 * PI * ((k * m) % n) as f64 / n as f64;
                Complex64::from_polar(norm, phase)
            })
            .collect();
        Self::new(amplitudes, Basis::Position)
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Rescales to unit norm; a zero vector is left untouched.
    pub fn normalize(&mut self) {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            scale(&mut self.amplitudes, 1.0 / norm);
        }
    }

    /// `⟨self|other⟩`; both must be in the same basis.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.basis != other.basis || self.len() != other.len() {
            return Err(EchoError::ContractViolation(
                "inner product of states in different bases or sizes".into(),
            ));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn to_basis(&mut self, basis: Basis, dft: &Dft) {
        match (self.basis, basis) {
            (Basis::Position, Basis::Momentum) => dft.forward_rows(&mut self.amplitudes),
            (Basis::Momentum, Basis::Position) => dft.inverse_rows(&mut self.amplitudes),
            _ => {}
        }
        self.basis = basis;
    }
}

/// Two-particle wavefunction on the `N×N` torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    n: usize,
    pub amplitudes: Vec<Complex64>,
    /// Basis of the particle-1 and particle-2 axes.
    pub basis: [Basis; 2],
}

impl JointState {
    /// `ψ1 ⊗ φ2`, both given in the position basis.
    pub fn product(psi1: &WaveFunction1P, phi2: &WaveFunction1P) -> Result<Self> {
        if psi1.basis != Basis::Position || phi2.basis != Basis::Position {
            return Err(EchoError::ContractViolation(
                "product states are built from position-basis factors".into(),
            ));
        }
        let n = psi1.len();
        if phi2.len() != n {
            return Err(EchoError::ContractViolation(format!(
                "factor sizes differ: {} vs {}",
                n,
                phi2.len()
            )));
        }
        let mut amplitudes = Vec::with_capacity(n * n);
        for a in &psi1.amplitudes {
            amplitudes.extend(phi2.amplitudes.iter().map(|b| a * b));
        }
        Ok(Self {
            n,
            amplitudes,
            basis: [Basis::Position; 2],
        })
    }

    pub fn from_grid(n: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != n * n {
            return Err(EchoError::ContractViolation(format!(
                "grid has {} amplitudes, expected {}",
                amplitudes.len(),
                n * n
            )));
        }
        Ok(Self {
            n,
            amplitudes,
            basis: [Basis::Position; 2],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn to_basis(&mut self, basis: [Basis; 2], dft: &Dft) {
        let n = self.n;
        if self.basis[1] != basis[1] {
            match basis[1] {
                Basis::Momentum => dft.forward_rows(&mut self.amplitudes),
                Basis::Position => dft.inverse_rows(&mut self.amplitudes),
            }
        }
        if self.basis[0] != basis[0] {
            transpose_square(&mut self.amplitudes, n);
            match basis[0] {
                Basis::Momentum => dft.forward_rows(&mut self.amplitudes),
                Basis::Position => dft.inverse_rows(&mut self.amplitudes),
            }
            transpose_square(&mut self.amplitudes, n);
        }
        self.basis = basis;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Precomputed phase tables of one kick period.
///
/// Forward periods apply the kick and then the free rotation; backward
/// periods apply the free rotation first, so that a backward period built
/// with `σ1 = 0` undoes a forward period exactly on particle 1.
#[derive(Debug, Clone)]
pub struct FloquetStep {
    pub direction: Direction,
    n: usize,
    /// Joint position-diagonal kick, row-major in `(m1, m2)`.
    pub kick_phase: Vec<Complex64>,
    pub free_phase_1: Vec<Complex64>,
    pub free_phase_2: Vec<Complex64>,
    dft: Dft,
}

fn kick_table(n: usize, strength: f64, hbar: f64) -> Vec<Complex64> {
    (0..n)
        .map(|m| Complex64::from_polar(1.0, -strength * site_position(n, m).cos() / hbar))
        .collect()
}

fn free_table(n: usize, period: f64, hbar: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let p = site_momentum(n, k);
            Complex64::from_polar(1.0, -p * p * period / (2.0 * hbar))
        })
        .collect()
}

fn coupled_kick(
    p: &ModelParams,
    kick1: &[Complex64],
    kick2: &[Complex64],
    eps: f64,
) -> Vec<Complex64> {
    let n = p.n;
    let hbar = p.hbar_eff();
    let mut grid = Vec::with_capacity(n * n);
    for (m1, k1) in kick1.iter().enumerate() {
        let x1 = site_position(n, m1);
        grid.extend(kick2.iter().enumerate().map(|(m2, k2)| {
            let x2 = site_position(n, m2);
            let coupling = -eps * (x1 - x2 - p.phase_offset).sin() / hbar;
            k1 * k2 * Complex64::from_polar(1.0, coupling)
        }));
    }
    grid
}

/// One forward period of `H1 ⊗ I + I ⊗ H2 + U_f`.
pub fn build_forward_step(p: &ModelParams) -> Result<FloquetStep> {
    p.validate()?;
    let hbar = p.hbar_eff();
    let kick1 = kick_table(p.n, p.k1, hbar);
    let kick2 = kick_table(p.n, p.k2, hbar);
    let free = free_table(p.n, p.period, hbar);
    Ok(FloquetStep {
        direction: Direction::Forward,
        n: p.n,
        kick_phase: coupled_kick(p, &kick1, &kick2, p.eps_f),
        free_phase_1: free.clone(),
        free_phase_2: free,
        dft: Dft::new(p.n),
    })
}

/// One period of the partially reversed dynamics
/// `-(H1 + Σ1) ⊗ I + I ⊗ (H2 + Σ2) + U_b`.
pub fn build_backward_step(p: &ModelParams) -> Result<FloquetStep> {
    p.validate()?;
    let hbar = p.hbar_eff();
    let kick1: Vec<_> = kick_table(p.n, p.k1 + p.sigma1, hbar)
        .into_iter()
        .map(|z| z.conj())
        .collect();
    let kick2 = kick_table(p.n, p.k2 + p.sigma2, hbar);
    let free = free_table(p.n, p.period, hbar);
    Ok(FloquetStep {
        direction: Direction::Backward,
        n: p.n,
        kick_phase: coupled_kick(p, &kick1, &kick2, p.eps_b),
        free_phase_1: free.iter().map(|z| z.conj()).collect(),
        free_phase_2: free,
        dft: Dft::new(p.n),
    })
}

impl FloquetStep {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    fn apply_kick(&self, amplitudes: &mut [Complex64]) {
        for (z, k) in amplitudes.iter_mut().zip(&self.kick_phase) {
            *z *= k;
        }
    }

    /// Momentum-diagonal free rotation of both particles, starting and
    /// ending in the position basis.
    fn apply_free(&self, amplitudes: &mut [Complex64]) {
        let n = self.n;
        let norm = 1.0 / n as f64;
        // Particle 2 runs along rows.
        self.dft.forward_rows_raw(amplitudes);
        for row in amplitudes.chunks_exact_mut(n) {
            for (z, f) in row.iter_mut().zip(&self.free_phase_2) {
                *z *= f * norm;
            }
        }
        self.dft.inverse_rows_raw(amplitudes);

        // After transposing, particle 1 runs along rows.
        transpose_square(amplitudes, n);
        self.dft.forward_rows_raw(amplitudes);
        for row in amplitudes.chunks_exact_mut(n) {
            for (z, f) in row.iter_mut().zip(&self.free_phase_1) {
                *z *= f * norm;
            }
        }
        self.dft.inverse_rows_raw(amplitudes);
        transpose_square(amplitudes, n);
    }
}

/// Advances `psi` by one period of `step`.
pub fn apply_step(step: &FloquetStep, psi: &mut JointState) -> Result<()> {
    if psi.basis != [Basis::Position; 2] {
        return Err(EchoError::ContractViolation(format!(
            "apply_step needs a position-basis state, got {:?}",
            psi.basis
        )));
    }
    if psi.n != step.n {
        return Err(EchoError::ContractViolation(format!(
            "state has N = {}, step has N = {}",
            psi.n, step.n
        )));
    }
    match step.direction {
        Direction::Forward => {
            step.apply_kick(&mut psi.amplitudes);
            step.apply_free(&mut psi.amplitudes);
        }
        Direction::Backward => {
            step.apply_free(&mut psi.amplitudes);
            step.apply_kick(&mut psi.amplitudes);
        }
    }
    Ok(())
}

/// One period of a single kicked rotator.
#[derive(Debug, Clone)]
pub struct SingleStep {
    pub direction: Direction,
    pub kick_phase: Vec<Complex64>,
    pub free_phase: Vec<Complex64>,
    dft: Dft,
}

impl SingleStep {
    /// Forward period of `p²/2 + K cos x Σδ(t - nT)`.
    pub fn forward(n: usize, k: f64, period: f64) -> Self {
        let hbar = hbar_eff(n);
        Self {
            direction: Direction::Forward,
            kick_phase: kick_table(n, k, hbar),
            free_phase: free_table(n, period, hbar),
            dft: Dft::new(n),
        }
    }

    /// Inverse of the forward period at kick strength `k`.
    pub fn backward(n: usize, k: f64, period: f64) -> Self {
        let hbar = hbar_eff(n);
        Self {
            direction: Direction::Backward,
            kick_phase: kick_table(n, k, hbar).iter().map(|z| z.conj()).collect(),
            free_phase: free_table(n, period, hbar)
                .iter()
                .map(|z| z.conj())
                .collect(),
            dft: Dft::new(n),
        }
    }

    pub fn apply(&self, psi: &mut WaveFunction1P) -> Result<()> {
        if psi.basis != Basis::Position || psi.len() != self.kick_phase.len() {
            return Err(EchoError::ContractViolation(
                "single-particle step needs a position-basis state of matching size".into(),
            ));
        }
        let kick = |a: &mut [Complex64]| {
            for (z, k) in a.iter_mut().zip(&self.kick_phase) {
                *z *= k;
            }
        };
        let free = |a: &mut [Complex64]| {
            self.dft.forward_rows(a);
            for (z, f) in a.iter_mut().zip(&self.free_phase) {
                *z *= f;
            }
            self.dft.inverse_rows(a);
        };
        match self.direction {
            Direction::Forward => {
                kick(&mut psi.amplitudes);
                free(&mut psi.amplitudes);
            }
            Direction::Backward => {
                free(&mut psi.amplitudes);
                kick(&mut psi.amplitudes);
            }
        }
        Ok(())
    }
}

/// Dense unitary DFT matrix, rows indexed by momentum.
pub fn dft_matrix(n: usize) -> DMatrix<Complex64> {
    let norm = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |k, m| {
        Complex64::from_polar(norm, -2.0 * PI * ((k * m) % n) as f64 / n as f64)
    })
}

/// Explicit `N²×N²` matrix of one period, for verification at small `N`.
pub fn dense_propagator(step: &FloquetStep) -> Result<DMatrix<Complex64>> {
    let n = step.n;
    if n > DENSE_MAX_N {
        return Err(EchoError::DenseTooLarge {
            n,
            limit: DENSE_MAX_N,
        });
    }
    let w = dft_matrix(n);
    let w2 = w.kronecker(&w);
    let w2_adj = w2.adjoint();
    let free = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n * n,
        step.free_phase_1
            .iter()
            .flat_map(|a| step.free_phase_2.iter().map(move |b| a * b)),
    ));
    let kick = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&step.kick_phase));
    let free_position = &w2_adj * free * &w2;
    Ok(match step.direction {
        Direction::Forward => free_position * kick,
        Direction::Backward => kick * free_position,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_joint(n: usize, rng: &mut ChaCha8Rng) -> JointState {
        let mut amps: Vec<Complex64> = (0..n * n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|z| *z /= norm);
        JointState::from_grid(n, amps).unwrap()
    }

    fn random_params(n: usize, rng: &mut ChaCha8Rng) -> ModelParams {
        ModelParams {
            n,
            k1: rng.random_range(0.0..12.0),
            k2: rng.random_range(0.0..12.0),
            sigma1: rng.random_range(-0.5..0.5),
            sigma2: rng.random_range(-0.5..0.5),
            eps_f: rng.random_range(0.0..0.5),
            eps_b: rng.random_range(0.0..0.5),
            phase_offset: 0.33,
            period: 1.0,
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(12).validate().is_err());
        assert!(ModelParams::new(1).validate().is_err());
        let mut p = ModelParams::new(8);
        p.eps_b = -0.1;
        assert!(p.validate().is_err());
        p.eps_b = 0.0;
        p.k1 = f64::NAN;
        assert!(p.validate().is_err());
        assert_eq!(ModelParams::new(1024).hbar_eff(), 2.0 * PI / 1024.0);
    }

    #[test]
    fn zero_kick_has_unit_phases() {
        let mut p = ModelParams::new(16);
        p.k1 = 0.0;
        p.k2 = 0.0;
        let step = build_forward_step(&p).unwrap();
        for z in &step.kick_phase {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn uncoupled_kick_is_rank_one() {
        let p = ModelParams::new(16);
        let step = build_forward_step(&p).unwrap();
        let n = p.n;
        let g = &step.kick_phase;
        // rank 1 <=> every 2x2 minor vanishes
        for i in 0..n {
            for j in 0..n {
                let minor = g[i * n + j] * g[0] - g[i * n] * g[j];
                assert!(minor.norm() < 1e-12, "minor ({i},{j}) = {minor}");
            }
        }
        let coupled = build_forward_step(&p.clone().with_coupling(0.2)).unwrap();
        let g = &coupled.kick_phase;
        let minor = g[n + 1] * g[0] - g[n] * g[1];
        assert!(minor.norm() > 1e-3);
    }

    #[test]
    fn kick_entry_matches_direct_evaluation() {
        let mut p = ModelParams::new(8);
        p.k2 = 7.2;
        let step = build_forward_step(&p).unwrap();
        let hbar = 2.0 * PI / 8.0;
        for m2 in 0..8 {
            let x2 = 2.0 * PI * m2 as f64 / 8.0;
            let phase = -(10.09 * 0.0f64.cos() + 7.2 * x2.cos()) / hbar;
            let expected = Complex64::new(phase.cos(), phase.sin());
            assert!((step.kick_phase[m2] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn phases_have_unit_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(16, &mut rng);
        for step in [build_forward_step(&p).unwrap(), build_backward_step(&p).unwrap()] {
            for z in step
                .kick_phase
                .iter()
                .chain(&step.free_phase_1)
                .chain(&step.free_phase_2)
            {
                assert!((z.norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_step_leaves_state_unchanged() {
        let n = 16;
        let mut step = build_forward_step(&ModelParams::new(n)).unwrap();
        let one = Complex64::new(1.0, 0.0);
        step.kick_phase.iter_mut().for_each(|z| *z = one);
        step.free_phase_1.iter_mut().for_each(|z| *z = one);
        step.free_phase_2.iter_mut().for_each(|z| *z = one);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi0 = random_joint(n, &mut rng);
        let mut psi = psi0.clone();
        apply_step(&step, &mut psi).unwrap();
        for (a, b) in psi.amplitudes.iter().zip(&psi0.amplitudes) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn norm_preserved_over_many_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(16, &mut rng);
        let fwd = build_forward_step(&p).unwrap();
        let bwd = build_backward_step(&p).unwrap();
        let mut psi = random_joint(16, &mut rng);
        for i in 0..1000 {
            let step = if i % 3 == 0 { &bwd } else { &fwd };
            apply_step(step, &mut psi).unwrap();
            assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_basis_state_is_rejected() {
        let n = 8;
        let step = build_forward_step(&ModelParams::new(n)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut psi = random_joint(n, &mut rng);
        psi.to_basis([Basis::Position, Basis::Momentum], step.dft());
        assert!(matches!(
            apply_step(&step, &mut psi),
            Err(EchoError::ContractViolation(_))
        ));
    }

    #[test]
    fn split_step_matches_dense_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [4, 8] {
            for _ in 0..20 {
                let p = random_params(n, &mut rng);
                for step in [build_forward_step(&p).unwrap(), build_backward_step(&p).unwrap()] {
                    let u = dense_propagator(&step).unwrap();
                    let psi0 = random_joint(n, &mut rng);
                    let v = nalgebra::DVector::from_column_slice(&psi0.amplitudes);
                    let expected = &u * v;
                    let mut psi = psi0.clone();
                    apply_step(&step, &mut psi).unwrap();
                    for (a, b) in psi.amplitudes.iter().zip(expected.iter()) {
                        assert!((a - b).norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn dense_propagator_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_params(8, &mut rng);
        for step in [build_forward_step(&p).unwrap(), build_backward_step(&p).unwrap()] {
            let u = dense_propagator(&step).unwrap();
            let prod = u.adjoint() * &u;
            let id = DMatrix::<Complex64>::identity(64, 64);
            assert!((prod - id).iter().all(|z| z.norm() < 1e-10));
        }
    }

    #[test]
    fn dense_propagator_without_kicks_is_momentum_diagonal() {
        let mut p = ModelParams::new(4);
        p.k1 = 0.0;
        p.k2 = 0.0;
        let step = build_forward_step(&p).unwrap();
        let u = dense_propagator(&step).unwrap();
        let w = dft_matrix(4).kronecker(&dft_matrix(4));
        let in_momentum = &w * u * w.adjoint();
        for i in 0..16 {
            for j in 0..16 {
                let z = in_momentum[(i, j)];
                if i == j {
                    let expected = step.free_phase_1[i / 4] * step.free_phase_2[i % 4];
                    assert!((z - expected).norm() < 1e-12);
                } else {
                    assert!(z.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dense_refuses_large_n() {
        let step = build_forward_step(&ModelParams::new(64)).unwrap();
        assert_eq!(
            dense_propagator(&step).unwrap_err(),
            EchoError::DenseTooLarge { n: 64, limit: 32 }
        );
    }

    #[test]
    fn dense_backward_inverts_forward_on_particle_one() {
        let mut p = ModelParams::new(8);
        p.k2 = 7.2;
        p.sigma2 = 0.3;
        let uf = dense_propagator(&build_forward_step(&p).unwrap()).unwrap();
        let ub = dense_propagator(&build_backward_step(&p).unwrap()).unwrap();
        let prod = ub * uf;
        // The product acts as I ⊗ V for some particle-2 unitary V.
        let mut v = DMatrix::<Complex64>::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                v[(i, j)] = prod[(i, j)];
            }
        }
        let expected = DMatrix::<Complex64>::identity(8, 8).kronecker(&v);
        assert!((prod - expected).iter().all(|z| z.norm() < 1e-10));
        assert!((v.adjoint() * &v - DMatrix::identity(8, 8))
            .iter()
            .all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn basis_round_trip() {
        let n = 32;
        let dft = Dft::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let psi0 = random_joint(n, &mut rng);
        let mut psi = psi0.clone();
        psi.to_basis([Basis::Momentum; 2], &dft);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-13);
        psi.to_basis([Basis::Position; 2], &dft);
        for (a, b) in psi.amplitudes.iter().zip(&psi0.amplitudes) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn momentum_state_transforms_to_index() {
        let n = 16;
        let dft = Dft::new(n);
        let mut psi = WaveFunction1P::momentum_state(n, 5);
        psi.to_basis(Basis::Momentum, &dft);
        for (k, z) in psi.amplitudes.iter().enumerate() {
            let expected = if k == 5 { 1.0 } else { 0.0 };
            assert!((z.norm() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_handles_partial_blocks() {
        let n = 64;
        let mut data: Vec<Complex64> = (0..n * n).map(|i| Complex64::new(i as f64, 0.0)).collect();
        transpose_square(&mut data, n);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(data[i * n + j].re, (j * n + i) as f64);
            }
        }
    }

    #[test]
    fn single_step_round_trip_without_perturbation() {
        let n = 32;
        let fwd = SingleStep::forward(n, 10.09, 1.0);
        let bwd = SingleStep::backward(n, 10.09, 1.0);
        let psi0 = WaveFunction1P::position_state(n, 3);
        let mut psi = psi0.clone();
        for _ in 0..20 {
            fwd.apply(&mut psi).unwrap();
        }
        for _ in 0..20 {
            bwd.apply(&mut psi).unwrap();
        }
        assert!((psi.inner(&psi0).unwrap().norm_sqr() - 1.0).abs() < 1e-10);
    }
}
