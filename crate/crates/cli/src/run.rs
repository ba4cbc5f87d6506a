//! Experiment dispatch, output files and cost estimates.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use echo_core::analysis::{
    fit_exponential, fit_gaussian, jackknife_error, scaling_regression, DecayFit, WindowPolicy,
};
use echo_core::classical::{gamma_coupling, gamma_sigma1, lyapunov_exponent, standard_map_step};
use echo_core::echo::{
    boltzmann_echo_curve, loschmidt_echo_curve, steps_per_realization, with_workers, EchoCurve,
    EchoRunSpec,
};
use echo_core::torus::{apply_step, build_forward_step, hbar_eff, JointState, ModelParams, WaveFunction1P};
use echo_core::EchoError;

use crate::config::{fmt_f, parse_config, ConfigError, ExperimentConfig, ExperimentKind, FitChoice};

/// Exact header of every curve file.
pub const CSV_HEADER: &str = "t,mean,stderr,realizations";

/// Grid size `fig1_repro` strengths refer to; other sizes rescale them so
/// that strength / ħ_eff is unchanged.
pub const FIG1_REFERENCE_N: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("step budget exceeded: run needs {estimated} Floquet steps, budget is {budget}")]
    Budget { estimated: u64, budget: u64 },
    #[error(transparent)]
    Core(#[from] EchoError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Core(EchoError::InvalidParam { .. }) => 2,
            Self::Budget { .. } | Self::Core(EchoError::StepBudgetExceeded { .. }) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub full: bool,
}

impl RunOptions {
    pub fn worker_count(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text).map_err(|source| RunError::Config {
        path: path.display().to_string(),
        source,
    })
}

/// Applies command-line overrides.
pub fn resolve(mut config: ExperimentConfig, opts: &RunOptions) -> ExperimentConfig {
    if opts.full && config.experiment == ExperimentKind::Fig1Repro {
        config.n = FIG1_REFERENCE_N;
    }
    if let Some(out) = &opts.output {
        config.output = out.clone();
    }
    config
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    Boltzmann,
    Loschmidt,
}

/// One echo curve of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveJob {
    pub label: String,
    pub kind: CurveKind,
    pub params: ModelParams,
}

/// Echo curves an experiment computes, in output order.
pub fn plan(c: &ExperimentConfig) -> Vec<CurveJob> {
    let base = c.params();
    let job = |label: String, kind, params| CurveJob {
        label,
        kind,
        params,
    };
    match c.experiment {
        ExperimentKind::EchoCurve => vec![job("base".into(), CurveKind::Boltzmann, base)],
        ExperimentKind::LoschmidtCurve => vec![job("base".into(), CurveKind::Loschmidt, base)],
        ExperimentKind::SigmaSweep => c
            .sweep
            .iter()
            .map(|&s| {
                let mut p = base.clone();
                p.sigma1 = s;
                job(format!("sigma1 = {}", fmt_f(s)), CurveKind::Boltzmann, p)
            })
            .collect(),
        ExperimentKind::EpsSweep => c
            .sweep
            .iter()
            .map(|&e| job(format!("eps = {}", fmt_f(e)), CurveKind::Boltzmann, base.clone().with_coupling(e)))
            .collect(),
        ExperimentKind::K2Independence => {
            let mut jobs: Vec<CurveJob> = c
                .k2_values
                .iter()
                .map(|&k2| {
                    let mut p = base.clone();
                    p.k2 = k2;
                    job(format!("k2 = {}, sigma2 = {}", fmt_f(k2), fmt_f(p.sigma2)), CurveKind::Boltzmann, p)
                })
                .collect();
            for &s2 in &c.sigma2_values {
                let mut p = base.clone();
                p.sigma2 = s2;
                if !jobs.iter().any(|j| j.params == p) {
                    jobs.push(job(format!("k2 = {}, sigma2 = {}", fmt_f(p.k2), fmt_f(s2)), CurveKind::Boltzmann, p));
                }
            }
            jobs
        }
        ExperimentKind::Fig1Repro => {
            let scale = FIG1_REFERENCE_N as f64 / c.n as f64;
            c.sweep
                .iter()
                .map(|&e| {
                    let mut p = base.clone().with_coupling(e * scale);
                    p.sigma1 = c.sigma1 * scale;
                    job(format!("eps = {} (N = {} units)", fmt_f(e), FIG1_REFERENCE_N), CurveKind::Boltzmann, p)
                })
                .collect()
        }
        ExperimentKind::Lyapunov | ExperimentKind::GammaEstimate => Vec::new(),
    }
}

/// Floquet steps of all echo curves.
pub fn quantum_steps(c: &ExperimentConfig) -> u64 {
    plan(c).len() as u64 * c.realizations as u64 * steps_per_realization(&c.times)
}

/// Standard-map iterations of the classical estimators.
pub fn classical_steps(c: &ExperimentConfig) -> u64 {
    let t = c.trajectories as u64;
    let corr_len = (c.max_lag + echo_core::classical::CORRELATOR_ORIGINS) as u64;
    match c.experiment {
        ExperimentKind::Lyapunov => t * c.steps as u64,
        // coupling runs two maps per trajectory
        ExperimentKind::GammaEstimate | ExperimentKind::Fig1Repro => 3 * t * corr_len,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimate {
    pub curves: usize,
    pub quantum_steps: u64,
    pub classical_steps: u64,
    /// One N×N complex state.
    pub state_bytes: u64,
    /// Checkpoint plus working state.
    pub peak_bytes_per_worker: u64,
    pub seconds_per_step: f64,
    pub seconds_per_map_step: f64,
    pub parallel_workers: usize,
    pub wall_seconds: f64,
}

/// Relative cost of one Floquet step at grid size `n`.
pub fn step_work(n: usize) -> f64 {
    let n = n as f64;
    n * n * n.log2()
}

/// Times Floquet steps at `min(n, 256)` and scales by `N² log N`.
pub fn benchmark_step(n: usize) -> Result<f64, EchoError> {
    let nb = n.clamp(2, 256);
    let step = build_forward_step(&ModelParams::new(nb).with_coupling(0.001))?;
    let psi = WaveFunction1P::position_state(nb, 0);
    let mut joint = JointState::product(&psi, &psi)?;
    apply_step(&step, &mut joint)?;
    let start = Instant::now();
    let mut reps = 0u32;
    while reps < 3 || (start.elapsed().as_secs_f64() < 0.05 && reps < 1000) {
        apply_step(&step, &mut joint)?;
        reps += 1;
    }
    let per = start.elapsed().as_secs_f64() / reps as f64;
    Ok(per * step_work(n) / step_work(nb))
}

fn benchmark_map() -> f64 {
    let reps = 200_000;
    let start = Instant::now();
    let (mut x, mut p) = (0.3, 0.7);
    for _ in 0..reps {
        (x, p) = standard_map_step(x, p, 10.09);
    }
    std::hint::black_box((x, p));
    start.elapsed().as_secs_f64() / reps as f64
}

pub fn estimate(c: &ExperimentConfig, workers: usize) -> Result<CostEstimate, EchoError> {
    let curves = plan(c).len();
    let quantum = quantum_steps(c);
    let classical = classical_steps(c);
    let state_bytes = (c.n * c.n * 16) as u64;
    let seconds_per_step = if quantum > 0 { benchmark_step(c.n)? } else { 0.0 };
    let seconds_per_map_step = if classical > 0 { benchmark_map() } else { 0.0 };
    let parallel = workers.min(c.realizations.max(1)).max(1);
    let wall = (quantum as f64 * seconds_per_step + classical as f64 * seconds_per_map_step) / parallel as f64;
    Ok(CostEstimate {
        curves,
        quantum_steps: quantum,
        classical_steps: classical,
        state_bytes: if curves > 0 { state_bytes } else { 0 },
        peak_bytes_per_worker: if curves > 0 { 2 * state_bytes } else { 0 },
        seconds_per_step,
        seconds_per_map_step,
        parallel_workers: parallel,
        wall_seconds: wall,
    })
}

pub fn format_estimate(c: &ExperimentConfig, e: &CostEstimate) -> String {
    let mib = |b: u64| b as f64 / (1024.0 * 1024.0);
    let mut s = String::new();
    let _ = writeln!(s, "experiment = {}", c.experiment.name());
    let _ = writeln!(s, "n = {}", c.n);
    let _ = writeln!(s, "curves = {}", e.curves);
    let _ = writeln!(s, "realizations = {}", c.realizations);
    let _ = writeln!(s, "floquet_steps = {}", e.quantum_steps);
    let _ = writeln!(s, "step_budget = {}", c.step_budget);
    let _ = writeln!(s, "classical_map_steps = {}", e.classical_steps);
    let _ = writeln!(s, "state_memory_per_worker = {:.2} MiB", mib(e.state_bytes));
    let _ = writeln!(s, "peak_memory_per_worker = {:.2} MiB", mib(e.peak_bytes_per_worker));
    let _ = writeln!(s, "seconds_per_step = {:.3e}", e.seconds_per_step);
    let _ = writeln!(s, "workers = {}", e.parallel_workers);
    let _ = writeln!(s, "estimated_wall_time = {:.1} s", e.wall_seconds);
    s
}

/// What a run wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub output: PathBuf,
    pub files: Vec<PathBuf>,
    pub curves: Vec<(CurveJob, EchoCurve)>,
    pub summary: String,
}

/// Runs an already resolved config with `workers` threads.
pub fn run(c: &ExperimentConfig, workers: usize) -> Result<RunReport, RunError> {
    let estimated = quantum_steps(c);
    if estimated > c.step_budget {
        return Err(RunError::Budget {
            estimated,
            budget: c.step_budget,
        });
    }
    let jobs = plan(c);
    if !jobs.is_empty() && c.realizations == 0 {
        return Err(EchoError::InvalidParam {
            name: "realizations",
            reason: "must be positive".into(),
        }
        .into());
    }
    let (curves, summary) = with_workers(workers, || execute(c, &jobs))??;

    let out = c.output.clone();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let mut files = Vec::new();
    let single = curves.len() == 1;
    for (i, (_, curve)) in curves.iter().enumerate() {
        let name = if single { "curve.csv".to_string() } else { format!("curve_{i}.csv") };
        files.push(write_file(&out, &name, &curve_csv(curve))?);
    }
    files.push(write_file(&out, "fit.txt", &summary)?);
    files.push(write_file(&out, "meta.txt", &meta_text(c, workers))?);
    Ok(RunReport {
        output: out,
        files,
        curves,
        summary,
    })
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf, RunError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

/// Curve as CSV with 17 significant digits.
pub fn curve_csv(curve: &EchoCurve) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for i in 0..curve.times.len() {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{}",
            curve.times[i], curve.mean[i], curve.stderr[i], curve.realizations
        );
    }
    s
}

pub fn meta_text(c: &ExperimentConfig, workers: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# becho {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# hbar_eff = {}", fmt_f(hbar_eff(c.n)));
    let _ = writeln!(s, "# floquet_steps = {}", quantum_steps(c));
    let _ = writeln!(s, "# workers = {workers}");
    s.push_str(&c.render());
    s
}

type Executed = (Vec<(CurveJob, EchoCurve)>, String);

fn execute(c: &ExperimentConfig, jobs: &[CurveJob]) -> Result<Executed, RunError> {
    let mut curves = Vec::with_capacity(jobs.len());
    for job in jobs {
        let curve = match job.kind {
            CurveKind::Boltzmann => {
                let mut spec = EchoRunSpec::new(job.params.clone(), c.rho2_spec(), c.times.clone(), c.realizations);
                spec.psi1 = c.psi1();
                spec.random_centers = c.random_centers;
                spec.seed = c.seed;
                spec.step_budget = u64::MAX;
                boltzmann_echo_curve(&spec)?
            }
            CurveKind::Loschmidt => loschmidt_echo_curve(
                c.n,
                job.params.k1,
                job.params.sigma1,
                &c.psi1(),
                c.random_centers,
                &c.times,
                c.realizations,
                c.seed,
            )?,
        };
        curves.push((job.clone(), curve));
    }
    let summary = match c.experiment {
        ExperimentKind::Lyapunov => lyapunov_summary(c),
        ExperimentKind::GammaEstimate => gamma_summary(c),
        _ => curve_summary(c, &curves),
    };
    Ok((curves, summary))
}

fn policy(c: &ExperimentConfig) -> WindowPolicy {
    match c.fit_window {
        Some((t_lo, t_hi)) => WindowPolicy::Explicit { t_lo, t_hi },
        None => WindowPolicy::Default,
    }
}

fn write_fit(s: &mut String, curve: &EchoCurve, fit: Result<DecayFit, EchoError>) -> Option<DecayFit> {
    match fit {
        Ok(f) => {
            let (name, coef) = match f.model {
                echo_core::analysis::DecayModel::Exponential => ("exponential", "rate"),
                echo_core::analysis::DecayModel::Gaussian => ("gaussian", "quad_coeff"),
            };
            let _ = writeln!(s, "model = {name}");
            let _ = writeln!(s, "{coef} = {:.6e}", f.coefficient);
            let _ = writeln!(s, "{coef}_err = {:.3e}", f.coefficient_err);
            if let Ok(jk) = jackknife_error(curve, &f) {
                let _ = writeln!(s, "jackknife_err = {jk:.3e}");
            }
            let _ = writeln!(s, "prefactor = {:.6e}", f.prefactor);
            let _ = writeln!(s, "window = {}..{}", f.fit_window.0, f.fit_window.1);
            let _ = writeln!(s, "points = {}", f.n_points);
            let _ = writeln!(s, "residual_rms = {:.4e}", f.residual_rms);
            Some(f)
        }
        Err(e) => {
            let _ = writeln!(s, "fit failed: {e}");
            None
        }
    }
}

fn curve_summary(c: &ExperimentConfig, curves: &[(CurveJob, EchoCurve)]) -> String {
    let mut s = String::new();
    let mut rates: Vec<Option<(f64, f64)>> = Vec::new();
    let single = curves.len() == 1;
    for (i, (job, curve)) in curves.iter().enumerate() {
        let file = if single { "curve.csv".to_string() } else { format!("curve_{i}.csv") };
        let _ = writeln!(s, "[{file}] {}", job.label);
        let mut exp_fit = None;
        if matches!(c.fit, FitChoice::Exponential | FitChoice::Both) {
            exp_fit = write_fit(&mut s, curve, fit_exponential(curve, policy(c)));
        }
        if matches!(c.fit, FitChoice::Gaussian | FitChoice::Both) {
            write_fit(&mut s, curve, fit_gaussian(curve, policy(c)));
        }
        rates.push(exp_fit.map(|f| {
            let err = jackknife_error(curve, &f).unwrap_or(f.coefficient_err);
            (f.coefficient, err)
        }));
        s.push('\n');
    }
    match c.experiment {
        ExperimentKind::SigmaSweep | ExperimentKind::EpsSweep => {
            let points: Vec<(f64, f64)> = c
                .sweep
                .iter()
                .zip(&rates)
                .filter_map(|(&x, r)| r.map(|(g, _)| (x, g)))
                .collect();
            match scaling_regression(&points) {
                Ok(f) => {
                    let _ = writeln!(s, "scaling_exponent = {:.4} +- {:.4}", f.exponent, f.exponent_err);
                    let _ = writeln!(s, "scaling_coefficient = {:.6e}", f.coefficient);
                }
                Err(e) => {
                    let _ = writeln!(s, "scaling fit failed: {e}");
                }
            }
        }
        ExperimentKind::K2Independence => {
            let mut worst: f64 = 0.0;
            for (i, a) in rates.iter().enumerate() {
                for b in &rates[i + 1..] {
                    if let (Some((ga, ea)), Some((gb, eb))) = (a, b) {
                        worst = worst.max((ga - gb).abs() / (ea * ea + eb * eb).sqrt());
                    }
                }
            }
            let _ = writeln!(s, "max_pairwise_deviation = {worst:.3} combined standard errors");
        }
        ExperimentKind::Fig1Repro => {
            let scale = FIG1_REFERENCE_N as f64 / c.n as f64;
            let _ = writeln!(s, "strength_scale = {}", fmt_f(scale));
            let h = hbar_eff(c.n);
            let sig = gamma_sigma1(c.sigma1 * scale, c.k1, h, c.trajectories, c.max_lag, c.seed);
            for (job, r) in curves.iter().zip(&rates) {
                let p = &job.0.params;
                let u = |e: f64| gamma_coupling(e, p.k1, p.k2, p.phase_offset, h, c.trajectories, c.max_lag, c.seed).gamma;
                let predicted = sig.gamma + u(p.eps_f) + u(p.eps_b);
                let fitted = r.map_or("n/a".to_string(), |(g, _)| format!("{g:.4e}"));
                let _ = writeln!(s, "{}: fitted {fitted}, golden rule {predicted:.4e}", job.0.label);
            }
            let fitted: Vec<f64> = rates.iter().flatten().map(|r| r.0).collect();
            let ordered = fitted.len() == rates.len() && fitted.windows(2).all(|w| w[0] < w[1]);
            let _ = writeln!(s, "decay_ordered_by_eps = {ordered}");
        }
        _ => {}
    }
    s
}

fn lyapunov_summary(c: &ExperimentConfig) -> String {
    let l = lyapunov_exponent(c.k1, c.trajectories, c.steps, c.seed);
    let mut s = String::new();
    let _ = writeln!(s, "lambda = {:.6}", l.lambda);
    let _ = writeln!(s, "lambda_err = {:.3e}", l.error);
    let _ = writeln!(s, "ln_half_k = {:.6}", (c.k1 / 2.0).ln());
    let _ = writeln!(s, "trajectories = {}", l.n_trajectories);
    let _ = writeln!(s, "steps = {}", c.steps);
    let _ = writeln!(s, "transient_discard = {}", l.transient_discard);
    s
}

fn gamma_summary(c: &ExperimentConfig) -> String {
    let h = hbar_eff(c.n);
    let sig = gamma_sigma1(c.sigma1, c.k1, h, c.trajectories, c.max_lag, c.seed);
    let unit = |eps| gamma_coupling(eps, c.k1, c.k2, c.phase_offset, h, c.trajectories, c.max_lag, c.seed);
    let fwd = unit(c.eps_f);
    let bwd = unit(c.eps_b);
    let mut s = String::new();
    let _ = writeln!(s, "hbar_eff = {}", fmt_f(h));
    let _ = writeln!(s, "gamma_sigma1 = {:.6e}", sig.gamma);
    let _ = writeln!(s, "gamma_sigma1_coefficient = {:.6e}", sig.correlator_sum / (h * h));
    let _ = writeln!(s, "gamma_coupling_forward = {:.6e}", fwd.gamma);
    let _ = writeln!(s, "gamma_coupling_backward = {:.6e}", bwd.gamma);
    let _ = writeln!(s, "gamma_coupling_coefficient = {:.6e}", fwd.correlator_sum / (h * h));
    let _ = writeln!(s, "gamma_total = {:.6e}", sig.gamma + fwd.gamma + bwd.gamma);
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>().join(", ");
    let _ = writeln!(s, "sigma1_correlator = {}", list(&sig.correlator));
    let _ = writeln!(s, "coupling_correlator = {}", list(&fwd.correlator));
    let _ = writeln!(s, "truncation_lag = {}", c.max_lag);
    let _ = writeln!(s, "trajectories = {}", c.trajectories);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> ExperimentConfig {
        parse_config(text).unwrap()
    }

    #[test]
    fn plan_shapes() {
        assert_eq!(plan(&config("experiment = echo_curve\n")).len(), 1);
        assert_eq!(plan(&config("experiment = lyapunov\n")).len(), 0);
        let k2 = plan(&config("experiment = k2_independence\n"));
        // K2 = 10.09, σ2 = 0 appears in both lists and runs once
        assert_eq!(k2.len(), 4);
        let sweep = plan(&config("experiment = eps_sweep\nsweep = 0.1, 0.2\n"));
        assert_eq!(sweep[1].params.eps_f, 0.2);
        assert_eq!(sweep[1].params.eps_b, 0.2);
    }

    #[test]
    fn fig1_strengths_keep_ratio_to_hbar() {
        let c = config("experiment = fig1_repro\n");
        let jobs = plan(&c);
        assert_eq!(jobs.len(), 3);
        let p = &jobs[2].params;
        assert!((p.eps_f / p.hbar_eff() - 0.0037 / hbar_eff(1024)).abs() < 1e-12);
        assert!((p.sigma1 / p.hbar_eff() - 0.0018 / hbar_eff(1024)).abs() < 1e-12);
        let full = resolve(c, &RunOptions { full: true, ..Default::default() });
        assert_eq!(full.n, 1024);
        assert_eq!(plan(&full)[2].params.eps_f, 0.0037);
    }

    #[test]
    fn zero_realizations_cost_nothing() {
        let c = config("experiment = echo_curve\nrealizations = 0\n");
        assert_eq!(quantum_steps(&c), 0);
        let e = estimate(&c, 4).unwrap();
        assert_eq!(e.quantum_steps, 0);
        assert_eq!(e.wall_seconds, 0.0);
    }

    #[test]
    fn memory_is_one_complex_grid() {
        let c = config("experiment = fig1_repro\nn = 1024\nt_max = 100\n");
        let e = estimate(&c, 1).unwrap();
        assert_eq!(e.state_bytes, 16 * 1024 * 1024);
    }

    #[test]
    fn step_work_ratio() {
        let r = step_work(256) / step_work(1024);
        assert!((r - (256.0f64.powi(2) * 8.0) / (1024.0f64.powi(2) * 10.0)).abs() < 1e-15);
    }

    #[test]
    fn csv_digits() {
        let curve = EchoCurve::from_means(vec![0, 1], vec![1.0, 0.1], vec![0.0, 1.0 / 3.0], ModelParams::new(8));
        let text = curve_csv(&curve);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("0,1.0000000000000000e0,0.0000000000000000e0,1"));
        let last = lines.next().unwrap();
        let stderr: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(stderr, 1.0 / 3.0);
    }

    #[test]
    fn exit_codes() {
        let budget = RunError::Budget { estimated: 2, budget: 1 };
        assert_eq!(budget.exit_code(), 3);
        let cfg = RunError::Config {
            path: "x".into(),
            source: ConfigError { line: 1, message: "m".into() },
        };
        assert_eq!(cfg.exit_code(), 2);
    }
}
