//! Plain-text `key = value` experiment configs.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use echo_core::echo::{default_times, DEFAULT_STEP_BUDGET};
use echo_core::state_prep::{Rho2Kind, Rho2Spec, WavepacketSpec};
use echo_core::torus::ModelParams;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    EchoCurve,
    LoschmidtCurve,
    SigmaSweep,
    EpsSweep,
    K2Independence,
    Lyapunov,
    GammaEstimate,
    Fig1Repro,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::EchoCurve,
        Self::LoschmidtCurve,
        Self::SigmaSweep,
        Self::EpsSweep,
        Self::K2Independence,
        Self::Lyapunov,
        Self::GammaEstimate,
        Self::Fig1Repro,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::EchoCurve => "echo_curve",
            Self::LoschmidtCurve => "loschmidt_curve",
            Self::SigmaSweep => "sigma_sweep",
            Self::EpsSweep => "eps_sweep",
            Self::K2Independence => "k2_independence",
            Self::Lyapunov => "lyapunov",
            Self::GammaEstimate => "gamma_estimate",
            Self::Fig1Repro => "fig1_repro",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitChoice {
    Exponential,
    Gaussian,
    Both,
}

impl FitChoice {
    fn name(self) -> &'static str {
        match self {
            Self::Exponential => "exponential",
            Self::Gaussian => "gaussian",
            Self::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rho2Choice {
    Wavepacket,
    RandomPure,
    RandomMixture,
    Thermal,
}

impl Rho2Choice {
    fn name(self) -> &'static str {
        match self {
            Self::Wavepacket => "wavepacket",
            Self::RandomPure => "random_pure",
            Self::RandomMixture => "random_mixture",
            Self::Thermal => "thermal",
        }
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub k1: f64,
    pub k2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub eps_f: f64,
    pub eps_b: f64,
    pub phase_offset: f64,
    pub period: f64,
    pub r0: f64,
    pub p0: f64,
    pub sigma_x: Option<f64>,
    pub random_centers: bool,
    pub rho2: Rho2Choice,
    pub rho2_samples: usize,
    pub rho2_r0: f64,
    pub rho2_p0: f64,
    pub beta: f64,
    pub times: Vec<u32>,
    pub realizations: usize,
    pub seed: u64,
    pub step_budget: u64,
    pub fit: FitChoice,
    pub fit_window: Option<(u32, u32)>,
    /// Strengths for sweeps and `fig1_repro` couplings.
    pub sweep: Vec<f64>,
    pub k2_values: Vec<f64>,
    pub sigma2_values: Vec<f64>,
    pub trajectories: usize,
    pub steps: usize,
    pub max_lag: usize,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let fig1 = experiment == ExperimentKind::Fig1Repro;
        Self {
            experiment,
            n: if fig1 { 256 } else { 64 },
            k1: 10.09,
            k2: 10.09,
            sigma1: if fig1 { 0.0018 } else { 0.0 },
            sigma2: 0.0,
            eps_f: 0.0,
            eps_b: 0.0,
            phase_offset: 0.33,
            period: 1.0,
            r0: std::f64::consts::PI,
            p0: 0.0,
            sigma_x: None,
            random_centers: true,
            rho2: Rho2Choice::RandomPure,
            rho2_samples: 1000,
            rho2_r0: std::f64::consts::PI,
            rho2_p0: 0.0,
            beta: 1.0,
            times: default_times(if fig1 { 60 } else { 50 }),
            realizations: if fig1 { 50 } else { 10 },
            seed: 0,
            step_budget: DEFAULT_STEP_BUDGET,
            fit: FitChoice::Both,
            fit_window: None,
            sweep: if fig1 {
                vec![0.0, 0.0018, 0.0037]
            } else {
                Vec::new()
            },
            k2_values: vec![7.2, 10.09, 13.4],
            sigma2_values: vec![0.0, 0.1],
            trajectories: 1000,
            steps: 10_000,
            max_lag: echo_core::classical::DEFAULT_MAX_LAG,
            output: PathBuf::from("out"),
        }
    }

    pub fn params(&self) -> ModelParams {
        let mut p = ModelParams::new(self.n);
        p.k1 = self.k1;
        p.k2 = self.k2;
        p.sigma1 = self.sigma1;
        p.sigma2 = self.sigma2;
        p.eps_f = self.eps_f;
        p.eps_b = self.eps_b;
        p.phase_offset = self.phase_offset;
        p.period = self.period;
        p
    }

    pub fn psi1(&self) -> WavepacketSpec {
        WavepacketSpec {
            r0: self.r0,
            p0: self.p0,
            sigma_x: self.sigma_x,
        }
    }

    pub fn rho2_spec(&self) -> Rho2Spec {
        let kind = match self.rho2 {
            Rho2Choice::Wavepacket => Rho2Kind::Wavepacket(WavepacketSpec {
                r0: self.rho2_r0,
                p0: self.rho2_p0,
                sigma_x: self.sigma_x,
            }),
            Rho2Choice::RandomPure => Rho2Kind::RandomPure,
            Rho2Choice::RandomMixture => Rho2Kind::RandomMixture { weights: None },
            Rho2Choice::Thermal => Rho2Kind::Thermal { beta: self.beta },
        };
        Rho2Spec {
            kind,
            sample_count: self.rho2_samples,
            seed: self.seed,
        }
    }

    /// Canonical text form; parsing it gives back `self`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("experiment", self.experiment.name().into());
        kv("n", self.n.to_string());
        kv("k1", fmt_f(self.k1));
        kv("k2", fmt_f(self.k2));
        kv("sigma1", fmt_f(self.sigma1));
        kv("sigma2", fmt_f(self.sigma2));
        kv("eps_f", fmt_f(self.eps_f));
        kv("eps_b", fmt_f(self.eps_b));
        kv("phase_offset", fmt_f(self.phase_offset));
        kv("period", fmt_f(self.period));
        kv("r0", fmt_f(self.r0));
        kv("p0", fmt_f(self.p0));
        if let Some(w) = self.sigma_x {
            kv("sigma_x", fmt_f(w));
        }
        kv("random_centers", self.random_centers.to_string());
        kv("rho2", self.rho2.name().into());
        kv("rho2_samples", self.rho2_samples.to_string());
        kv("rho2_r0", fmt_f(self.rho2_r0));
        kv("rho2_p0", fmt_f(self.rho2_p0));
        kv("beta", fmt_f(self.beta));
        kv("times", fmt_list(&self.times, |t| t.to_string()));
        kv("realizations", self.realizations.to_string());
        kv("seed", self.seed.to_string());
        kv("step_budget", self.step_budget.to_string());
        kv("fit", self.fit.name().into());
        if let Some((lo, hi)) = self.fit_window {
            kv("fit_window", format!("{lo}..{hi}"));
        }
        for (key, list) in [
            ("sweep", &self.sweep),
            ("k2_values", &self.k2_values),
            ("sigma2_values", &self.sigma2_values),
        ] {
            if !list.is_empty() {
                kv(key, fmt_list(list, |v| fmt_f(*v)));
            }
        }
        kv("trajectories", self.trajectories.to_string());
        kv("steps", self.steps.to_string());
        kv("max_lag", self.max_lag.to_string());
        kv("output", self.output.display().to_string());
        s
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_list<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

const KEYS: &[&str] = &[
    "experiment",
    "n",
    "k1",
    "k2",
    "k",
    "sigma1",
    "sigma2",
    "eps",
    "eps_f",
    "eps_b",
    "phase_offset",
    "period",
    "r0",
    "p0",
    "sigma_x",
    "random_centers",
    "rho2",
    "rho2_samples",
    "rho2_r0",
    "rho2_p0",
    "beta",
    "times",
    "t_max",
    "realizations",
    "seed",
    "step_budget",
    "fit",
    "fit_window",
    "sweep",
    "k2_values",
    "sigma2_values",
    "trajectories",
    "steps",
    "max_lag",
    "output",
];

/// Parses a config. `experiment` is required; every other key has a default.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(err(line, format!("unknown key `{key}`")));
        }
        if !seen.insert(key.clone()) {
            return Err(err(line, format!("duplicate key `{key}`")));
        }
        if value.is_empty() {
            return Err(err(line, format!("empty value for `{key}`")));
        }
        entries.push((line, key, value));
    }

    let kind = entries
        .iter()
        .find(|(_, k, _)| k == "experiment")
        .ok_or_else(|| err(0, "missing required key `experiment`"))?;
    let experiment = ExperimentKind::parse(&kind.2).ok_or_else(|| {
        let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        err(
            kind.0,
            format!("unknown experiment `{}` (expected one of {})", kind.2, names.join(", ")),
        )
    })?;

    let mut c = ExperimentConfig::defaults(experiment);
    let line_of = |key: &str| entries.iter().find(|(_, k, _)| k == key).map(|e| e.0);
    for (a, b) in [("eps", "eps_f"), ("eps", "eps_b"), ("times", "t_max"), ("k", "k1"), ("k", "k2")] {
        if let (Some(_), Some(l)) = (line_of(a), line_of(b)) {
            return Err(err(l, format!("`{a}` and `{b}` are mutually exclusive")));
        }
    }

    for (line, key, value) in &entries {
        let line = *line;
        let v = value.as_str();
        match key.as_str() {
            "experiment" => {}
            "n" => c.n = parse_num(line, key, v)?,
            "k" => {
                c.k1 = parse_f(line, key, v)?;
                c.k2 = c.k1;
            }
            "k1" => c.k1 = parse_f(line, key, v)?,
            "k2" => c.k2 = parse_f(line, key, v)?,
            "sigma1" => c.sigma1 = parse_f(line, key, v)?,
            "sigma2" => c.sigma2 = parse_f(line, key, v)?,
            "eps" => {
                c.eps_f = parse_f(line, key, v)?;
                c.eps_b = c.eps_f;
            }
            "eps_f" => c.eps_f = parse_f(line, key, v)?,
            "eps_b" => c.eps_b = parse_f(line, key, v)?,
            "phase_offset" => c.phase_offset = parse_f(line, key, v)?,
            "period" => c.period = parse_f(line, key, v)?,
            "r0" => c.r0 = parse_f(line, key, v)?,
            "p0" => c.p0 = parse_f(line, key, v)?,
            "sigma_x" => c.sigma_x = Some(parse_f(line, key, v)?),
            "random_centers" => c.random_centers = parse_bool(line, key, v)?,
            "rho2" => {
                c.rho2 = match v {
                    "wavepacket" => Rho2Choice::Wavepacket,
                    "random_pure" => Rho2Choice::RandomPure,
                    "random_mixture" => Rho2Choice::RandomMixture,
                    "thermal" => Rho2Choice::Thermal,
                    _ => {
                        return Err(err(
                            line,
                            format!(
                                "unknown rho2 `{v}` (expected wavepacket, random_pure, random_mixture or thermal)"
                            ),
                        ))
                    }
                }
            }
            "rho2_samples" => c.rho2_samples = parse_num(line, key, v)?,
            "rho2_r0" => c.rho2_r0 = parse_f(line, key, v)?,
            "rho2_p0" => c.rho2_p0 = parse_f(line, key, v)?,
            "beta" => c.beta = parse_f(line, key, v)?,
            "times" => c.times = parse_times(line, v)?,
            "t_max" => c.times = default_times(parse_num(line, key, v)?),
            "realizations" => c.realizations = parse_num(line, key, v)?,
            "seed" => c.seed = parse_num(line, key, v)?,
            "step_budget" => c.step_budget = parse_num(line, key, v)?,
            "fit" => {
                c.fit = match v {
                    "exponential" => FitChoice::Exponential,
                    "gaussian" => FitChoice::Gaussian,
                    "both" => FitChoice::Both,
                    _ => {
                        return Err(err(
                            line,
                            format!("unknown fit `{v}` (expected exponential, gaussian or both)"),
                        ))
                    }
                }
            }
            "fit_window" => {
                let (lo, hi) = v
                    .split_once("..")
                    .ok_or_else(|| err(line, "fit_window must look like `lo..hi`"))?;
                let lo = parse_num(line, key, lo.trim())?;
                let hi = parse_num(line, key, hi.trim())?;
                if lo >= hi {
                    return Err(err(line, "fit_window needs lo < hi"));
                }
                c.fit_window = Some((lo, hi));
            }
            "sweep" => c.sweep = parse_f_list(line, key, v)?,
            "k2_values" => c.k2_values = parse_f_list(line, key, v)?,
            "sigma2_values" => c.sigma2_values = parse_f_list(line, key, v)?,
            "trajectories" => c.trajectories = parse_num(line, key, v)?,
            "steps" => c.steps = parse_num(line, key, v)?,
            "max_lag" => c.max_lag = parse_num(line, key, v)?,
            "output" => c.output = PathBuf::from(v),
            _ => unreachable!("key list and match arms disagree on `{key}`"),
        }
    }
    check(&c, &line_of)?;
    Ok(c)
}

fn check(c: &ExperimentConfig, line_of: &dyn Fn(&str) -> Option<usize>) -> Result<(), ConfigError> {
    let at = |key: &str| line_of(key).unwrap_or(0);
    if let Err(e) = c.params().validate() {
        let key = match &e {
            echo_core::EchoError::InvalidParam { name, .. } => *name,
            _ => "n",
        };
        return Err(err(at(key), e.to_string()));
    }
    if c.times.is_empty() {
        return Err(err(at("times"), "times must not be empty"));
    }
    if c.rho2_samples == 0 {
        return Err(err(at("rho2_samples"), "rho2_samples must be positive"));
    }
    if matches!(c.sigma_x, Some(w) if !(w > 0.0 && w.is_finite())) {
        return Err(err(at("sigma_x"), "sigma_x must be positive"));
    }
    let needs_sweep = matches!(c.experiment, ExperimentKind::SigmaSweep | ExperimentKind::EpsSweep);
    if needs_sweep && c.sweep.is_empty() {
        return Err(err(at("experiment"), "sweep experiments need a `sweep` list"));
    }
    if c.experiment == ExperimentKind::K2Independence && c.k2_values.is_empty() && c.sigma2_values.is_empty() {
        return Err(err(at("k2_values"), "k2_values and sigma2_values are both empty"));
    }
    for (key, list) in [("sweep", &c.sweep), ("k2_values", &c.k2_values), ("sigma2_values", &c.sigma2_values)] {
        if list.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(err(at(key), format!("{key} entries must be finite and non-negative")));
        }
    }
    Ok(())
}

fn parse_f(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v
        .parse()
        .map_err(|_| err(line, format!("`{key}`: expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(err(line, format!("`{key}` must be finite")));
    }
    Ok(x)
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(line, format!("`{key}`: expected a non-negative integer, got `{v}`")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn parse_f_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|x| parse_f(line, key, x.trim())).collect()
}

/// `0..30, 35..100:5, 200`: inclusive ranges with optional step, or single
/// times. The result must be strictly increasing.
pub fn parse_times(line: usize, v: &str) -> Result<Vec<u32>, ConfigError> {
    let mut out: Vec<u32> = Vec::new();
    for part in v.split(',').map(str::trim) {
        if let Some((lo, rest)) = part.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((hi, step)) => (hi, parse_num::<u32>(line, "times", step.trim())?),
                None => (rest, 1),
            };
            let lo: u32 = parse_num(line, "times", lo.trim())?;
            let hi: u32 = parse_num(line, "times", hi.trim())?;
            if step == 0 || lo > hi {
                return Err(err(line, format!("bad time range `{part}`")));
            }
            out.extend((lo..=hi).step_by(step as usize));
        } else {
            out.push(parse_num(line, "times", part)?);
        }
    }
    if out.windows(2).any(|w| w[0] >= w[1]) {
        return Err(err(line, "times must be strictly increasing"));
    }
    Ok(out)
}
