//! Decay-law fits of echo curves.
//!
//! All fits are weighted linear least squares on `ln M`: against `t` for
//! exponential decay, against `t²` for Gaussian decay. Point weights are
//! `(mean/stderr)²` when every point carries a positive standard error and
//! uniform otherwise. Coefficient uncertainties are scaled by the reduced
//! chi-square, so they also reflect how well the model fits.

use crate::echo::EchoCurve;
use crate::error::{EchoError, Result};

/// Curves are fitted only below this echo value (short-time transient).
pub const TRANSIENT_CEILING: f64 = 0.8;
/// Points must exceed `FLOOR_FACTOR / N` to enter a fit.
pub const FLOOR_FACTOR: f64 = 5.0;
/// The default window ends at the last point above `WINDOW_END_FACTOR / N`.
pub const WINDOW_END_FACTOR: f64 = 10.0;
/// Minimum number of points in a fit.
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `A exp(-Γ t)`.
    Exponential,
    /// `A exp(-c t²)`.
    Gaussian,
}

/// How the fit window is chosen from the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowPolicy {
    /// From the first point below 0.8 to the last point above `10/N`, using
    /// points with `5/N < M < 0.8`.
    Default,
    /// From the first point below `upper` to the last point above `lower`,
    /// using points strictly between the two.
    Thresholds { upper: f64, lower: f64 },
    /// All positive points with `t_lo <= t <= t_hi`.
    Explicit { t_lo: u32, t_hi: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Γ (per period) for exponential fits, `c` (per period²) for Gaussian.
    pub coefficient: f64,
    pub coefficient_err: f64,
    pub prefactor: f64,
    pub fit_window: (u32, u32),
    /// Unweighted RMS of `ln M - ln model` over the fitted points.
    pub residual_rms: f64,
    pub n_points: usize,
    pub dof: usize,
}

impl DecayFit {
    /// Decay rate of an exponential fit.
    pub fn rate(&self) -> f64 {
        self.coefficient
    }

    pub fn predict(&self, t: f64) -> f64 {
        let x = match self.model {
            DecayModel::Exponential => t,
            DecayModel::Gaussian => t * t,
        };
        self.prefactor * (-self.coefficient * x).exp()
    }
}

struct Point {
    t: f64,
    mean: f64,
    stderr: f64,
}

fn window_points(curve: &EchoCurve, policy: WindowPolicy) -> Result<(Vec<Point>, (u32, u32))> {
    if curve.times.len() != curve.mean.len() || curve.times.len() != curve.stderr.len() {
        return Err(EchoError::InvalidFitInput(
            "times, mean and stderr lengths differ".into(),
        ));
    }
    let inv_n = 1.0 / curve.params.n as f64;
    let (upper, lower_end, floor) = match policy {
        WindowPolicy::Default => (
            TRANSIENT_CEILING,
            WINDOW_END_FACTOR * inv_n,
            FLOOR_FACTOR * inv_n,
        ),
        WindowPolicy::Thresholds { upper, lower } => (upper, lower, lower),
        WindowPolicy::Explicit { t_lo, t_hi } => {
            let points: Vec<Point> = curve
                .times
                .iter()
                .zip(curve.mean.iter().zip(&curve.stderr))
                .filter(|(&t, (&m, _))| t >= t_lo && t <= t_hi && m > 0.0)
                .map(|(&t, (&mean, &stderr))| Point {
                    t: t as f64,
                    mean,
                    stderr,
                })
                .collect();
            return check_count(points, (t_lo, t_hi));
        }
    };
    let t_lo = curve
        .times
        .iter()
        .zip(&curve.mean)
        .find(|(_, &m)| m < upper)
        .map(|(&t, _)| t);
    let t_hi = curve
        .times
        .iter()
        .zip(&curve.mean)
        .rev()
        .find(|(_, &m)| m > lower_end)
        .map(|(&t, _)| t);
    let (t_lo, t_hi) = match (t_lo, t_hi) {
        (Some(lo), Some(hi)) if lo <= hi => (lo, hi),
        (lo, hi) => {
            return Err(EchoError::InsufficientPoints {
                t_lo: lo.map_or(f64::NAN, f64::from),
                t_hi: hi.map_or(f64::NAN, f64::from),
                found: 0,
                needed: MIN_POINTS,
            })
        }
    };
    let points = curve
        .times
        .iter()
        .zip(curve.mean.iter().zip(&curve.stderr))
        .filter(|(&t, (&m, _))| t >= t_lo && t <= t_hi && m > floor && m < upper)
        .map(|(&t, (&mean, &stderr))| Point {
            t: t as f64,
            mean,
            stderr,
        })
        .collect();
    check_count(points, (t_lo, t_hi))
}

fn check_count(points: Vec<Point>, window: (u32, u32)) -> Result<(Vec<Point>, (u32, u32))> {
    if points.len() < MIN_POINTS {
        return Err(EchoError::InsufficientPoints {
            t_lo: window.0 as f64,
            t_hi: window.1 as f64,
            found: points.len(),
            needed: MIN_POINTS,
        });
    }
    Ok((points, window))
}

/// Weighted straight-line fit `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_err: f64,
    pub slope_err: f64,
    pub residual_rms: f64,
}

pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n || w.len() != n {
        return Err(EchoError::InvalidFitInput(format!(
            "line fit needs >= 2 matching points, got {n}"
        )));
    }
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let xm = sx / sw;
    let ym = sy / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(y))
        .map(|(w, (x, y))| w * (x - xm) * (y - ym))
        .sum();
    if !(sxx > 0.0) {
        return Err(EchoError::InvalidFitInput(
            "abscissae are degenerate".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(x, y)| y - intercept - slope * x)
        .collect();
    let chi2: f64 = residuals.iter().zip(w).map(|(r, w)| w * r * r).sum();
    let scale = if n > 2 { chi2 / (n - 2) as f64 } else { 0.0 };
    let slope_var = scale / sxx;
    let intercept_var = scale * (1.0 / sw + xm * xm / sxx);
    Ok(LineFit {
        intercept,
        slope,
        intercept_err: intercept_var.sqrt(),
        slope_err: slope_var.sqrt(),
        residual_rms: (residuals.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt(),
    })
}

fn fit_model(curve: &EchoCurve, policy: WindowPolicy, model: DecayModel) -> Result<DecayFit> {
    let (points, window) = window_points(curve, policy)?;
    let x: Vec<f64> = points
        .iter()
        .map(|p| match model {
            DecayModel::Exponential => p.t,
            DecayModel::Gaussian => p.t * p.t,
        })
        .collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean.ln()).collect();
    let weighted = points.iter().all(|p| p.stderr > 0.0);
    let w: Vec<f64> = points
        .iter()
        .map(|p| {
            if weighted {
                (p.mean / p.stderr).powi(2)
            } else {
                1.0
            }
        })
        .collect();
    let line = weighted_line_fit(&x, &y, &w)?;
    let coefficient = -line.slope;
    if coefficient < 0.0 {
        return Err(EchoError::InvalidFitInput(format!(
            "curve grows over window [{}, {}] (fitted coefficient {coefficient:.3e})",
            window.0, window.1
        )));
    }
    Ok(DecayFit {
        model,
        coefficient,
        coefficient_err: line.slope_err,
        prefactor: line.intercept.exp(),
        fit_window: window,
        residual_rms: line.residual_rms,
        n_points: points.len(),
        dof: points.len() - 2,
    })
}

/// Fits `A exp(-Γ t)`.
pub fn fit_exponential(curve: &EchoCurve, policy: WindowPolicy) -> Result<DecayFit> {
    fit_model(curve, policy, DecayModel::Exponential)
}

/// Fits `A exp(-c t²)`.
pub fn fit_gaussian(curve: &EchoCurve, policy: WindowPolicy) -> Result<DecayFit> {
    fit_model(curve, policy, DecayModel::Gaussian)
}

/// Both fits over the same window. Neither is preferred automatically; the
/// caller compares `residual_rms`.
pub fn fit_both(curve: &EchoCurve, policy: WindowPolicy) -> Result<(DecayFit, DecayFit)> {
    Ok((
        fit_exponential(curve, policy)?,
        fit_gaussian(curve, policy)?,
    ))
}

/// Leave-one-realization-out standard error of a fitted coefficient. Every
/// partial fit uses the window of `fit`, so only the ensemble changes.
pub fn jackknife_error(curve: &EchoCurve, fit: &DecayFit) -> Result<f64> {
    let r = curve.samples.len();
    if r < 2 {
        return Err(EchoError::InvalidFitInput(
            "jackknife needs at least two realizations".into(),
        ));
    }
    let policy = WindowPolicy::Explicit {
        t_lo: fit.fit_window.0,
        t_hi: fit.fit_window.1,
    };
    let mut estimates = Vec::with_capacity(r);
    for skip in 0..r {
        let kept: Vec<Vec<f64>> = curve
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, s)| s.clone())
            .collect();
        let partial = EchoCurve::from_samples(curve.times.clone(), curve.params.clone(), kept);
        estimates.push(fit_model(&partial, policy, fit.model)?.coefficient);
    }
    let m = estimates.iter().sum::<f64>() / r as f64;
    let ss = estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>();
    Ok((ss * (r - 1) as f64 / r as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationEstimate {
    pub plateau: f64,
    /// First time the curve comes within a factor 2 of the plateau.
    pub t_onset: u32,
    /// `1/N`.
    pub expected: f64,
    /// Plateau within 30% of `1/N`.
    pub matches_expected: bool,
    /// The tail still drops by more than a quarter of the plateau (or two
    /// standard errors) across its span.
    pub still_decaying: bool,
}

/// Long-time plateau from the last `tail_fraction` of the curve.
pub fn detect_saturation(curve: &EchoCurve, tail_fraction: f64) -> Result<SaturationEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(EchoError::InvalidFitInput(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let len = curve.mean.len();
    let tail = ((len as f64 * tail_fraction).ceil() as usize).clamp(1, len.max(1));
    if len == 0 {
        return Err(EchoError::InvalidFitInput("empty curve".into()));
    }
    let start = len - tail;
    let tail_mean = &curve.mean[start..];
    let plateau = tail_mean.iter().sum::<f64>() / tail as f64;
    if !(plateau > 0.0) {
        return Err(EchoError::InvalidFitInput(format!(
            "non-positive plateau {plateau}"
        )));
    }
    let still_decaying = if tail >= 3 {
        let x: Vec<f64> = curve.times[start..].iter().map(|&t| t as f64).collect();
        let line = weighted_line_fit(&x, tail_mean, &vec![1.0; tail])?;
        let span = x[tail - 1] - x[0];
        let noise = curve.stderr[start..].iter().sum::<f64>() / tail as f64;
        -line.slope * span > (0.25 * plateau).max(2.0 * noise)
    } else {
        false
    };
    let t_onset = curve
        .times
        .iter()
        .zip(&curve.mean)
        .find(|(_, &m)| m <= 2.0 * plateau)
        .map_or(curve.times[start], |(&t, _)| t);
    let expected = 1.0 / curve.params.n as f64;
    Ok(SaturationEstimate {
        plateau,
        t_onset,
        expected,
        matches_expected: (plateau / expected - 1.0).abs() <= 0.3,
        still_decaying,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub exponent_err: f64,
    pub coefficient: f64,
}

/// Power law `rate = coefficient · strength^exponent` by least squares in
/// log-log space.
pub fn scaling_regression(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(EchoError::InvalidFitInput(format!(
            "scaling regression needs >= 3 strengths, got {}",
            points.len()
        )));
    }
    if let Some(&(s, r)) = points.iter().find(|(s, r)| !(*s > 0.0) || !(*r > 0.0)) {
        return Err(EchoError::InvalidFitInput(format!(
            "strengths and rates must be positive, got ({s}, {r})"
        )));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi / lo < 4.0 - 1e-9 {
        return Err(EchoError::InvalidFitInput(format!(
            "strengths span only {:.2}x, need >= 4x",
            hi / lo
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let line = weighted_line_fit(&x, &y, &vec![1.0; points.len()])?;
    Ok(ScalingFit {
        exponent: line.slope,
        exponent_err: line.slope_err,
        coefficient: line.intercept.exp(),
    })
}

/// Rates across a strength sweep modelled as `min(c s², λ)`: quadratic
/// golden-rule growth capped by the classical Lyapunov exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct CappedRateFit {
    pub coefficient: f64,
    pub cap: f64,
    /// Strength at which `c s² = λ`.
    pub crossover: f64,
    /// Which sweep points were attributed to the capped branch.
    pub capped: Vec<bool>,
    pub residual_rms: f64,
}

/// Points with rate above `0.8 λ` are assigned to the capped branch; `c` is
/// the geometric-mean estimate from the rest.
pub fn fit_capped_rates(points: &[(f64, f64)], lambda: f64) -> Result<CappedRateFit> {
    if !(lambda > 0.0) {
        return Err(EchoError::InvalidFitInput(format!(
            "Lyapunov cap must be positive, got {lambda}"
        )));
    }
    if points.iter().any(|(s, r)| !(*s > 0.0) || !(*r > 0.0)) {
        return Err(EchoError::InvalidFitInput(
            "strengths and rates must be positive".into(),
        ));
    }
    let capped: Vec<bool> = points.iter().map(|&(_, r)| r > 0.8 * lambda).collect();
    let free: Vec<f64> = points
        .iter()
        .zip(&capped)
        .filter(|(_, &c)| !c)
        .map(|(&(s, r), _)| (r / (s * s)).ln())
        .collect();
    if free.is_empty() {
        return Err(EchoError::InvalidFitInput(
            "every sweep point is in the Lyapunov regime".into(),
        ));
    }
    let coefficient = (free.iter().sum::<f64>() / free.len() as f64).exp();
    let residual_rms = (points
        .iter()
        .map(|&(s, r)| (r.ln() - (coefficient * s * s).min(lambda).ln()).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(CappedRateFit {
        coefficient,
        cap: lambda,
        crossover: (lambda / coefficient).sqrt(),
        capped,
        residual_rms,
    })
}
