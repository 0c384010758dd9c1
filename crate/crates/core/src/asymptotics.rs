//! Asymptotic predictions for `mu_N` and `N_mu`.
//!
//! Two-term expansion:
//!
//! ```text
//! mu_N ≈ (1 - L/p)^{-p} - 2 L^2 pi^2 (1 - L/p)^{-2-p} / (q (log N)^2)
//! ```
//!
//! Breakdown size near the limit:
//!
//! ```text
//! log N_mu ≈ L pi (p/2 (1-L/p)^{(p-2)/(p-1)} (mu^{-1/(p-1)} - (1-L/p)^{p/(p-1)}))^{-1/2}
//! ```
//!
//! and `theta(y) = int_0^y dx / (x^p/(p-1) - (p-L)x/(p-1) + mu^{-1/(p-1)})`,
//! whose value at infinity has that same leading term (without the factor `L`).

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::quadrature::integrate;
use crate::recurrence::ProblemSpec;
use crate::solver::solve_mu;

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// `(1 - L/p)^{-p}`.
pub fn limit_constant(p: f64, l: f64) -> f64 {
    (1.0 - l / p).powf(-p)
}

/// `2 L^2 pi^2 (1 - L/p)^{-2-p} / q`.
pub fn second_coefficient(p: f64, l: f64) -> f64 {
    let q = p / (p - 1.0);
    2.0 * l * l * PI * PI * (1.0 - l / p).powf(-2.0 - p) / q
}

/// Two-term expansion of `mu_N` for fixed `p` and `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticEstimate {
    pub p: f64,
    pub l: f64,
    pub limit: f64,
    pub second_coeff: f64,
}

impl AsymptoticEstimate {
    pub fn new(p: f64, l: f64) -> Result<Self> {
        check_params(p, l)?;
        Ok(AsymptoticEstimate {
            p,
            l,
            limit: limit_constant(p, l),
            second_coeff: second_coefficient(p, l),
        })
    }

    pub fn for_spec(spec: &ProblemSpec) -> Self {
        AsymptoticEstimate {
            p: spec.p,
            l: spec.l.value,
            limit: spec.limit(),
            second_coeff: second_coefficient(spec.p, spec.l.value),
        }
    }

    /// `limit - second_coeff / (log N)^2`.
    pub fn predicted_mu(&self, n: usize) -> Result<f64> {
        if n < 2 {
            return Err(Error::InvalidInput("prediction needs N >= 2".into()));
        }
        let log_n = (n as f64).ln();
        Ok(self.limit - self.second_coeff / (log_n * log_n))
    }
}

fn check_params(p: f64, l: f64) -> Result<()> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("p must be finite and >= 2, got {p}")));
    }
    if !(l > 0.0 && l <= 1.0) {
        return Err(Error::InvalidInput(format!("L must lie in (0, 1], got {l}")));
    }
    Ok(())
}

pub fn predict_mu(n: usize, p: f64, l: f64) -> Result<f64> {
    AsymptoticEstimate::new(p, l)?.predicted_mu(n)
}

fn check_below_limit(mu: f64, p: f64, l: f64) -> Result<()> {
    check_params(p, l)?;
    let limit = limit_constant(p, l);
    if !(mu > 0.0) {
        return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
    }
    if !(mu < limit) {
        return Err(Error::AboveLimit { mu, limit });
    }
    Ok(())
}

/// Denominator of the theta integrand and the location of its minimum.
///
/// Near the minimum `x0 = (1-L/p)^{1/(p-1)}` the denominator is written as
/// `x0^p R(u)/(p-1) + gap` with `u = x/x0 - 1`,
/// `R(u) = (1+u)^p - 1 - p u >= 0` and
/// `gap = mu^{-1/(p-1)} - (1-L/p)^{p/(p-1)} > 0`, so nothing cancels as
/// `mu` approaches the limit.
struct ThetaKernel {
    p: f64,
    l: f64,
    nu_root: f64,
    peak: f64,
    peak_pow: f64,
    gap: f64,
}

/// `(1+u)^p - 1 - p u` without cancellation for small `u`.
fn taylor_remainder(u: f64, p: f64) -> f64 {
    if u.abs() < 0.01 {
        let mut coeff = p * (p - 1.0) / 2.0;
        let mut term = u * u;
        let mut total = 0.0;
        for j in 2..12 {
            total += coeff * term;
            coeff *= (p - j as f64) / (j as f64 + 1.0);
            term *= u;
        }
        total
    } else {
        (p * u.ln_1p()).exp_m1() - p * u
    }
}

impl ThetaKernel {
    fn new(mu: f64, p: f64, l: f64) -> Self {
        let base = 1.0 - l / p;
        let nu_root = (1.0 / mu).powf(1.0 / (p - 1.0));
        ThetaKernel {
            p,
            l,
            nu_root,
            peak: base.powf(1.0 / (p - 1.0)),
            peak_pow: base.powf(p / (p - 1.0)),
            gap: nu_root - base.powf(p / (p - 1.0)),
        }
    }

    #[inline]
    fn integrand(&self, x: f64) -> f64 {
        let u = x / self.peak - 1.0;
        1.0 / (self.peak_pow * taylor_remainder(u, self.p) / (self.p - 1.0) + self.gap)
    }

    /// Integrand after `x = 1/t`, for the far range.
    #[inline]
    fn inverted(&self, t: f64) -> f64 {
        let p = self.p;
        // (1/t^2) / D(1/t) = (p-1) t^{p-2} / (1 - (p-L) t^{p-1} + (p-1) nu' t^p)
        (p - 1.0) * t.powf(p - 2.0)
            / (1.0 - (p - self.l) * t.powf(p - 1.0) + (p - 1.0) * self.nu_root * t.powf(p))
    }

    /// Where the far range starts: past the peak and far enough that the
    /// denominator exceeds half its leading term.
    fn far_start(&self) -> f64 {
        let p = self.p;
        (2.0 * self.peak)
            .max((2.0 * (p - self.l)).powf(1.0 / (p - 1.0)))
            .max(1.0)
    }

    fn integrate(&self, y: f64, tol: f64) -> Result<f64> {
        let c = self.far_start();
        let mut total = 0.0;
        let near_end = y.min(c);
        let split = self.peak.min(near_end);
        total += integrate(|x| self.integrand(x), 0.0, split, tol / 4.0)?.value;
        total += integrate(|x| self.integrand(x), split, near_end, tol / 4.0)?.value;
        if y > c {
            total += integrate(|t| self.inverted(t), 1.0 / y, 1.0 / c, tol / 2.0)?.value;
        }
        Ok(total)
    }
}

/// `theta(y)` by adaptive quadrature to absolute tolerance `tol`;
/// requires `0 < mu < (1 - L/p)^{-p}`.
pub fn theta(y: f64, mu: f64, p: f64, l: f64, tol: f64) -> Result<f64> {
    check_below_limit(mu, p, l)?;
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::InvalidInput(format!("y must be finite and >= 0, got {y}")));
    }
    ThetaKernel::new(mu, p, l).integrate(y, tol)
}

/// `theta(infinity)`: quadrature up to a cutoff `X` plus the tail estimate
/// `X^{1-p}`.
///
/// For `x^{p-1} >= 2(p-L)` the integrand is at most `2(p-1) x^{-p}`, so the
/// tail beyond `X` is at most `2 X^{1-p}`; `X` is chosen to make that
/// `tol/2`, and the leading-order tail `X^{1-p}` is added back.
pub fn theta_infinity(mu: f64, p: f64, l: f64, tol: f64) -> Result<f64> {
    check_below_limit(mu, p, l)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let kernel = ThetaKernel::new(mu, p, l);
    let cutoff = (4.0 / tol).powf(1.0 / (p - 1.0)).max(kernel.far_start());
    Ok(kernel.integrate(cutoff, tol / 2.0)? + cutoff.powf(1.0 - p))
}

/// Leading term of `theta(infinity)` as `mu` approaches the limit:
/// `pi (p/2 (1-L/p)^{(p-2)/(p-1)} (mu^{-1/(p-1)} - (1-L/p)^{p/(p-1)}))^{-1/2}`.
pub fn theta_inf_closed(mu: f64, p: f64, l: f64) -> Result<f64> {
    check_below_limit(mu, p, l)?;
    let base = 1.0 - l / p;
    let gap = ThetaKernel::new(mu, p, l).gap;
    let curvature = 0.5 * p * base.powf((p - 2.0) / (p - 1.0));
    Ok(PI / (curvature * gap).sqrt())
}

/// Predicted `log N_mu`: `L` times [`theta_inf_closed`].
pub fn log_n_estimate(mu: f64, p: f64, l: f64) -> Result<f64> {
    Ok(l * theta_inf_closed(mu, p, l)?)
}

/// Inverse of [`log_n_estimate`]: the `mu` whose predicted `log N_mu` is `log_n`.
pub fn mu_for_log_n(log_n: f64, p: f64, l: f64) -> Result<f64> {
    check_params(p, l)?;
    if !(log_n > 0.0) {
        return Err(Error::InvalidInput(format!("log N must be positive, got {log_n}")));
    }
    let base = 1.0 - l / p;
    let curvature = 0.5 * p * base.powf((p - 2.0) / (p - 1.0));
    let gap = (l * PI / log_n).powi(2) / curvature;
    let nu_root = gap + base.powf(p / (p - 1.0));
    Ok(nu_root.powf(-(p - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientSample {
    pub n: usize,
    pub mu: f64,
    /// `(limit - mu_N) (log N)^2`.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondOrderFit {
    pub limit: f64,
    pub series: Vec<CoefficientSample>,
    /// Intercept of the least-squares line `c_N = c + b / log N`.
    pub extrapolated: f64,
    pub slope: f64,
}

/// Fit `c_N = c + b / log N` to samples `(N, mu_N)`.
pub fn fit_second_order(samples: &[(usize, f64)], limit: f64) -> Result<SecondOrderFit> {
    if samples.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&(n, _)| n < 2) {
        return Err(Error::InvalidInput("samples need N >= 2".into()));
    }
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidInput("sample N values must be increasing".into()));
    }
    let series: Vec<CoefficientSample> = samples
        .iter()
        .map(|&(n, mu)| {
            let log_n = (n as f64).ln();
            CoefficientSample {
                n,
                mu,
                c: (limit - mu) * log_n * log_n,
            }
        })
        .collect();
    let xs: Vec<f64> = series.iter().map(|s| 1.0 / (s.n as f64).ln()).collect();
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_c = series.iter().map(|s| s.c).sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxc: f64 = xs.iter().zip(&series).map(|(x, s)| (x - mean_x) * (s.c - mean_c)).sum();
    let slope = sxc / sxx;
    Ok(SecondOrderFit {
        limit,
        series,
        extrapolated: mean_c - slope * mean_x,
        slope,
    })
}

/// `(N, mu_N)` for each `N`, solved independently.
pub fn sample_constants(
    ns: &[usize],
    tol: f64,
    spec: &ProblemSpec,
    exec: Execution,
) -> Result<Vec<(usize, f64)>> {
    exec.map(ns, |&n| solve_mu(n, tol, spec).map(|r| (n, r.mu)))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitSummary {
    pub schema_version: u32,
    pub limit: f64,
    pub target_coefficient: f64,
    pub extrapolated_coefficient: f64,
    pub relative_error: f64,
}

impl SecondOrderFit {
    pub fn summary(&self, target: f64) -> FitSummary {
        FitSummary {
            schema_version: 1,
            limit: self.limit,
            target_coefficient: target,
            extrapolated_coefficient: self.extrapolated,
            relative_error: (self.extrapolated - target).abs() / target.abs(),
        }
    }

    /// CSV with columns `N,mu_N,c_N`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "mu_N", "c_N"])?;
        for s in &self.series {
            w.write_record([s.n.to_string(), s.mu.to_string(), s.c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
