//! Best constants `mu_N` by bisection on the breakdown predicate.
//!
//! `N_mu <= N` holds exactly when `mu <= mu_N`, so the predicate is monotone
//! in `mu` and bisection over `[1, (1 - L/p)^{-p}]` converges
//! unconditionally. Each predicate evaluation costs `O(N)`, a solve
//! `O(N log(1/tol))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::recurrence::{BreakdownIndex, ProblemSpec, StepTable};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Solved best constant of the length-`n` section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantResult {
    pub n: usize,
    pub mu: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// `|h_N(1/mu) - ((Lambda_N/lambda_N)^{1/(p-1)} - (lambda_N/Lambda_N) mu^{-1/(p-1)})|`
    /// at the returned `mu`.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Bisection {
    fn default() -> Self {
        Bisection {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl Bisection {
    pub fn with_tol(tol: f64) -> Self {
        Bisection {
            tol,
            ..Default::default()
        }
    }

    pub fn solve(&self, n: usize, spec: &ProblemSpec) -> Result<ConstantResult> {
        if n == 0 {
            return Err(Error::InvalidInput("section length N must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", self.tol)));
        }
        let table = StepTable::new(spec, n)?;
        let breaks = |mu: f64| matches!(table.breakdown_index(mu), BreakdownIndex::At(_));

        let mut lo = 1.0;
        let mut hi = spec.limit();
        // Only reachable when L was underestimated from a finite horizon.
        let mut grow = 0;
        while breaks(hi) {
            grow += 1;
            if grow > 64 {
                return Err(Error::NotConverged {
                    method: "bracket expansion",
                    iterations: grow,
                });
            }
            lo = hi;
            hi *= 2.0;
        }

        let mut iterations = 0;
        while hi - lo > self.tol && iterations < self.max_iter {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            iterations += 1;
            if breaks(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = lo + 0.5 * (hi - lo);
        Ok(ConstantResult {
            n,
            mu,
            bracket: (lo, hi),
            iterations,
            residual: equality_defect(&table, spec, mu),
            converged: hi - lo <= self.tol,
        })
    }
}

/// Distance of `h_N` from the breakdown boundary at `mu`.
fn equality_defect(table: &StepTable, spec: &ProblemSpec, mu: f64) -> f64 {
    let n = table.len();
    let co = table.coeffs(n);
    match table.h_last(mu) {
        Ok(h) => (h - (spec.root(1.0 / co.density) - co.density * spec.root(1.0 / mu))).abs(),
        Err(_) => f64::INFINITY,
    }
}

/// `mu_N` to absolute tolerance `tol` with the default iteration cap.
pub fn solve_mu(n: usize, tol: f64, spec: &ProblemSpec) -> Result<ConstantResult> {
    Bisection::with_tol(tol).solve(n, spec)
}

/// Solve for every `n` in `ns`; results are in input order.
pub fn solve_many(
    ns: &[usize],
    tol: f64,
    spec: &ProblemSpec,
    exec: Execution,
) -> Vec<Result<ConstantResult>> {
    exec.map(ns, |&n| solve_mu(n, tol, spec))
}

/// The chain `mu_1 < mu_2 < ... < mu_K`.
pub fn mu_thresholds(k: usize, tol: f64, spec: &ProblemSpec, exec: Execution) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    let ns: Vec<usize> = (1..=k).collect();
    solve_many(&ns, tol, spec, exec)
        .into_iter()
        .map(|r| r.map(|c| c.mu))
        .collect()
}

/// `Omega_N(mu) - Lambda_N/lambda_N`; zero exactly at `mu = mu_N`.
pub fn residual(mu: f64, n: usize, spec: &ProblemSpec) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::InvalidInput(format!("mu must be positive, got {mu}")));
    }
    let table = StepTable::new(spec, n)?;
    let co = table.coeffs(n);
    table
        .omega_last(mu)
        .map(|om| om - 1.0 / co.density)
        .map_err(|index| Error::EarlyBreakdown { index, target: n })
}
