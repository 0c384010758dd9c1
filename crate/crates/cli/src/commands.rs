use std::io::Write;

use hardy_core::asymptotics::AsymptoticEstimate;
use hardy_core::oracle::DENSE_CAP;
use hardy_core::solver::solve_many;
use hardy_core::{
    breakdown_index, check_conditions, log_n_estimate, norm_general, norm_p2, solve_mu, threshold_index,
    BreakdownIndex, Error, Execution, IterationOptions, ProblemSpec, Result,
};
use serde::Serialize;

use crate::config::{RunConfig, Task, SCHEMA_VERSION};

/// Whether a run that produced output should still exit non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<Status> {
    let rule = cfg.weights.load()?;
    match &cfg.task {
        Task::CheckWeights { horizon } => {
            let report = check_conditions(&rule, cfg.p, *horizon)?;
            let ok = report.all_exact_hold();
            write_json(
                out,
                &CheckOutput {
                    schema_version: SCHEMA_VERSION,
                    config: cfg,
                    all_exact_hold: ok,
                    all_hold: report.all_hold(),
                    report: &report,
                },
            )?;
            Ok(if ok { Status::Ok } else { Status::Failed })
        }
        Task::Solve { n, tol } => {
            let spec = ProblemSpec::new(cfg.p, rule)?;
            let result = solve_mu(*n, *tol, &spec)?;
            let est = AsymptoticEstimate::for_spec(&spec);
            write_json(
                out,
                &SolveOutput {
                    schema_version: SCHEMA_VERSION,
                    config: cfg,
                    limit: est.limit,
                    l: spec.l.value,
                    l_exact: spec.l.exact,
                    predicted_mu: est.predicted_mu(*n).ok(),
                    result,
                },
            )?;
            Ok(if result.converged { Status::Ok } else { Status::Failed })
        }
        Task::Sweep { n, tol } => {
            let spec = ProblemSpec::new(cfg.p, rule)?;
            sweep(cfg, &spec, n, *tol, out)
        }
        Task::OracleCompare { n_max, tol, oracle_tol } => {
            let spec = ProblemSpec::new(cfg.p, rule)?;
            oracle_compare(cfg, &spec, *n_max, *tol, *oracle_tol, out)
        }
        Task::Breakdown { mu, cap, c0 } => {
            let spec = ProblemSpec::new(cfg.p, rule)?;
            breakdown(cfg, &spec, mu, *cap, *c0, out)
        }
    }
}

#[derive(Serialize)]
struct CheckOutput<'a, R: Serialize> {
    schema_version: u32,
    config: &'a RunConfig,
    all_exact_hold: bool,
    all_hold: bool,
    report: &'a R,
}

#[derive(Serialize)]
struct SolveOutput<'a, R: Serialize> {
    schema_version: u32,
    config: &'a RunConfig,
    limit: f64,
    l: f64,
    l_exact: bool,
    predicted_mu: Option<f64>,
    result: R,
}

/// Shortest round-trip text for `x`, switching to exponent form for very
/// small or very large magnitudes.
fn num(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn csv_writer<'a>(cfg: &RunConfig, out: &'a mut dyn Write, header: &[&str]) -> Result<csv::Writer<&'a mut dyn Write>> {
    writeln!(out, "# config: {}", cfg.to_json())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

fn sweep(cfg: &RunConfig, spec: &ProblemSpec, ns: &[usize], tol: f64, out: &mut dyn Write) -> Result<Status> {
    if ns.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one N".into()));
    }
    let est = AsymptoticEstimate::for_spec(spec);
    let results = solve_many(ns, tol, spec, Execution::default());
    let mut w = csv_writer(cfg, out, &["N", "mu_N", "predicted", "c_N"])?;
    let mut status = Status::Ok;
    for result in results {
        // Rows already written stay flushed if a later N fails.
        let r = match result {
            Ok(r) => r,
            Err(e) => {
                w.flush()?;
                return Err(e);
            }
        };
        if !r.converged {
            status = Status::Failed;
        }
        let log_n = (r.n as f64).ln();
        let predicted = est.predicted_mu(r.n).unwrap_or(f64::NAN);
        let c = (est.limit - r.mu) * log_n * log_n;
        w.write_record([r.n.to_string(), num(r.mu), num(predicted), num(c)])?;
    }
    w.flush()?;
    Ok(status)
}

fn oracle_compare(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    n_max: usize,
    tol: f64,
    oracle_tol: f64,
    out: &mut dyn Write,
) -> Result<Status> {
    if n_max == 0 || n_max > DENSE_CAP {
        return Err(Error::InvalidInput(format!("--n-max must lie in 1..={DENSE_CAP}, got {n_max}")));
    }
    let ns: Vec<usize> = (1..=n_max).collect();
    let opts = IterationOptions::new(oracle_tol);
    let rows = Execution::default().map(&ns, |&n| {
        let mu = solve_mu(n, tol, spec)?.mu;
        let oracle = if spec.p == 2.0 {
            norm_p2(n, opts, &spec.rule)
        } else {
            norm_general(n, spec.p, opts, &spec.rule)
        };
        match oracle {
            Ok(o) => Ok((n, mu, o.value)),
            Err(e) if !e.is_input_error() => Ok((n, mu, f64::NAN)),
            Err(e) => Err(e),
        }
    });
    let mut w = csv_writer(cfg, out, &["N", "mu_recurrence", "mu_oracle", "diff"])?;
    let mut status = Status::Ok;
    for row in rows {
        let (n, mu, oracle) = match row {
            Ok(r) => r,
            Err(e) => {
                w.flush()?;
                return Err(e);
            }
        };
        if oracle.is_nan() {
            status = Status::Failed;
        }
        w.write_record([n.to_string(), num(mu), num(oracle), num(mu - oracle)])?;
    }
    w.flush()?;
    Ok(status)
}

fn index_cell(index: BreakdownIndex) -> String {
    match index {
        BreakdownIndex::At(n) => n.to_string(),
        BreakdownIndex::Capped(cap) => format!(">{cap}"),
    }
}

fn breakdown(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    mus: &[f64],
    cap: usize,
    c0: f64,
    out: &mut dyn Write,
) -> Result<Status> {
    if mus.is_empty() {
        return Err(Error::InvalidInput("breakdown needs at least one mu".into()));
    }
    let rows = Execution::default().map(mus, |&mu| -> Result<[String; 5]> {
        let n_mu = breakdown_index(mu, cap, spec)?.index;
        let n_0 = match (threshold_index(mu, c0, cap, spec)?, n_mu) {
            (BreakdownIndex::Capped(_), BreakdownIndex::At(_)) => "none".to_string(),
            (index, _) => index_cell(index),
        };
        let est = match log_n_estimate(mu, spec.p, spec.l.value) {
            Ok(e) => e,
            Err(Error::AboveLimit { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let ratio = n_mu.finite().map_or(f64::NAN, |n| (n as f64).ln() / est);
        Ok([num(mu), index_cell(n_mu), n_0, num(est), num(ratio)])
    });
    let mut w = csv_writer(cfg, out, &["mu", "N_mu", "N_0", "logN_estimate", "ratio"])?;
    for row in rows {
        match row {
            Ok(r) => w.write_record(r)?,
            Err(e) => {
                w.flush()?;
                return Err(e);
            }
        }
    }
    w.flush()?;
    Ok(Status::Ok)
}
