//! The h-recurrence and its breakdown index.
//!
//! For a trial constant `mu` (and `nu = 1/mu`) the sequence starts at
//! `h_1 = 0` and advances by
//!
//! ```text
//! x_k     = h_k + (lambda_k/Lambda_k) nu^{1/(p-1)}
//! t_k     = 1 - (lambda_k/Lambda_k) x_k^{p-1}
//! h_{k+1} = (Lambda_k/Lambda_{k+1}) (lambda_k/lambda_{k+1})^{1/(p-1)} x_k t_k^{-1/(p-1)}
//! ```
//!
//! The recurrence breaks down at the first `k` with `t_k <= 0`. That index
//! `N_mu` is a non-decreasing step function of `mu` whose jump to `N + 1`
//! happens exactly at the best constant `mu_N` of the length-`N` section.
//!
//! Error model: every step is a fixed sequence of O(1) correctly rounded
//! operations on O(1) quantities, so the relative error per step is a few
//! ulp and accumulates at most linearly in `k`.

use std::io::Write;
use std::ops::ControlFlow;

use serde::Serialize;

use crate::asymptotics::limit_constant;
use crate::error::{Error, Result};
use crate::weights::{LEstimate, WeightRule};

/// Horizon used to estimate `L` for rules without a closed-form value.
pub const DEFAULT_L_HORIZON: usize = 10_000;

/// Traces longer than this are streamed rather than stored by default.
pub const STORE_LIMIT: usize = 1_000_000;

/// Default `C_0` for the simplified threshold `h_k > C_0`.
pub const DEFAULT_C0: f64 = 10.0;

/// Exponent `p`, its conjugate, and the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub p: f64,
    pub q: f64,
    pub rule: WeightRule,
    pub l: LEstimate,
    pow: Powers,
}

impl ProblemSpec {
    /// `L` is taken from the rule: closed form when available, otherwise the
    /// maximum spacing over [`DEFAULT_L_HORIZON`] indices (or the whole table).
    pub fn new(p: f64, rule: WeightRule) -> Result<Self> {
        let l = rule.estimate_l(DEFAULT_L_HORIZON)?;
        Self::with_l(p, rule, l)
    }

    pub fn with_l(p: f64, rule: WeightRule, l: LEstimate) -> Result<Self> {
        if !p.is_finite() || !(p >= 2.0) {
            return Err(Error::InvalidInput(format!("p must be finite and >= 2, got {p}")));
        }
        if !(l.value > 0.0 && l.value <= 1.0) {
            return Err(Error::InvalidInput(format!("L must lie in (0, 1], got {}", l.value)));
        }
        Ok(ProblemSpec {
            p,
            q: p / (p - 1.0),
            rule,
            l,
            pow: Powers::new(p),
        })
    }

    /// `(1 - L/p)^{-p}`, the supremum of `mu_N` over `N`.
    pub fn limit(&self) -> f64 {
        limit_constant(self.p, self.l.value)
    }

    /// `x^{1/(p-1)}`.
    #[inline]
    pub fn root(&self, x: f64) -> f64 {
        self.pow.root(x)
    }

    /// `x^{p-1}`.
    #[inline]
    pub fn power(&self, x: f64) -> f64 {
        self.pow.power(x)
    }

    fn max_index(&self, cap: usize) -> usize {
        self.rule.len().map_or(cap, |len| cap.min(len))
    }
}

/// Powers with exponent `p - 1` and `1/(p-1)`. At `p = 2` both are the
/// identity; other exponents go through `exp`/`ln`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Powers {
    pm1: f64,
    inv: f64,
    linear: bool,
}

impl Powers {
    fn new(p: f64) -> Self {
        Powers {
            pm1: p - 1.0,
            inv: 1.0 / (p - 1.0),
            linear: p == 2.0,
        }
    }

    #[inline]
    fn power(self, x: f64) -> f64 {
        if self.linear {
            x
        } else if x == 0.0 {
            0.0
        } else {
            (self.pm1 * x.ln()).exp()
        }
    }

    #[inline]
    fn root(self, x: f64) -> f64 {
        if self.linear {
            x
        } else if x == 0.0 {
            0.0
        } else {
            (self.inv * x.ln()).exp()
        }
    }

    /// `t^{-1/(p-1)}` for `t > 0`.
    #[inline]
    fn inv_root(self, t: f64) -> f64 {
        if self.linear {
            1.0 / t
        } else {
            (-self.inv * t.ln()).exp()
        }
    }
}

/// Per-index coefficients: `a_k = lambda_k/Lambda_k` and the step factor
/// `c_k = (Lambda_k/Lambda_{k+1}) (lambda_k/lambda_{k+1})^{1/(p-1)}`
/// (`NaN` when `lambda_{k+1}` does not exist).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoeffs {
    pub density: f64,
    pub factor: f64,
}

/// Streaming coefficients for `k = 1, 2, ...`.
pub fn coefficients(spec: &ProblemSpec) -> impl Iterator<Item = StepCoeffs> + '_ {
    let mut it = spec.rule.iter().peekable();
    std::iter::from_fn(move || {
        let (_, w, c) = it.next()?;
        let factor = match it.peek() {
            Some(&(_, w1, c1)) => (c / c1) * spec.pow.root(w / w1),
            None => f64::NAN,
        };
        Some(StepCoeffs {
            density: w / c,
            factor,
        })
    })
}

/// Result of one recurrence step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Next(f64),
    /// The breakdown inequality holds at the current index.
    Breakdown,
}

#[inline]
fn shifted(h: f64, co: StepCoeffs, nu_root: f64) -> f64 {
    h + co.density * nu_root
}

#[inline]
fn slack(x: f64, co: StepCoeffs, pow: Powers) -> f64 {
    1.0 - co.density * pow.power(x)
}

#[inline]
fn advance(h: f64, co: StepCoeffs, nu_root: f64, pow: Powers) -> Step {
    let x = shifted(h, co, nu_root);
    let t = slack(x, co, pow);
    // Equality counts as breakdown; NaN/overflow too.
    if !(t > 0.0) {
        return Step::Breakdown;
    }
    let next = co.factor * x * pow.inv_root(t);
    if next.is_finite() {
        Step::Next(next)
    } else {
        Step::Breakdown
    }
}

/// One step from `h_k` to `h_{k+1}` at `nu`.
pub fn h_step(h: f64, k: usize, nu: f64, spec: &ProblemSpec) -> Result<Step> {
    if k == 0 {
        return Err(Error::InvalidInput("recurrence indices start at k = 1".into()));
    }
    if !(nu > 0.0) || !h.is_finite() || h < 0.0 {
        return Err(Error::InvalidInput(format!("need nu > 0 and finite h >= 0, got nu={nu}, h={h}")));
    }
    let co = coefficients(spec)
        .nth(k - 1)
        .ok_or(Error::OutOfRange { index: k, len: k - 1 })?;
    Ok(advance(h, co, spec.root(nu), spec.pow))
}

/// `Omega_k = (h_k + (lambda_k/Lambda_k) nu^{1/(p-1)})^{p-1}`.
pub fn omega(h: f64, k: usize, nu: f64, spec: &ProblemSpec) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("recurrence indices start at k = 1".into()));
    }
    let density = spec.rule.lambda(k)? / spec.rule.cumulative(k)?;
    Ok(spec.power(h + density * spec.root(nu)))
}

/// `(Lambda_{n-1}/Lambda_n) ((p-L)/p)^{1/(p-1)}`, the upper bound on `h_n`
/// when `mu` equals the limit constant.
pub fn limit_bound(n: usize, spec: &ProblemSpec) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("bound is defined for n >= 1".into()));
    }
    let ratio = spec.rule.cumulative(n - 1)? / spec.rule.cumulative(n)?;
    Ok(ratio * spec.root(1.0 - spec.l.value / spec.p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Walk {
    last: usize,
    breakdown: Option<usize>,
}

/// Run the recurrence over `coeffs` for at most `cap` indices, calling
/// `visit(k, h_k)` for every defined value. `visit` may stop the walk early.
fn walk<I, F>(coeffs: I, nu_root: f64, cap: usize, pow: Powers, mut visit: F) -> Walk
where
    I: IntoIterator<Item = StepCoeffs>,
    F: FnMut(usize, f64) -> ControlFlow<()>,
{
    let mut h = 0.0;
    let mut last = 0;
    for (i, co) in coeffs.into_iter().take(cap).enumerate() {
        let k = i + 1;
        last = k;
        if visit(k, h).is_break() {
            return Walk { last, breakdown: None };
        }
        let x = shifted(h, co, nu_root);
        if !(slack(x, co, pow) > 0.0) {
            return Walk {
                last,
                breakdown: Some(k),
            };
        }
        if k == cap {
            break;
        }
        match advance(h, co, nu_root, pow) {
            Step::Next(next) => h = next,
            Step::Breakdown => {
                return Walk {
                    last,
                    breakdown: Some(k),
                }
            }
        }
    }
    Walk { last, breakdown: None }
}

fn check_mu(mu: f64, cap: usize) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidInput(format!("mu must be positive and finite, got {mu}")));
    }
    if cap == 0 {
        return Err(Error::InvalidInput("cap must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreMode {
    Store,
    Stream,
}

/// Values `h_1..h_last` produced at a fixed `mu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HTrace {
    pub mu: f64,
    pub nu: f64,
    /// `values[k-1] = h_k`; empty in stream mode.
    pub values: Vec<f64>,
    pub last: usize,
    pub last_value: f64,
    pub broke_down: bool,
    pub breakdown_index: Option<usize>,
}

impl HTrace {
    pub fn h(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }
}

/// Evaluate `h_1, h_2, ...` at `mu` until breakdown or `cap` indices.
///
/// The breakdown test is applied at every index up to and including `cap`.
pub fn run_h(mu: f64, cap: usize, spec: &ProblemSpec, mode: StoreMode) -> Result<HTrace> {
    check_mu(mu, cap)?;
    let cap = spec.max_index(cap);
    let nu = 1.0 / mu;
    let mut values = Vec::new();
    if mode == StoreMode::Store {
        values.reserve(cap.min(STORE_LIMIT));
    }
    let mut last_value = 0.0;
    let w = walk(coefficients(spec), spec.root(nu), cap, spec.pow, |_, h| {
        last_value = h;
        if mode == StoreMode::Store {
            values.push(h);
        }
        ControlFlow::Continue(())
    });
    Ok(HTrace {
        mu,
        nu,
        values,
        last: w.last,
        last_value,
        broke_down: w.breakdown.is_some(),
        breakdown_index: w.breakdown,
    })
}

/// The breakdown index `N_mu`, or `Capped` if none occurs within `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownIndex {
    At(usize),
    Capped(usize),
}

impl BreakdownIndex {
    pub fn finite(self) -> Option<usize> {
        match self {
            BreakdownIndex::At(k) => Some(k),
            BreakdownIndex::Capped(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakdownOutcome {
    pub index: BreakdownIndex,
    pub mu: f64,
}

pub fn breakdown_index(mu: f64, cap: usize, spec: &ProblemSpec) -> Result<BreakdownOutcome> {
    check_mu(mu, cap)?;
    let cap = spec.max_index(cap);
    let w = walk(coefficients(spec), spec.root(1.0 / mu), cap, spec.pow, |_, _| {
        ControlFlow::Continue(())
    });
    Ok(BreakdownOutcome {
        index: w.breakdown.map_or(BreakdownIndex::Capped(cap), BreakdownIndex::At),
        mu,
    })
}

/// Smallest `k <= min(cap, N_mu)` with `h_k > c0`, or `Capped`.
pub fn threshold_index(mu: f64, c0: f64, cap: usize, spec: &ProblemSpec) -> Result<BreakdownIndex> {
    check_mu(mu, cap)?;
    if !(c0 > 1.0) {
        return Err(Error::InvalidInput(format!("C0 must exceed 1, got {c0}")));
    }
    let cap = spec.max_index(cap);
    let mut hit = None;
    walk(coefficients(spec), spec.root(1.0 / mu), cap, spec.pow, |k, h| {
        if h > c0 {
            hit = Some(k);
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    Ok(hit.map_or(BreakdownIndex::Capped(cap), BreakdownIndex::At))
}

/// Precomputed coefficients for repeated runs over the same horizon, as in
/// bisection on `mu`. Bit-identical to the streaming path.
#[derive(Debug, Clone)]
pub struct StepTable {
    coeffs: Vec<StepCoeffs>,
    pow: Powers,
    p: f64,
}

impl StepTable {
    pub fn new(spec: &ProblemSpec, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("step table needs n >= 1".into()));
        }
        if let Some(len) = spec.rule.len() {
            if n > len {
                return Err(Error::OutOfRange { index: n, len });
            }
        }
        Ok(StepTable {
            coeffs: coefficients(spec).take(n).collect(),
            pow: spec.pow,
            p: spec.p,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self, k: usize) -> StepCoeffs {
        self.coeffs[k - 1]
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `N_mu` within the table's horizon.
    pub fn breakdown_index(&self, mu: f64) -> BreakdownIndex {
        let n = self.coeffs.len();
        let w = walk(
            self.coeffs.iter().copied(),
            self.pow.root(1.0 / mu),
            n,
            self.pow,
            |_, _| ControlFlow::Continue(()),
        );
        w.breakdown.map_or(BreakdownIndex::Capped(n), BreakdownIndex::At)
    }

    /// `h_n(1/mu)` at the table's last index, or the breakdown index if the
    /// recurrence breaks down before reaching it.
    pub fn h_last(&self, mu: f64) -> std::result::Result<f64, usize> {
        let n = self.coeffs.len();
        let nu_root = self.pow.root(1.0 / mu);
        let mut h = 0.0;
        for (i, &co) in self.coeffs[..n - 1].iter().enumerate() {
            match advance(h, co, nu_root, self.pow) {
                Step::Next(next) => h = next,
                Step::Breakdown => return Err(i + 1),
            }
        }
        Ok(h)
    }

    /// `Omega_n = (h_n + a_n nu^{1/(p-1)})^{p-1}` at the last index.
    pub fn omega_last(&self, mu: f64) -> std::result::Result<f64, usize> {
        let co = self.coeffs[self.coeffs.len() - 1];
        let h = self.h_last(mu)?;
        Ok(self.pow.power(shifted(h, co, self.pow.root(1.0 / mu))))
    }
}

/// Write a trace as CSV with columns `k,h_k` and optionally `omega_k`.
pub fn write_trace_csv<W: Write>(
    trace: &HTrace,
    spec: &ProblemSpec,
    with_omega: bool,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if with_omega {
        w.write_record(["k", "h_k", "omega_k"])?;
    } else {
        w.write_record(["k", "h_k"])?;
    }
    let nu_root = spec.root(trace.nu);
    for (co, (i, &h)) in coefficients(spec).zip(trace.values.iter().enumerate()) {
        let k = (i + 1).to_string();
        if with_omega {
            let om = spec.power(shifted(h, co, nu_root));
            w.write_record([k, h.to_string(), om.to_string()])?;
        } else {
            w.write_record([k, h.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(p: f64) -> ProblemSpec {
        ProblemSpec::new(p, WeightRule::unit()).unwrap()
    }

    #[test]
    fn conjugate_exponent() {
        for p in [2.0, 2.5, 3.0, 7.25] {
            let s = unit(p);
            let sum = 1.0 / s.p + 1.0 / s.q;
            assert!((sum - 1.0).abs() <= 2.0 * f64::EPSILON);
        }
        assert!(ProblemSpec::new(1.5, WeightRule::unit()).is_err());
    }

    #[test]
    fn first_step_closed_form() {
        let s = unit(2.0);
        // h_2 = (Lambda_1/Lambda_2)(lambda_1/lambda_2)^{1/(p-1)} (mu - 1)^{-1/(p-1)}
        assert_eq!(h_step(0.0, 1, 0.5, &s).unwrap(), Step::Next(0.5));
        assert_eq!(h_step(0.0, 1, 1.0, &s).unwrap(), Step::Breakdown);
        match h_step(0.0, 1, 0.1, &s).unwrap() {
            Step::Next(h) => assert!((h - 1.0 / 18.0).abs() < 1e-16),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn first_step_general_p() {
        let rule = WeightRule::power(1.0).unwrap();
        let s = ProblemSpec::new(3.0, rule).unwrap();
        let mu: f64 = 1.7;
        let expected = (1.0 / 3.0) * 0.5f64.sqrt() * (mu - 1.0).powf(-0.5);
        match h_step(0.0, 1, 1.0 / mu, &s).unwrap() {
            Step::Next(h) => assert!((h - expected).abs() < 1e-15, "{h} vs {expected}"),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn omega_values() {
        let s = unit(2.0);
        assert_eq!(omega(0.0, 1, 1.0 / 3.0, &s).unwrap(), 1.0 / 3.0);
        assert_eq!(omega(0.5, 2, 0.5, &s).unwrap(), 0.75);
        // (1/2 + (1/2)(1/2))^1 = 3/4 at mu = 2; at the equality point Omega_2 = 2.
    }

    #[test]
    fn breakdown_below_one() {
        let s = unit(2.0);
        let t = run_h(0.5, 10, &s, StoreMode::Store).unwrap();
        assert!(t.broke_down);
        assert_eq!(t.breakdown_index, Some(1));
        assert_eq!(t.values, vec![0.0]);
        assert_eq!(
            breakdown_index(1.0, 10, &s).unwrap().index,
            BreakdownIndex::At(1)
        );
    }

    #[test]
    fn no_breakdown_at_limit() {
        let s = unit(2.0);
        let t = run_h(s.limit(), 1000, &s, StoreMode::Store).unwrap();
        assert!(!t.broke_down);
        assert_eq!(t.last, 1000);
        assert_eq!(t.values.len(), 1000);
        for (i, &h) in t.values.iter().enumerate() {
            let bound = limit_bound(i + 1, &s).unwrap();
            assert!(h >= 0.0 && h <= bound, "k={} h={h} bound={bound}", i + 1);
        }
        assert_eq!(
            breakdown_index(s.limit(), 10_000, &s).unwrap().index,
            BreakdownIndex::Capped(10_000)
        );
    }

    #[test]
    fn finite_breakdown_between_one_and_limit() {
        let s = unit(2.0);
        let t = run_h(1.2, 1_000_000, &s, StoreMode::Stream).unwrap();
        assert!(t.broke_down);
        let k = t.breakdown_index.unwrap();
        assert!(k >= 2);
        assert!(t.values.is_empty());
        assert_eq!(t.last, k);
        let stored = run_h(1.2, 1_000_000, &s, StoreMode::Store).unwrap();
        assert_eq!(stored.breakdown_index, Some(k));
        assert_eq!(stored.h(k).unwrap().to_bits(), t.last_value.to_bits());
    }

    #[test]
    fn trace_is_increasing_in_k() {
        let s = unit(2.0);
        for mu in [1.5, 2.5, 3.5, 3.99] {
            let t = run_h(mu, 5000, &s, StoreMode::Store).unwrap();
            for w in t.values.windows(2) {
                assert!(w[1] >= w[0], "mu={mu}");
            }
        }
    }

    #[test]
    fn threshold_before_breakdown() {
        let s = unit(2.0);
        let mu = 3.08;
        let nb = breakdown_index(mu, 100_000_000, &s).unwrap().index.finite().unwrap();
        let n0 = threshold_index(mu, 10.0, 100_000_000, &s).unwrap().finite().unwrap();
        assert!(n0 <= nb);
        // h is bounded by about 1/2 at the limit, so no threshold above 1 is crossed.
        assert_eq!(
            threshold_index(s.limit(), 2.0, 10_000, &s).unwrap(),
            BreakdownIndex::Capped(10_000)
        );
        assert!(threshold_index(mu, 1.0, 10, &s).is_err());
    }

    #[test]
    fn step_table_matches_streaming() {
        let s = ProblemSpec::new(2.5, WeightRule::power(1.0).unwrap()).unwrap();
        let table = StepTable::new(&s, 500).unwrap();
        for mu in [1.0, 1.1, 1.4, 1.6, s.limit()] {
            assert_eq!(
                table.breakdown_index(mu),
                breakdown_index(mu, 500, &s).unwrap().index,
                "mu = {mu}"
            );
        }
        let t = run_h(s.limit(), 500, &s, StoreMode::Store).unwrap();
        assert_eq!(table.h_last(s.limit()).unwrap().to_bits(), t.values[499].to_bits());
    }

    #[test]
    fn table_rule_caps_horizon() {
        let rule = WeightRule::table(vec![1.0; 5]).unwrap();
        let s = ProblemSpec::new(2.0, rule).unwrap();
        let out = breakdown_index(s.limit(), 100, &s).unwrap();
        assert_eq!(out.index, BreakdownIndex::Capped(5));
        assert!(StepTable::new(&s, 6).is_err());
    }

    #[test]
    fn trace_csv() {
        let s = unit(2.0);
        let t = run_h(2.0, 3, &s, StoreMode::Store).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&t, &s, true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,h_k,omega_k"));
        assert_eq!(lines.next(), Some("1,0,0.5"));
        assert_eq!(lines.next(), Some("2,0.5,0.75"));
    }

    #[test]
    fn invalid_arguments() {
        let s = unit(2.0);
        assert!(run_h(0.0, 10, &s, StoreMode::Store).is_err());
        assert!(run_h(2.0, 0, &s, StoreMode::Store).is_err());
        assert!(h_step(0.0, 0, 0.5, &s).is_err());
        assert!(h_step(-1.0, 1, 0.5, &s).is_err());
    }
}
