//! Weight sequences `lambda_k`, their prefix sums `Lambda_k`, and the
//! admissibility checks a sequence must pass before the asymptotic formula
//! for the best constant applies to it.
//!
//! Indices are 1-based throughout, matching the convention `Lambda_0 = 0`.

use std::io::Read;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::compensated::NeumaierSum;
use crate::error::{Error, Result};

/// Largest number of entries accepted for an explicit weight table.
pub const TABLE_CAP: usize = 10_000_000;

/// Where the weights come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFamily {
    /// `lambda_k = k^alpha`, `alpha >= 0`.
    Power { alpha: f64 },
    /// Explicit non-decreasing positive values, `values[i] = lambda_{i+1}`.
    Table { values: Vec<f64> },
}

/// Prefix sums computed so far, plus the accumulator state needed to extend
/// them with exactly the same bits as a from-scratch summation.
#[derive(Debug, Clone)]
struct PrefixCache {
    cum: Vec<f64>,
    acc: NeumaierSum,
}

impl Default for PrefixCache {
    fn default() -> Self {
        PrefixCache {
            cum: vec![0.0],
            acc: NeumaierSum::new(),
        }
    }
}

/// A weight sequence. Immutable after construction; safe to share between
/// threads. Prefix sums are cached lazily behind a lock.
#[derive(Debug)]
pub struct WeightRule {
    family: WeightFamily,
    cache: RwLock<PrefixCache>,
}

impl Clone for WeightRule {
    fn clone(&self) -> Self {
        WeightRule {
            family: self.family.clone(),
            cache: RwLock::new(self.cache.read().expect("prefix cache poisoned").clone()),
        }
    }
}

impl PartialEq for WeightRule {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    lambda: f64,
}

/// `lambda_k = k^alpha`, exact for small integer exponents.
#[inline]
fn power_weight(alpha: f64, k: usize) -> f64 {
    let x = k as f64;
    if alpha == 0.0 {
        1.0
    } else if alpha.fract() == 0.0 && alpha <= 32.0 {
        x.powi(alpha as i32)
    } else {
        x.powf(alpha)
    }
}

impl WeightRule {
    pub fn power(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidInput(format!(
                "power exponent must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(Self::from_family(WeightFamily::Power { alpha }))
    }

    /// Constant weights `lambda_k = 1` (the unweighted Cesaro case).
    pub fn unit() -> Self {
        Self::from_family(WeightFamily::Power { alpha: 0.0 })
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("weight table is empty".into()));
        }
        if values.len() > TABLE_CAP {
            return Err(Error::InvalidInput(format!(
                "weight table has {} entries, cap is {TABLE_CAP}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "lambda_{} = {v} is not a positive finite number",
                    i + 1
                )));
            }
            if i > 0 && v < values[i - 1] {
                return Err(Error::NotMonotone {
                    index: i + 1,
                    value: v,
                    prev_index: i,
                    prev: values[i - 1],
                });
            }
        }
        Ok(Self::from_family(WeightFamily::Table { values }))
    }

    /// Build from a validated family description (e.g. a deserialized config).
    pub fn from_family_checked(family: WeightFamily) -> Result<Self> {
        match family {
            WeightFamily::Power { alpha } => Self::power(alpha),
            WeightFamily::Table { values } => Self::table(values),
        }
    }

    fn from_family(family: WeightFamily) -> Self {
        WeightRule {
            family,
            cache: RwLock::new(PrefixCache::default()),
        }
    }

    /// Load a one-column CSV with header `lambda`; row `i` holds `lambda_i`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 1 || &headers[0] != "lambda" {
            return Err(Error::InvalidInput(format!(
                "expected a single `lambda` column, found header {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut values = Vec::new();
        for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| Error::InvalidInput(format!("row {}: {e}", i + 1)))?;
            values.push(row.lambda);
            if values.len() > TABLE_CAP {
                return Err(Error::InvalidInput(format!(
                    "weight table exceeds the cap of {TABLE_CAP} entries"
                )));
            }
        }
        Self::table(values)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn family(&self) -> &WeightFamily {
        &self.family
    }

    /// Number of available weights; `None` for the unbounded power family.
    pub fn len(&self) -> Option<usize> {
        match &self.family {
            WeightFamily::Power { .. } => None,
            WeightFamily::Table { values } => Some(values.len()),
        }
    }

    fn check_index(&self, k: usize) -> Result<()> {
        match self.len() {
            Some(len) if k > len => Err(Error::OutOfRange { index: k, len }),
            _ => Ok(()),
        }
    }

    #[inline]
    fn lambda_unchecked(&self, k: usize) -> f64 {
        match &self.family {
            WeightFamily::Power { alpha } => power_weight(*alpha, k),
            WeightFamily::Table { values } => values[k - 1],
        }
    }

    /// `lambda_k` for `k >= 1`.
    pub fn lambda(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidInput("weights are indexed from k = 1".into()));
        }
        self.check_index(k)?;
        Ok(self.lambda_unchecked(k))
    }

    /// `Lambda_k = lambda_1 + ... + lambda_k`, with `Lambda_0 = 0`.
    pub fn cumulative(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        {
            let cache = self.cache.read().expect("prefix cache poisoned");
            if let Some(&v) = cache.cum.get(k) {
                return Ok(v);
            }
        }
        let mut cache = self.cache.write().expect("prefix cache poisoned");
        while cache.cum.len() <= k {
            let next = cache.cum.len();
            let w = self.lambda_unchecked(next);
            cache.acc.add(w);
            let v = cache.acc.value();
            cache.cum.push(v);
        }
        Ok(cache.cum[k])
    }

    /// Streaming iterator over `(k, lambda_k, Lambda_k)` for `k = 1, 2, ...`.
    ///
    /// Produces the same bits as [`WeightRule::cumulative`] without caching,
    /// for horizons too long to store.
    pub fn iter(&self) -> WeightIter<'_> {
        WeightIter {
            rule: self,
            k: 0,
            acc: NeumaierSum::new(),
        }
    }

    /// Materialize `lambda_1..lambda_n` and `Lambda_0..Lambda_n`.
    pub fn prefix(&self, n: usize) -> Result<Prefix> {
        self.check_index(n)?;
        let mut lambda = Vec::with_capacity(n + 1);
        let mut cum = Vec::with_capacity(n + 1);
        lambda.push(0.0);
        cum.push(0.0);
        for (_, w, c) in self.iter().take(n) {
            lambda.push(w);
            cum.push(c);
        }
        Ok(Prefix { lambda, cum })
    }

    /// The supremum `L = sup_n (Lambda_{n+1}/lambda_{n+1} - Lambda_n/lambda_n)`.
    ///
    /// For `k^alpha` with `alpha = 0` or `alpha >= 1` the differences increase
    /// to `1/(alpha+1)` and that closed value is returned. Otherwise the
    /// maximum over `1 <= n <= horizon-1` is returned, flagged inexact.
    pub fn estimate_l(&self, horizon: usize) -> Result<LEstimate> {
        if horizon < 2 {
            return Err(Error::InvalidInput("L needs a horizon of at least 2".into()));
        }
        if let WeightFamily::Power { alpha } = self.family {
            if alpha == 0.0 || alpha >= 1.0 {
                return Ok(LEstimate {
                    value: 1.0 / (alpha + 1.0),
                    exact: true,
                    witness: horizon - 1,
                });
            }
        }
        let horizon = self.len().map_or(horizon, |len| horizon.min(len));
        if horizon < 2 {
            return Err(Error::InvalidInput("weight table needs at least 2 entries".into()));
        }
        let prefix = self.prefix(horizon)?;
        let (witness, value) = prefix
            .spacings()
            .fold((1, f64::NEG_INFINITY), |best, (n, d)| if d > best.1 { (n, d) } else { best });
        Ok(LEstimate {
            value,
            exact: false,
            witness,
        })
    }
}

/// See [`WeightRule::iter`].
pub struct WeightIter<'a> {
    rule: &'a WeightRule,
    k: usize,
    acc: NeumaierSum,
}

impl Iterator for WeightIter<'_> {
    type Item = (usize, f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        let k = self.k + 1;
        if self.rule.check_index(k).is_err() {
            return None;
        }
        self.k = k;
        let w = self.rule.lambda_unchecked(k);
        self.acc.add(w);
        Some((k, w, self.acc.value()))
    }
}

/// Dense weights and prefix sums; index 0 holds the `lambda_0 = Lambda_0 = 0`
/// convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefix {
    pub lambda: Vec<f64>,
    pub cum: Vec<f64>,
}

impl Prefix {
    pub fn n(&self) -> usize {
        self.lambda.len() - 1
    }

    /// `Lambda_k / lambda_k`.
    #[inline]
    pub fn ratio(&self, k: usize) -> f64 {
        self.cum[k] / self.lambda[k]
    }

    /// `(n, Lambda_{n+1}/lambda_{n+1} - Lambda_n/lambda_n)` for `n = 1..N-1`.
    pub fn spacings(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (1..self.n()).map(move |n| (n, self.ratio(n + 1) - self.ratio(n)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LEstimate {
    pub value: f64,
    /// `true` when `value` is the closed-form supremum rather than a horizon maximum.
    pub exact: bool,
    /// Index attaining the horizon maximum (the last index for closed values).
    pub witness: usize,
}

/// `g_k(x)`; `g_k(1/p) >= 0` is equivalent to the pointwise condition
/// `1 - L/p >= (Lambda_k/lambda_k)(1 - (Lambda_k/Lambda_{k+1})^{(p-1)/p} (lambda_k/lambda_{k+1})^{1/p})`.
///
/// Evaluated in the cancellation-free form
/// `(1 - 1/s) expm1(x log1p((s-r)/r)) - 1/s + (1 - L x)/r`
/// with `r = Lambda_k/lambda_k`, `s = Lambda_{k+1}/lambda_{k+1}`.
pub fn g_eval(rule: &WeightRule, k: usize, x: f64, l: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("g_k is defined for k >= 1".into()));
    }
    let prefix = rule.prefix(k + 1)?;
    Ok(g_from_prefix(&prefix, k, x, l))
}

#[inline]
fn g_from_prefix(prefix: &Prefix, k: usize, x: f64, l: f64) -> f64 {
    let r = prefix.ratio(k);
    let s = prefix.ratio(k + 1);
    let growth = (x * ((s - r) / r).ln_1p()).exp_m1();
    (1.0 - 1.0 / s) * growth - 1.0 / s + (1.0 - l * x) / r
}

/// Whether a verdict is a direct check over the horizon or rests on a fitted
/// asymptotic constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub condition: &'static str,
    pub holds: bool,
    pub evidence: Evidence,
    pub witness_index: usize,
    pub witness_value: f64,
}

/// Largest `|k^2 d_k|` over the upper half of the horizon and over the
/// quarter before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticFit {
    pub constant: f64,
    pub previous_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub l: f64,
    pub l_exact: bool,
    pub p: f64,
    pub horizon: usize,
    /// `L <= 1`.
    pub sup_spacing: Verdict,
    /// `sup lambda_{k+1}/lambda_k < inf`.
    pub bounded_ratio: Verdict,
    /// `lambda_k/lambda_{k+1} = 1 - (1/L - 1)/k + O(1/k^2)`.
    pub ratio_expansion: Verdict,
    /// `lambda_k/Lambda_k = 1/(L k) + O(1/k^2)`.
    pub density_expansion: Verdict,
    /// `inf (Lambda_{k+1}/lambda_{k+1} - Lambda_k/lambda_k) > 0`.
    pub inf_spacing: Verdict,
    /// `g_k(1/p) >= 0` at every `k` in the horizon.
    pub pointwise: Verdict,
    /// Smallest `k0` such that the pointwise condition holds for all
    /// `k0 <= k < horizon`.
    pub pointwise_holds_from: Option<usize>,
    pub ratio_expansion_fit: AsymptoticFit,
    pub density_expansion_fit: AsymptoticFit,
}

impl ConditionReport {
    pub fn verdicts(&self) -> [&Verdict; 6] {
        [
            &self.sup_spacing,
            &self.bounded_ratio,
            &self.ratio_expansion,
            &self.density_expansion,
            &self.inf_spacing,
            &self.pointwise,
        ]
    }

    pub fn all_exact_hold(&self) -> bool {
        self.verdicts()
            .iter()
            .filter(|v| v.evidence == Evidence::Exact)
            .all(|v| v.holds)
    }

    pub fn all_hold(&self) -> bool {
        self.verdicts().iter().all(|v| v.holds)
    }
}

/// Max of `|k^2 d_k|` over `lo..=hi` together with its index.
fn window_max(lo: usize, hi: usize, d: impl Fn(usize) -> f64) -> (usize, f64) {
    (lo..=hi)
        .map(|k| {
            let kf = k as f64;
            (k, (kf * kf * d(k)).abs())
        })
        .fold((lo, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}

fn expansion_verdict(
    condition: &'static str,
    horizon: usize,
    d: impl Fn(usize) -> f64,
) -> (Verdict, AsymptoticFit) {
    let last = horizon - 1;
    let half = (horizon / 2).max(1);
    let quarter = (horizon / 4).max(1);
    let (witness_index, constant) = window_max(half, last, &d);
    let (_, previous_window) = window_max(quarter, half.saturating_sub(1).max(quarter), &d);
    // A genuinely O(1/k^2) deviation keeps k^2 |d_k| from growing between
    // successive windows.
    let holds = constant.is_finite() && constant <= (2.0 * previous_window).max(1e-9);
    (
        Verdict {
            condition,
            holds,
            evidence: Evidence::Heuristic,
            witness_index,
            witness_value: constant,
        },
        AsymptoticFit {
            constant,
            previous_window,
        },
    )
}

/// Evaluate all six admissibility conditions over indices up to `horizon`.
pub fn check_conditions(rule: &WeightRule, p: f64, horizon: usize) -> Result<ConditionReport> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("p must be finite and >= 2, got {p}")));
    }
    if horizon < 3 {
        return Err(Error::InvalidInput("condition horizon must be at least 3".into()));
    }
    let horizon = rule.len().map_or(horizon, |len| horizon.min(len));
    if horizon < 3 {
        return Err(Error::InvalidInput("weight table needs at least 3 entries".into()));
    }
    let prefix = rule.prefix(horizon)?;
    let est = rule.estimate_l(horizon)?;
    let l = est.value;

    let sup_spacing = Verdict {
        condition: "spacing limit L <= 1",
        holds: l > 0.0 && l <= 1.0,
        evidence: Evidence::Exact,
        witness_index: est.witness,
        witness_value: l,
    };

    let (ratio_idx, ratio_max) = (1..horizon)
        .map(|k| (k, prefix.lambda[k + 1] / prefix.lambda[k]))
        .fold((1, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
    let bounded_ratio = Verdict {
        condition: "sup lambda_{k+1}/lambda_k finite",
        holds: ratio_max.is_finite(),
        evidence: Evidence::Exact,
        witness_index: ratio_idx,
        witness_value: ratio_max,
    };

    let shift = 1.0 / l - 1.0;
    let (ratio_expansion, ratio_expansion_fit) =
        expansion_verdict("lambda_k/lambda_{k+1} = 1 - (1/L - 1)/k + O(1/k^2)", horizon, |k| {
            prefix.lambda[k] / prefix.lambda[k + 1] - 1.0 + shift / k as f64
        });
    let (density_expansion, density_expansion_fit) =
        expansion_verdict("lambda_k/Lambda_k = 1/(L k) + O(1/k^2)", horizon, |k| {
            prefix.lambda[k] / prefix.cum[k] - 1.0 / (l * k as f64)
        });

    let (gap_idx, gap_min) = prefix
        .spacings()
        .fold((1, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    let inf_spacing = Verdict {
        condition: "inf spacing > 0",
        holds: gap_min > 0.0,
        evidence: Evidence::Exact,
        witness_index: gap_idx,
        witness_value: gap_min,
    };

    let x = 1.0 / p;
    let g: Vec<f64> = (1..horizon).map(|k| g_from_prefix(&prefix, k, x, l)).collect();
    let (g_idx, g_min) = g
        .iter()
        .enumerate()
        .fold((1, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i + 1, v) } else { b });
    let pointwise_holds_from = match g.iter().rposition(|&v| !(v >= 0.0)) {
        None => Some(1),
        Some(i) if i + 1 < g.len() => Some(i + 2),
        Some(_) => None,
    };
    let pointwise = Verdict {
        condition: "g_k(1/p) >= 0 for every k",
        holds: g_min >= 0.0,
        evidence: Evidence::Exact,
        witness_index: g_idx,
        witness_value: g_min,
    };

    Ok(ConditionReport {
        l,
        l_exact: est.exact,
        p,
        horizon,
        sup_spacing,
        bounded_ratio,
        ratio_expansion,
        density_expansion,
        inf_spacing,
        pointwise,
        pointwise_holds_from,
        ratio_expansion_fit,
        density_expansion_fit,
    })
}
