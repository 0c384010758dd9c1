//! Direct maximization of `sum A_n^p / sum a_n^p` over positive vectors,
//! used as ground truth for the recurrence solver on small sections.
//!
//! `A_n = sum_{k<=n} lambda_k a_k / Lambda_n` is the weighted mean. At
//! `p = 2` the maximum is the largest eigenvalue of `C^T C` and plain power
//! iteration finds it. For general `p` the stationarity condition
//! `lambda_n sum_{m>=n} A_m^{p-1}/Lambda_m = mu a_n^{p-1}` suggests the
//! positive fixed-point sweep
//! `a_n <- (lambda_n sum_{m>=n} A_m^{p-1}/Lambda_m)^{1/(p-1)}`, renormalized
//! so that `sum a_n^p = 1`; at `p = 2` it is power iteration again.
//!
//! Both iterations start from the all-ones vector and stop when the
//! objective changes by less than `tol` between sweeps and the stationarity
//! residual is below `tol`.

use std::io::Write;

use serde::Serialize;

use crate::compensated::NeumaierSum;
use crate::error::{Error, Result};
use crate::weights::{Prefix, WeightRule};

/// Largest section the dense oracle accepts.
pub const DENSE_CAP: usize = 4096;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Lower-triangular weighted mean matrix, `entry(n, k) = lambda_k / Lambda_n`
/// for `k <= n`, packed by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrix {
    n: usize,
    packed: Vec<f64>,
}

impl MeanMatrix {
    pub fn new(n: usize, rule: &WeightRule) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("matrix size must be at least 1".into()));
        }
        if n > DENSE_CAP {
            return Err(Error::OracleCap { n, cap: DENSE_CAP });
        }
        let prefix = rule.prefix(n)?;
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for row in 1..=n {
            let total = prefix.cum[row];
            packed.extend((1..=row).map(|k| prefix.lambda[k] / total));
        }
        Ok(MeanMatrix { n, packed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row `n` (1-based), entries for `k = 1..=n`.
    pub fn row(&self, n: usize) -> &[f64] {
        let start = (n - 1) * n / 2;
        &self.packed[start..start + n]
    }

    pub fn entry(&self, n: usize, k: usize) -> f64 {
        if k > n {
            0.0
        } else {
            self.row(n)[k - 1]
        }
    }

    /// `C a`.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        (1..=self.n)
            .map(|n| self.row(n).iter().zip(a).map(|(c, x)| c * x).sum())
            .collect()
    }

    /// `C^T b`.
    pub fn apply_transpose(&self, b: &[f64]) -> Vec<f64> {
        (1..=self.n)
            .map(|k| (k..=self.n).map(|n| self.row(n)[k - 1] * b[n - 1]).sum())
            .collect()
    }

    /// Compensated row sums; each equals 1 up to roundoff.
    pub fn row_sums(&self) -> Vec<f64> {
        (1..=self.n).map(|n| crate::compensated::sum(self.row(n))).collect()
    }
}

/// A positive vector normalized to `sum a_n^p = 1`, with its weighted means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremalVector {
    pub a: Vec<f64>,
    pub objective: f64,
    #[serde(rename = "A")]
    pub means: Vec<f64>,
}

impl ExtremalVector {
    /// CSV with columns `n,a_n,A_n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "a_n", "A_n"])?;
        for (i, (a, m)) in self.a.iter().zip(&self.means).enumerate() {
            w.write_record([(i + 1).to_string(), a.to_string(), m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub value: f64,
    pub vector: ExtremalVector,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl IterationOptions {
    pub fn new(tol: f64) -> Self {
        IterationOptions {
            tol,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

fn prefix_for(a: &[f64], rule: &WeightRule) -> Result<Prefix> {
    if a.is_empty() {
        return Err(Error::InvalidInput("vector must be non-empty".into()));
    }
    rule.prefix(a.len())
}

fn means(a: &[f64], prefix: &Prefix) -> Vec<f64> {
    let mut acc = NeumaierSum::new();
    a.iter()
        .enumerate()
        .map(|(i, &x)| {
            acc.add(prefix.lambda[i + 1] * x);
            acc.value() / prefix.cum[i + 1]
        })
        .collect()
}

/// `sum A_n^p / sum a_n^p` for a non-negative, non-zero vector.
pub fn objective(a: &[f64], p: f64, rule: &WeightRule) -> Result<f64> {
    if a.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput("vector entries must be finite and >= 0".into()));
    }
    let prefix = prefix_for(a, rule)?;
    let denom: NeumaierSum = a.iter().map(|x| x.powf(p)).collect();
    let denom = denom.value();
    if denom == 0.0 {
        return Err(Error::InvalidInput("objective is undefined for the zero vector".into()));
    }
    let numer: NeumaierSum = means(a, &prefix).iter().map(|m| m.powf(p)).collect();
    Ok(numer.value() / denom)
}

/// Gradient of `sum A_n^p`: `p lambda_n sum_{m>=n} A_m^{p-1}/Lambda_m`.
pub fn gradient(a: &[f64], p: f64, rule: &WeightRule) -> Result<Vec<f64>> {
    let prefix = prefix_for(a, rule)?;
    Ok(half_gradient(&means(a, &prefix), p, &prefix)
        .into_iter()
        .map(|g| p * g)
        .collect())
}

/// `lambda_n sum_{m>=n} A_m^{p-1}/Lambda_m`, i.e. the gradient divided by `p`.
fn half_gradient(means: &[f64], p: f64, prefix: &Prefix) -> Vec<f64> {
    let n = means.len();
    let mut out = vec![0.0; n];
    let mut tail = NeumaierSum::new();
    for i in (0..n).rev() {
        tail.add(means[i].powf(p - 1.0) / prefix.cum[i + 1]);
        out[i] = prefix.lambda[i + 1] * tail.value();
    }
    out
}

/// `max_n |lambda_n sum_{m>=n} A_m^{p-1}/Lambda_m - mu a_n^{p-1}|`.
pub fn kkt_residual(v: &ExtremalVector, mu: f64, p: f64, rule: &WeightRule) -> Result<f64> {
    let prefix = prefix_for(&v.a, rule)?;
    let g = half_gradient(&means(&v.a, &prefix), p, &prefix);
    Ok(g
        .iter()
        .zip(&v.a)
        .map(|(g, a)| (g - mu * a.powf(p - 1.0)).abs())
        .fold(0.0, f64::max))
}

fn normalize(a: &mut [f64], p: f64) -> Result<()> {
    let norm: NeumaierSum = a.iter().map(|x| x.powf(p)).collect();
    let scale = norm.value().powf(-1.0 / p);
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::NonFinite("vector normalization"));
    }
    a.iter_mut().for_each(|x| *x *= scale);
    Ok(())
}

fn extremal(a: Vec<f64>, matrix: &MeanMatrix, p: f64) -> ExtremalVector {
    let means = matrix.apply(&a);
    let objective = means.iter().map(|m| m.powf(p)).collect::<NeumaierSum>().value();
    ExtremalVector { a, objective, means }
}

fn check_tol(opts: &IterationOptions) -> Result<()> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
    }
    Ok(())
}

/// `mu_N` at `p = 2`: largest eigenvalue of `C^T C` by power iteration.
pub fn norm_p2(n: usize, opts: IterationOptions, rule: &WeightRule) -> Result<OracleSolution> {
    check_tol(&opts)?;
    let matrix = MeanMatrix::new(n, rule)?;
    let mut v = extremal(vec![1.0; n], &matrix, 2.0);
    normalize(&mut v.a, 2.0)?;
    v = extremal(v.a, &matrix, 2.0);
    for it in 1..=opts.max_iter {
        let mut next = matrix.apply_transpose(&v.means);
        normalize(&mut next, 2.0)?;
        let next = extremal(next, &matrix, 2.0);
        if !next.objective.is_finite() {
            return Err(Error::NonFinite("power iteration"));
        }
        let delta = (next.objective - v.objective).abs();
        v = next;
        if delta < opts.tol && kkt_residual(&v, v.objective, 2.0, rule)? < opts.tol {
            return Ok(OracleSolution {
                value: v.objective,
                vector: v,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged {
        method: "power iteration",
        iterations: opts.max_iter,
    })
}

/// One sweep of the positive fixed-point map, normalized to `sum a^p = 1`.
pub fn fixed_point_sweep(a: &[f64], p: f64, rule: &WeightRule) -> Result<Vec<f64>> {
    let prefix = prefix_for(a, rule)?;
    let g = half_gradient(&means(a, &prefix), p, &prefix);
    let mut next: Vec<f64> = g.iter().map(|x| x.powf(1.0 / (p - 1.0))).collect();
    normalize(&mut next, p)?;
    if next.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(Error::NonFinite("fixed-point sweep"));
    }
    Ok(next)
}

/// `mu_N` for general `p >= 2` by the positive fixed-point iteration.
pub fn norm_general(
    n: usize,
    p: f64,
    opts: IterationOptions,
    rule: &WeightRule,
) -> Result<OracleSolution> {
    check_tol(&opts)?;
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("p must be finite and >= 2, got {p}")));
    }
    let matrix = MeanMatrix::new(n, rule)?;
    let mut a = vec![1.0; n];
    normalize(&mut a, p)?;
    let mut v = extremal(a, &matrix, p);
    for it in 1..=opts.max_iter {
        let next = extremal(fixed_point_sweep(&v.a, p, rule)?, &matrix, p);
        if !next.objective.is_finite() {
            return Err(Error::NonFinite("fixed-point iteration"));
        }
        let delta = (next.objective - v.objective).abs();
        v = next;
        if delta < opts.tol && kkt_residual(&v, v.objective, p, rule)? < opts.tol {
            return Ok(OracleSolution {
                value: v.objective,
                vector: v,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged {
        method: "fixed-point iteration",
        iterations: opts.max_iter,
    })
}
