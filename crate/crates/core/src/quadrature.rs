//! Adaptive Gauss-Kronrod (7, 15) quadrature by panel bisection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Panels allowed before giving up.
const MAX_PANELS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * half, (k - g).abs() * half)
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// `int_a^b f(x) dx` to absolute tolerance `tol`.
///
/// Global adaptive: the panel with the largest error estimate is bisected
/// until the summed estimate drops below `tol`, or below the roundoff floor
/// `50 eps |value|` when `tol` is unattainably small.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("quadrature tolerance must be positive, got {tol}")));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidInput("quadrature limits must be finite".into()));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let panel = |a: f64, b: f64| -> Result<Panel> {
        let (value, error) = kronrod(&f, a, b);
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::NonFinite("quadrature"));
        }
        Ok(Panel { a, b, value, error })
    };

    let mut heap = BinaryHeap::new();
    heap.push(panel(lo, hi)?);
    let mut evaluations = 15;
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        let floor = 50.0 * f64::EPSILON * heap.iter().map(|p| p.value.abs()).sum::<f64>();
        if error <= tol.max(floor) {
            return Ok(Quadrature {
                value: sign * value,
                error,
                evaluations,
            });
        }
        if heap.len() >= MAX_PANELS {
            return Err(Error::NotConverged {
                method: "adaptive quadrature",
                iterations: evaluations,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further; keep its estimate.
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        heap.push(panel(worst.a, mid)?);
        heap.push(panel(mid, worst.b)?);
        evaluations += 30;
    }
}
