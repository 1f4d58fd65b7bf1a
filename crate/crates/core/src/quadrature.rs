//! Globally adaptive 7/15-point Gauss–Kronrod quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::specfun::{AccuracySpec, NeumaierSum};

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
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive integrator configuration.
#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub tolerance: AccuracySpec,
    pub max_intervals: usize,
}

impl Integrator {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            tolerance: AccuracySpec { abs_tol, rel_tol },
            max_intervals: 4000,
        }
    }

    /// Integrates `f` over `[points[0], points.last()]`, starting from the
    /// panels delimited by `points` (use interior points at kinks).
    pub fn integrate<F>(&self, mut f: F, points: &[f64]) -> Result<QuadResult>
    where
        F: FnMut(f64) -> f64,
    {
        if points.len() < 2 {
            return Err(Error::Domain("integrate: need at least two points".into()));
        }
        let mut heap = BinaryHeap::new();
        let mut evaluations = 0;
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(a.is_finite() && b.is_finite()) || b < a {
                return Err(Error::Domain(format!("integrate: bad panel [{a}, {b}]")));
            }
            if b == a {
                continue;
            }
            heap.push(gk15(&mut f, a, b));
            evaluations += 15;
        }
        loop {
            let (value, error) = totals(&heap);
            if !value.is_finite() {
                return Err(Error::Numerical("integrate: non-finite integrand".into()));
            }
            if error <= self.tolerance.bound(value) || heap.is_empty() {
                return Ok(QuadResult {
                    value,
                    error,
                    evaluations,
                });
            }
            if heap.len() >= self.max_intervals {
                return Err(Error::Numerical(format!(
                    "integrate: no convergence after {} panels (value {value:e}, error {error:e})",
                    heap.len()
                )));
            }
            let worst = heap.pop().expect("non-empty heap");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // panel can no longer be split; accept it as is
                let (value, error) = totals(&heap);
                return Ok(QuadResult {
                    value: value + worst.value,
                    error: error + worst.error,
                    evaluations,
                });
            }
            heap.push(gk15(&mut f, worst.a, mid));
            heap.push(gk15(&mut f, mid, worst.b));
            evaluations += 30;
        }
    }
}

fn totals(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    let mut v = NeumaierSum::new();
    let mut e = 0.0;
    for p in heap.iter() {
        v.add(p.value);
        e += p.error;
    }
    (v.value(), e)
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
        self.error.total_cmp(&other.error) == Ordering::Equal
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

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}
