use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

/// Closed interval with outward-rounded arithmetic.
///
/// Every operation widens its result by one ulp on each side so that the
/// enclosure survives floating-point rounding; `sin`/`cos` widen by a few
/// ulps to cover libm error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval bounds out of order: [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn widened(lo: f64, hi: f64) -> Self {
        Self {
            lo: lo.next_down(),
            hi: hi.next_up(),
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn sin(self) -> Self {
        // sin peaks at pi/2 + 2k pi and bottoms at -pi/2 + 2k pi.
        self.periodic(f64::sin, PI / 2.0, -PI / 2.0)
    }

    pub fn cos(self) -> Self {
        self.periodic(f64::cos, 0.0, PI)
    }

    fn periodic(self, f: fn(f64) -> f64, peak: f64, trough: f64) -> Self {
        if self.width() >= TAU {
            return Self::new(-1.0, 1.0);
        }
        let (a, b) = (f(self.lo), f(self.hi));
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        if hits(self.lo, self.hi, peak) {
            hi = 1.0;
        }
        if hits(self.lo, self.hi, trough) {
            lo = -1.0;
        }
        let pad = 4.0 * f64::EPSILON;
        Self {
            lo: (lo - pad).max(-1.0),
            hi: (hi + pad).min(1.0),
        }
    }
}

/// Whether `[lo, hi]` contains `phase + 2k pi` for some integer `k`.
fn hits(lo: f64, hi: f64, phase: f64) -> bool {
    let k = ((lo - phase) / TAU).ceil();
    // Slack absorbs the rounding in forming phase + k * TAU.
    phase + k * TAU <= hi + 1e-12 || phase + (k - 1.0) * TAU >= lo - 1e-12
}

impl From<f64> for Interval {
    fn from(v: f64) -> Self {
        Self::point(v)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::widened(self.lo + o.lo, self.hi + o.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::widened(self.lo - o.hi, self.hi - o.lo)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::widened(lo, hi)
    }
}

impl Mul<Interval> for f64 {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        Interval::point(self) * o
    }
}

/// Entry-wise magnitude bound of a Hessian over a box.
///
/// `hessian` returns the `(n+m) x (n+m)` interval Hessian (row-major) of one
/// component of `f`, evaluated on the interval vector `[x; u]`. The result
/// dominates `sup |Hess_{p,q}|` over `tx x tu`.
pub fn interval_hessian_bound<F>(hessian: F, tx: &[Interval], tu: &[Interval]) -> DMatrix<f64>
where
    F: Fn(&[Interval]) -> Vec<Interval>,
{
    let z: Vec<Interval> = tx.iter().chain(tu).copied().collect();
    let d = z.len();
    let h = hessian(&z);
    assert_eq!(h.len(), d * d, "interval Hessian has wrong size");
    DMatrix::from_row_iterator(d, d, h.iter().map(Interval::mag))
}
