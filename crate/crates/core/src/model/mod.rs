//! Dynamics `x+ = f(x, u) + w`, the problem geometry, and the built-in
//! Dubin's car.

mod dubins;
mod problem;

use nalgebra::{DMatrix, DVector};

use crate::geom::HyperRect;
use crate::numerics::{condition_number, interval_hessian_bound, Interval};

pub use dubins::Dubins;
pub use problem::{AssumptionViolation, ProblemSpec};

/// A twice continuously differentiable discrete-time model with analytic
/// Jacobians and interval Hessians.
///
/// The slice methods are the hot path (training, rollouts); the `DVector`
/// conveniences allocate.
pub trait DynamicsModel: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    /// Writes `D_x f` (n x n) and `D_u f` (n x m), both row-major.
    fn jacobians_into(&self, x: &[f64], u: &[f64], a: &mut [f64], b: &mut [f64]);

    /// Interval enclosure of the Hessian of component `i` of `f`, with
    /// respect to `z = [x; u]`, row-major `(n+m) x (n+m)`.
    fn interval_hessian(&self, component: usize, z: &[Interval]) -> Vec<Interval>;

    /// The disturbance box `[-w, w]`.
    fn disturbance(&self) -> &HyperRect;

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.state_dim());
        self.step_into(x.as_slice(), u.as_slice(), out.as_mut_slice());
        out
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n * m];
        self.jacobians_into(x.as_slice(), u.as_slice(), &mut a, &mut b);
        (DMatrix::from_row_slice(n, n, &a), DMatrix::from_row_slice(n, m, &b))
    }

    /// Entry-wise bound on `|Hess f_i|` over `tx x tu`.
    fn hessian_bound(&self, component: usize, tx: &HyperRect, tu: &HyperRect) -> DMatrix<f64> {
        interval_hessian_bound(
            |z| self.interval_hessian(component, z),
            &tx.to_intervals(),
            &tu.to_intervals(),
        )
    }
}

/// `f(x, u) = A x + B u + c`.
#[derive(Debug, Clone)]
pub struct AffineModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub disturbance: HyperRect,
}

impl AffineModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DVector<f64>, disturbance: HyperRect) -> Self {
        assert!(a.is_square() && a.nrows() == b.nrows() && c.len() == a.nrows());
        assert_eq!(disturbance.dim(), a.nrows());
        Self { a, b, c, disturbance }
    }
}

impl DynamicsModel for AffineModel {
    fn name(&self) -> &str {
        "affine"
    }

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (n, m) = (self.state_dim(), self.input_dim());
        for i in 0..n {
            let mut s = self.c[i];
            for j in 0..n {
                s += self.a[(i, j)] * x[j];
            }
            for j in 0..m {
                s += self.b[(i, j)] * u[j];
            }
            out[i] = s;
        }
    }

    fn jacobians_into(&self, _x: &[f64], _u: &[f64], a: &mut [f64], b: &mut [f64]) {
        let (n, m) = (self.state_dim(), self.input_dim());
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = self.a[(i, j)];
            }
            for j in 0..m {
                b[i * m + j] = self.b[(i, j)];
            }
        }
    }

    fn interval_hessian(&self, _component: usize, z: &[Interval]) -> Vec<Interval> {
        vec![Interval::point(0.0); z.len() * z.len()]
    }

    fn disturbance(&self) -> &HyperRect {
        &self.disturbance
    }
}

/// Sampled invertibility diagnostics for `D_x f`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertibilityReport {
    pub samples: usize,
    pub min_abs_det: f64,
    pub max_condition: f64,
    /// Largest `||D_x f - I||_inf`; below 1 certifies invertibility through
    /// the Neumann series for Euler-type models.
    pub max_perturbation_norm: f64,
    pub failures: usize,
}

impl InvertibilityReport {
    pub const MIN_ABS_DET: f64 = 1e-8;
    pub const MAX_CONDITION: f64 = 1e10;

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Samples `(x, u)` uniformly from `tx x tu` and checks `D_x f`.
pub fn check_jacobian_invertibility(
    model: &dyn DynamicsModel,
    tx: &HyperRect,
    tu: &HyperRect,
    samples: usize,
    seed: u64,
) -> InvertibilityReport {
    let mut rng = crate::rng_from_seed(seed);
    let mut report = InvertibilityReport {
        samples,
        min_abs_det: f64::INFINITY,
        max_condition: 0.0,
        max_perturbation_norm: 0.0,
        failures: 0,
    };
    let n = model.state_dim();
    for _ in 0..samples {
        let x = uniform_in(tx, &mut rng);
        let u = uniform_in(tu, &mut rng);
        let (a, _) = model.jacobians(&x, &u);
        let det = a.determinant().abs();
        let cond = condition_number(&a);
        let pert = &a - DMatrix::<f64>::identity(n, n);
        let norm = pert
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        report.min_abs_det = report.min_abs_det.min(det);
        report.max_condition = report.max_condition.max(cond);
        report.max_perturbation_norm = report.max_perturbation_norm.max(norm);
        if det < InvertibilityReport::MIN_ABS_DET || !(cond < InvertibilityReport::MAX_CONDITION) {
            report.failures += 1;
        }
    }
    report
}

pub(crate) fn uniform_in<R: rand::Rng + ?Sized>(b: &HyperRect, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(b.dim(), |i, _| {
        let (lo, hi) = (b.lower()[i], b.upper()[i]);
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    })
}
