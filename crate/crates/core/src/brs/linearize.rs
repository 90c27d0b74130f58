use nalgebra::{DMatrix, DVector};

use crate::geom::HyperRect;
use crate::model::{uniform_in, DynamicsModel};

/// Affine model `A x + B u + c` at a nominal point, with the error box
/// `[-e, e]` valid over the tubes it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationStep {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub error: DVector<f64>,
}

impl LinearizationStep {
    pub fn new(
        model: &dyn DynamicsModel,
        x: &DVector<f64>,
        u: &DVector<f64>,
        tx: &HyperRect,
        tu: &HyperRect,
    ) -> Self {
        let (a, b) = model.jacobians(x, u);
        let c = model.step(x, u) - &a * x - &b * u;
        let error = linearization_error(model, tx, tu);
        Self { a, b, c, error }
    }

    pub fn affine(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.c
    }

    /// `W + [-e, e]` for a disturbance box `[-w, w]`.
    pub fn error_set(&self, w: &DVector<f64>) -> HyperRect {
        HyperRect::symmetric(&(w + &self.error)).expect("error box is nonnegative")
    }
}

/// `e_i = 1/2 r^T H_i r` with `r = [r_x; r_u]` the tube radii and `H_i`
/// the entry-wise Hessian bound of `f_i` over the tubes.
pub fn linearization_error(model: &dyn DynamicsModel, tx: &HyperRect, tu: &HyperRect) -> DVector<f64> {
    let r: DVector<f64> = DVector::from_iterator(
        tx.dim() + tu.dim(),
        tx.radius().iter().chain(tu.radius().iter()).copied(),
    );
    DVector::from_fn(model.state_dim(), |i, _| {
        let h = model.hessian_bound(i, tx, tu);
        0.5 * (r.transpose() * h * &r)[0]
    })
}

/// Samples `(x, u)` from `tx x tu` and checks `|f - affine| <= e`
/// coordinate-wise.
pub fn conservative_linearization_check(
    step: &LinearizationStep,
    model: &dyn DynamicsModel,
    tx: &HyperRect,
    tu: &HyperRect,
    samples: usize,
    seed: u64,
) -> bool {
    let mut rng = crate::rng_from_seed(seed);
    (0..samples).all(|_| {
        let x = uniform_in(tx, &mut rng);
        let u = uniform_in(tu, &mut rng);
        let gap = model.step(&x, &u) - step.affine(&x, &u);
        (0..gap.len()).all(|i| gap[i].abs() <= step.error[i] + 1e-12)
    })
}
