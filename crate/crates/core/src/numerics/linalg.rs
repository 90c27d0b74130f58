use nalgebra::DMatrix;

use crate::{Error, Result};

/// Largest condition number [`invert`] accepts.
pub const INVERT_MAX_CONDITION: f64 = 1e10;

/// Relative singular-value cutoff for the pseudoinverse.
const PINV_RTOL: f64 = 1e-10;

/// Ratio of largest to smallest singular value; `inf` for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverts a square matrix, refusing ill-conditioned input.
///
/// `step` only labels the error so a failing time step of the backward
/// recursion can be identified.
pub fn invert(m: &DMatrix<f64>, step: Option<usize>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
            context: "invert: matrix must be square",
        });
    }
    let cond = condition_number(m);
    if !(cond <= INVERT_MAX_CONDITION) {
        return Err(Error::Singular { step, cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::Singular { step, cond })
}

/// Moore-Penrose pseudoinverse through the SVD, truncating singular values
/// below `1e-10` times the largest one.
pub fn pseudoinverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(c, r);
    }
    let eps = PINV_RTOL * smax;
    svd.pseudo_inverse(eps)
        .expect("both singular bases were computed")
}
