//! Small dense numerics: inverses, pseudoinverses, a bounded-variable
//! simplex used for zonotope membership and generator LPs, and outward
//! rounded interval arithmetic for Hessian bounds.

mod interval;
mod linalg;
pub mod simplex;

pub use interval::{interval_hessian_bound, Interval};
pub use linalg::{condition_number, invert, pseudoinverse, INVERT_MAX_CONDITION};
pub use simplex::{bounded_feasible, BoundedLp, LpOutcome};
