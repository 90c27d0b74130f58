//! Axis-aligned boxes, zonotopes, and the set operations of the backward
//! recursion: exact linear maps and Minkowski sums, sound under-approximate
//! Minkowski differences and box intersections, hulls, and sampling.

mod rect;
pub mod text;
mod zonotope;

pub use rect::{HyperRect, UnsafeRegion};
pub use zonotope::{SampleMode, Zonotope, PRUNE_TOL};
