//! Safe tracking controllers for disturbed discrete-time nonlinear systems.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`nominal`]: plan and validate a disturbance-free reference trajectory.
//! 2. [`brs`]: conservatively linearize along it and compute zonotopic
//!    backward reachable sets together with state/input tubes.
//! 3. [`controller`]: train one structured network per time step that drives
//!    states of each set toward the center of the next deflated set.
//! 4. [`rollout`] + [`conformal`]: simulate the closed loop under random
//!    disturbances and certify the batch with a conformal quantile.
//!
//! Set algebra lives in [`geom`], dense linear algebra, the bounded simplex
//! and interval arithmetic in [`numerics`], and dynamics in [`model`].

pub mod brs;
pub mod conformal;
pub mod controller;
mod error;
pub mod geom;
pub mod model;
pub mod nominal;
pub mod numerics;
pub mod par;
pub mod rollout;

pub use error::{Error, Result};

/// Deterministic generator used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer. Used to derive independent per-item seeds from a
/// base seed and an index.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
