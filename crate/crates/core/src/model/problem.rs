use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;

use crate::geom::{HyperRect, UnsafeRegion};
use crate::{Error, Result};

/// Constraint geometry of a reach-avoid tracking problem.
///
/// The horizon is not stored here: it comes out of planning.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub operating: HyperRect,
    pub unsafe_region: UnsafeRegion,
    pub target: HyperRect,
    pub initial: HyperRect,
    pub inputs: HyperRect,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssumptionViolation {
    InitialOutsideOperating,
    TargetOutsideOperating,
    InitialHitsUnsafe { piece: usize },
    TargetHitsUnsafe { piece: usize },
}

impl std::fmt::Display for AssumptionViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::InitialOutsideOperating => write!(f, "initial set leaves the operating domain"),
            Self::TargetOutsideOperating => write!(f, "target set leaves the operating domain"),
            Self::InitialHitsUnsafe { piece } => {
                write!(f, "initial set intersects unsafe piece {piece}")
            }
            Self::TargetHitsUnsafe { piece } => write!(f, "target set intersects unsafe piece {piece}"),
        }
    }
}

impl ProblemSpec {
    pub fn new(
        operating: HyperRect,
        unsafe_region: UnsafeRegion,
        target: HyperRect,
        initial: HyperRect,
        inputs: HyperRect,
    ) -> Result<Self> {
        let n = operating.dim();
        for (what, d) in [("target", target.dim()), ("initial", initial.dim())] {
            if d != n {
                return Err(Error::Invalid(format!("{what} set has dimension {d}, expected {n}")));
            }
        }
        if let Some(p) = unsafe_region.pieces().iter().find(|p| p.dim() != n) {
            return Err(Error::Invalid(format!(
                "unsafe piece has dimension {}, expected {n}",
                p.dim()
            )));
        }
        Ok(Self {
            operating,
            unsafe_region,
            target,
            initial,
            inputs,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.operating.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.dim()
    }

    /// Checks that the initial and target sets lie in the safe part of the
    /// operating domain.
    pub fn violations(&self) -> Vec<AssumptionViolation> {
        let mut out = Vec::new();
        if !self.operating.contains_box(&self.initial) {
            out.push(AssumptionViolation::InitialOutsideOperating);
        }
        if !self.operating.contains_box(&self.target) {
            out.push(AssumptionViolation::TargetOutsideOperating);
        }
        for piece in self.unsafe_region.pieces_intersecting(&self.initial) {
            out.push(AssumptionViolation::InitialHitsUnsafe { piece });
        }
        for piece in self.unsafe_region.pieces_intersecting(&self.target) {
            out.push(AssumptionViolation::TargetHitsUnsafe { piece });
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            return Ok(());
        }
        let msg: Vec<String> = v.iter().map(ToString::to_string).collect();
        Err(Error::Invalid(msg.join("; ")))
    }

    /// The Dubin's car benchmark geometry with a singleton initial set.
    pub fn dubins_benchmark(start: [f64; 3]) -> Self {
        let b = |lo: [f64; 3], hi: [f64; 3]| HyperRect::from_slices(&lo, &hi).unwrap();
        let h = FRAC_PI_2;
        let unsafe_region = UnsafeRegion::new(vec![
            b([1.5, 0.0, -h], [3.0, 0.5, h]),
            b([1.5, 1.0, -h], [2.5, 2.0, h]),
            b([3.5, 0.0, -h], [4.5, 1.0, h]),
        ])
        .unwrap();
        Self {
            operating: b([0.0, 0.0, -h], [5.0, 2.0, h]),
            unsafe_region,
            target: b([3.5, 1.5, -PI / 5.0], [5.0, 2.0, PI / 5.0]),
            initial: HyperRect::new(DVector::from_row_slice(&start), DVector::from_row_slice(&start))
                .unwrap(),
            inputs: HyperRect::from_slices(&[-8.0, -5.0], &[8.0, 5.0]).unwrap(),
        }
    }
}
