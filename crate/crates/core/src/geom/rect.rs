use nalgebra::DVector;

use crate::error::check_dim;
use crate::numerics::Interval;
use crate::{Error, Result};

/// Closed axis-aligned hyper-rectangle `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRect {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl HyperRect {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len(), "box bounds")?;
        if lower.is_empty() {
            return Err(Error::Invalid("box must have dimension >= 1".into()));
        }
        for i in 0..lower.len() {
            if !(lower[i] <= upper[i]) {
                return Err(Error::Invalid(format!(
                    "box bound {i} out of order: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(lower), DVector::from_column_slice(upper))
    }

    /// `center + [-radius, radius]`.
    pub fn from_center_radius(center: &DVector<f64>, radius: &DVector<f64>) -> Result<Self> {
        check_dim(center.len(), radius.len(), "box radius")?;
        if radius.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::Invalid("box radius must be nonnegative".into()));
        }
        Self::new(center - radius, center + radius)
    }

    /// `[-w, w]`.
    pub fn symmetric(w: &DVector<f64>) -> Result<Self> {
        Self::from_center_radius(&DVector::zeros(w.len()), w)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    /// Half-widths.
    pub fn radius(&self) -> DVector<f64> {
        (&self.upper - &self.lower) * 0.5
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| self.lower[i] <= x[i] && x[i] <= self.upper[i])
    }

    /// Membership in the box shrunk by `margin[i]` on every side.
    pub fn contains_with_margin(&self, x: &DVector<f64>, margin: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && (0..self.dim())
                .all(|i| self.lower[i] + margin[i] < x[i] && x[i] < self.upper[i] - margin[i])
    }

    pub fn contains_box(&self, other: &HyperRect) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    /// Closed boxes intersect (touching faces count).
    pub fn intersects(&self, other: &HyperRect) -> Result<bool> {
        check_dim(self.dim(), other.dim(), "box intersection")?;
        Ok((0..self.dim())
            .all(|i| self.lower[i] <= other.upper[i] && other.lower[i] <= self.upper[i]))
    }

    /// Euclidean distance from `x` to the box, zero inside.
    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len(), "box distance")?;
        let mut s = 0.0;
        for i in 0..self.dim() {
            let d = if x[i] < self.lower[i] {
                self.lower[i] - x[i]
            } else if x[i] > self.upper[i] {
                x[i] - self.upper[i]
            } else {
                0.0
            };
            s += d * d;
        }
        Ok(s.sqrt())
    }

    /// Nearest point of the box to `x`.
    pub fn clamp(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| x[i].clamp(self.lower[i], self.upper[i]))
    }

    /// All `2^n` corners.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                DVector::from_fn(n, |i, _| {
                    if mask >> i & 1 == 1 {
                        self.upper[i]
                    } else {
                        self.lower[i]
                    }
                })
            })
            .collect()
    }

    pub fn to_intervals(&self) -> Vec<Interval> {
        (0..self.dim())
            .map(|i| Interval::new(self.lower[i], self.upper[i]))
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim()).all(|i| self.lower[i] == -self.upper[i])
    }
}

/// Union of closed boxes that the state must avoid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnsafeRegion {
    pieces: Vec<HyperRect>,
}

impl UnsafeRegion {
    pub fn new(pieces: Vec<HyperRect>) -> Result<Self> {
        if let Some(first) = pieces.first() {
            for p in &pieces {
                check_dim(first.dim(), p.dim(), "unsafe pieces")?;
            }
        }
        Ok(Self { pieces })
    }

    pub fn pieces(&self) -> &[HyperRect] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Index of the first piece containing `x`.
    pub fn piece_containing(&self, x: &DVector<f64>) -> Option<usize> {
        self.pieces.iter().position(|p| p.contains(x))
    }

    /// Indices of pieces the box touches.
    pub fn pieces_intersecting(&self, b: &HyperRect) -> Vec<usize> {
        self.pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.intersects(b).unwrap_or(true))
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn unit() -> HyperRect {
        HyperRect::from_slices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn distance_examples() {
        let b = unit();
        assert_eq!(b.distance(&dvector![0.3, -0.2]).unwrap(), 0.0);
        assert_eq!(b.distance(&dvector![2.0, 0.0]).unwrap(), 1.0);
        assert!((b.distance(&dvector![2.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(b.distance(&dvector![1.0]).is_err());
    }

    #[test]
    fn invariants_enforced() {
        assert!(HyperRect::from_slices(&[1.0], &[0.0]).is_err());
        assert!(HyperRect::from_slices(&[], &[]).is_err());
        assert!(HyperRect::from_slices(&[1.0], &[1.0]).is_ok());
        assert!(HyperRect::from_slices(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn intersection_and_containment() {
        let b = unit();
        let touching = HyperRect::from_slices(&[1.0, 0.0], &[2.0, 1.0]).unwrap();
        let apart = HyperRect::from_slices(&[1.5, 0.0], &[2.0, 1.0]).unwrap();
        assert!(b.intersects(&touching).unwrap());
        assert!(!b.intersects(&apart).unwrap());
        assert!(b.contains_box(&HyperRect::from_slices(&[0.0, 0.0], &[0.5, 1.0]).unwrap()));
        assert_eq!(b.vertices().len(), 4);
        assert!(b.contains_with_margin(&dvector![0.0, 0.0], &dvector![0.5, 0.5]));
        assert!(!b.contains_with_margin(&dvector![0.9, 0.0], &dvector![0.5, 0.5]));
    }
}
