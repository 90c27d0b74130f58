use nalgebra::DVector;

use crate::geom::HyperRect;
use crate::model::{DynamicsModel, ProblemSpec};
use crate::nominal::NominalTrajectory;
use crate::{Error, Result};

/// Settings of the tube heuristic.
///
/// Initial state radii are `min(state_fraction * d, d - margin)` per
/// coordinate, where `d` is the clearance of the nominal state to the nearest
/// constraint face; input radii are `input_fraction` times the distance of
/// the nominal input to the input bounds. When a backward step fails, the
/// radii of coordinates that enter the Hessian are multiplied by `shrink`
/// (see [`RefineScope`]) and the sweep restarts, at most `budget` times.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeParams {
    pub state_fraction: f64,
    pub input_fraction: f64,
    pub margin: f64,
    pub shrink: f64,
    pub budget: usize,
    /// A step is also rejected when the subtracted error box exceeds this
    /// fraction of the next set's half-width in some coordinate. Zero
    /// disables the check.
    pub max_error_ratio: f64,
    pub intersection: Intersection,
    /// With per-generator intersection, each set must keep a box of
    /// `core_factor * gamma * w` around its center. Zero disables.
    pub core_factor: f64,
    /// Refinement never shrinks a state radius below this multiple of the
    /// inflated disturbance bound.
    pub state_floor: f64,
    pub scope: RefineScope,
}

/// Which tubes a failed sweep shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefineScope {
    /// Only the failing step.
    Step,
    /// Every step, so the whole sweep restarts from a uniformly tighter
    /// linearization.
    #[default]
    Global,
}

/// How a backward set is fitted into its state tube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Intersection {
    /// One scale for all generators, closed form.
    Uniform,
    /// One scale per generator, from a small LP.
    #[default]
    PerGenerator,
}

impl Default for TubeParams {
    fn default() -> Self {
        Self {
            state_fraction: 0.9,
            input_fraction: 0.5,
            margin: 0.02,
            shrink: 0.7,
            budget: 20,
            max_error_ratio: 0.5,
            intersection: Intersection::default(),
            core_factor: 1.2,
            state_floor: 3.0,
            scope: RefineScope::default(),
        }
    }
}

impl TubeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.state_fraction > 0.0
            && self.state_fraction <= 1.0
            && self.input_fraction > 0.0
            && self.input_fraction <= 1.0
            && self.margin >= 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.max_error_ratio >= 0.0
            && self.core_factor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid tube parameters: {self:?}")))
        }
    }
}

/// State tubes `x[0..=N]` and input tubes `u[0..N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tubes {
    pub x: Vec<HyperRect>,
    pub u: Vec<HyperRect>,
}

/// Per-coordinate distance from `x` to the nearest face that bounds it: the
/// operating domain faces, and the faces of every unsafe piece whose extent
/// in that coordinate does not contain `x`.
///
/// A box around `x` with radii below these distances avoids every piece,
/// because `x` lies outside each piece in at least one coordinate.
pub fn state_clearance(spec: &ProblemSpec, x: &DVector<f64>) -> DVector<f64> {
    let o = &spec.operating;
    DVector::from_fn(x.len(), |j, _| {
        let mut d = (x[j] - o.lower()[j]).min(o.upper()[j] - x[j]);
        for p in spec.unsafe_region.pieces() {
            if p.lower()[j] > x[j] {
                d = d.min(p.lower()[j] - x[j]);
            }
            if p.upper()[j] < x[j] {
                d = d.min(x[j] - p.upper()[j]);
            }
        }
        d
    })
}

/// Per-coordinate half-widths of a box around `x` that stays inside the
/// operating domain and misses every unsafe piece.
///
/// Each piece only has to be separated in one coordinate. Pieces already
/// separated by the current radii cost nothing; otherwise the coordinate
/// with the widest gap is cut. Wider than [`state_clearance`], which cuts
/// every coordinate with a gap.
pub fn free_box_clearance(spec: &ProblemSpec, x: &DVector<f64>) -> DVector<f64> {
    let o = &spec.operating;
    let mut d = DVector::from_fn(x.len(), |j, _| (x[j] - o.lower()[j]).min(o.upper()[j] - x[j]));
    for p in spec.unsafe_region.pieces() {
        let gap = |j: usize| {
            if p.lower()[j] > x[j] {
                Some(p.lower()[j] - x[j])
            } else if p.upper()[j] < x[j] {
                Some(x[j] - p.upper()[j])
            } else {
                None
            }
        };
        if (0..x.len()).any(|j| gap(j).is_some_and(|g| d[j] < g)) {
            continue;
        }
        let widest = (0..x.len())
            .filter_map(|j| gap(j).map(|g| (j, g)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match widest {
            Some((j, g)) => d[j] = d[j].min(g),
            // Inside the piece.
            None => d.fill(0.0),
        }
    }
    d
}

fn radius_from_clearance(d: f64, p: &TubeParams) -> f64 {
    (p.state_fraction * d).min(d - p.margin)
}

/// Tubes at their clearance-capped maxima.
pub fn initial_tubes(spec: &ProblemSpec, traj: &NominalTrajectory, params: &TubeParams) -> Result<Tubes> {
    params.validate()?;
    let n = traj.horizon();
    let mut x = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let xk = traj.state(k);
        let d = if k == n {
            let t = &spec.target;
            DVector::from_fn(xk.len(), |j, _| (xk[j] - t.lower()[j]).min(t.upper()[j] - xk[j]))
        } else {
            free_box_clearance(spec, xk)
        };
        let r = d.map(|d| radius_from_clearance(d, params));
        if let Some(j) = r.iter().position(|r| !(*r > 0.0)) {
            return Err(Error::BrsEmpty {
                step: k,
                reason: format!("nominal state has clearance {:.4} in coordinate {j}, below the margin", d[j]),
                trace: String::new(),
            });
        }
        x.push(HyperRect::from_center_radius(xk, &r)?);
    }
    let mut u = Vec::with_capacity(n);
    for k in 0..n {
        let uk = traj.input(k);
        let b = &spec.inputs;
        let r = DVector::from_fn(uk.len(), |j, _| {
            params.input_fraction * (uk[j] - b.lower()[j]).min(b.upper()[j] - uk[j])
        });
        u.push(HyperRect::from_center_radius(uk, &r.map(|v| v.max(0.0)))?);
    }
    Ok(Tubes { x, u })
}

/// Coordinates of `[x; u]` that appear in a nonzero Hessian bound entry over
/// the given tubes. Shrinking any other radius cannot reduce the
/// linearization error.
pub fn curvature_coordinates(model: &dyn DynamicsModel, tx: &HyperRect, tu: &HyperRect) -> Vec<usize> {
    let d = tx.dim() + tu.dim();
    let mut used = vec![false; d];
    for i in 0..model.state_dim() {
        let h = model.hessian_bound(i, tx, tu);
        for p in 0..d {
            for q in 0..d {
                if h[(p, q)] != 0.0 {
                    used[p] = true;
                    used[q] = true;
                }
            }
        }
    }
    (0..d).filter(|&p| used[p]).collect()
}

/// Scales the radii of the selected `[x; u]` coordinates about the tube
/// centers. State radii stop at `floor` (never growing); returns whether
/// any radius changed.
pub(crate) fn shrink_coordinates(
    tx: &mut HyperRect,
    tu: &mut HyperRect,
    centers: (&DVector<f64>, &DVector<f64>),
    coords: &[usize],
    factor: f64,
    floor: &DVector<f64>,
) -> bool {
    let n = tx.dim();
    let (cx, cu) = centers;
    let (mut rx, mut ru) = (tx.radius(), tu.radius());
    let mut changed = false;
    for &p in coords {
        if p < n {
            let r = (rx[p] * factor).max(floor[p]).min(rx[p]);
            changed |= r < rx[p];
            rx[p] = r;
        } else {
            changed |= ru[p - n] > 0.0;
            ru[p - n] *= factor;
        }
    }
    *tx = HyperRect::from_center_radius(cx, &rx).expect("scaled radii stay nonnegative");
    *tu = HyperRect::from_center_radius(cu, &ru).expect("scaled radii stay nonnegative");
    changed
}
