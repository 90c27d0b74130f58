//! Optimization-based one-step controller: search the input tube for the
//! input whose successor lies deepest in the next deflated set.

use nalgebra::DVector;

use super::train::StepTarget;
use crate::brs::BrsResult;
use crate::model::DynamicsModel;
use crate::nominal::NominalTrajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    /// Grid points per input coordinate.
    pub grid: usize,
    /// Coordinate-refinement sweeps after the grid.
    pub sweeps: usize,
    /// Refinement stops once the step falls below this fraction of the tube
    /// width.
    pub tol: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            grid: 21,
            sweeps: 200,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub u: DVector<f64>,
    /// `||pinv (f(x, u) - x_next)||_inf` at `u`.
    pub objective: f64,
}

impl BaselineResult {
    /// Whether the successor lands in the next deflated set.
    pub fn success(&self) -> bool {
        self.objective <= 1.0
    }
}

/// Minimizes `||pinv (f(x, u) - x_next)||_inf` over the input tube of step
/// `k`: a full grid, then compass search around the best grid point.
pub fn baseline_control(
    x: &DVector<f64>,
    k: usize,
    brs: &BrsResult,
    traj: &NominalTrajectory,
    model: &dyn DynamicsModel,
    params: &BaselineParams,
) -> BaselineResult {
    let target = StepTarget::from_brs(brs, traj, k);
    let tube = &brs.tubes.u[k];
    let eval = |u: &DVector<f64>| {
        let d = target.coordinates(&model.step(x, u));
        d.amax()
    };
    let m = tube.dim();
    let g = params.grid.max(1);
    let (lo, hi) = (tube.lower(), tube.upper());
    let at = |j: usize, i: usize| {
        if g == 1 {
            0.5 * (lo[j] + hi[j])
        } else {
            lo[j] + (hi[j] - lo[j]) * i as f64 / (g - 1) as f64
        }
    };
    // The nominal input is always a candidate.
    let mut best_u = traj.input(k).clone();
    let mut best = eval(&best_u);
    let total = g.pow(m as u32);
    let mut idx = vec![0usize; m];
    for _ in 0..total {
        let u = DVector::from_fn(m, |j, _| at(j, idx[j]));
        let v = eval(&u);
        if v < best {
            best = v;
            best_u = u;
        }
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < g {
                break;
            }
            *slot = 0;
        }
    }
    let width = tube.radius() * 2.0;
    let mut step = width.clone() / (g.max(2) - 1) as f64;
    for _ in 0..params.sweeps {
        let mut improved = false;
        for j in 0..m {
            for dir in [1.0, -1.0] {
                let mut u = best_u.clone();
                u[j] = (u[j] + dir * step[j]).clamp(lo[j], hi[j]);
                let v = eval(&u);
                if v < best {
                    best = v;
                    best_u = u;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if (0..m).all(|j| step[j] <= params.tol * width[j].max(f64::MIN_POSITIVE)) {
                break;
            }
        }
    }
    BaselineResult {
        u: best_u,
        objective: best,
    }
}
