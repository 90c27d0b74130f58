//! Conservative linearization along a nominal trajectory and the backward
//! reachable set recursion.
//!
//! Going backward from `Lambda_N = T_{x,N}`, each step computes
//!
//! ```text
//! Psi_k      = Lambda_{k+1} (-) (gamma W + [-e_k, e_k])
//! Lambda_k   = A_k^{-1} (Psi_k + <-(c_k + B_k u_k), -B_k diag(r_u,k)>)  shrunk into T_{x,k}
//! Lambda~_k  = Lambda_k (-) gamma W
//! ```
//!
//! where `(-)` is the under-approximating Minkowski difference.

mod io;
mod linearize;
mod tubes;

use nalgebra::{DMatrix, DVector};

use crate::geom::{HyperRect, Zonotope};
use crate::model::{DynamicsModel, ProblemSpec};
use crate::nominal::NominalTrajectory;
use crate::numerics::{invert, pseudoinverse};
use crate::{Error, Result};

pub use linearize::{conservative_linearization_check, linearization_error, LinearizationStep};
pub use tubes::{
    curvature_coordinates, free_box_clearance, initial_tubes, state_clearance, Intersection, RefineScope, TubeParams, Tubes,
};

/// Default disturbance inflation.
pub const DEFAULT_GAMMA: f64 = 1.1;

/// Output of the backward recursion. Vectors indexed by time step; `psi`,
/// `errors`, `alphas` and `tubes.u` have `N` entries, the rest `N + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrsResult {
    pub gamma: f64,
    pub lambda: Vec<Zonotope>,
    pub deflated: Vec<Zonotope>,
    pub psi: Vec<Zonotope>,
    pub tubes: Tubes,
    pub errors: Vec<DVector<f64>>,
    /// Smallest generator scale applied when fitting each set into its tube.
    pub alphas: Vec<f64>,
    /// Tube refinement log, one line per shrink.
    pub trace: Vec<String>,
}

impl BrsResult {
    pub fn horizon(&self) -> usize {
        self.psi.len()
    }

    /// Pseudoinverse of the generator matrix of `Lambda~_k`.
    pub fn deflated_pinv(&self, k: usize) -> DMatrix<f64> {
        pseudoinverse(self.deflated[k].generators())
    }

    /// Checks the set invariants: the terminal set lies in the target, every
    /// hull lies in its tube, no hull touches an unsafe piece, and every
    /// tube lies in the operating domain. Returns the violated conditions.
    pub fn invariant_violations(&self, spec: &ProblemSpec) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.horizon();
        if !spec.target.contains_box(&self.lambda[n].interval_hull()) {
            out.push("terminal set leaves the target".to_string());
        }
        for k in 0..=n {
            let hull = self.lambda[k].interval_hull();
            if !self.tubes.x[k].contains_box(&hull) {
                out.push(format!("set {k} leaves its tube"));
            }
            if !spec.operating.contains_box(&self.tubes.x[k]) {
                out.push(format!("tube {k} leaves the operating domain"));
            }
            for p in spec.unsafe_region.pieces_intersecting(&hull) {
                out.push(format!("set {k} touches unsafe piece {p}"));
            }
        }
        for k in 0..n {
            if !spec.inputs.contains_box(&self.tubes.u[k]) {
                out.push(format!("input tube {k} leaves the input set"));
            }
        }
        out
    }
}

enum StepFailure {
    Singular(Error),
    ErrorTooLarge(String),
    Empty(String),
}

impl StepFailure {
    fn describe(&self) -> String {
        match self {
            Self::Singular(e) => e.to_string(),
            Self::ErrorTooLarge(s) | Self::Empty(s) => s.clone(),
        }
    }
}

struct StepSets {
    lambda: Zonotope,
    deflated: Zonotope,
    psi: Zonotope,
    error: DVector<f64>,
    alpha: f64,
}

#[allow(clippy::too_many_arguments)]
fn backward_step(
    model: &dyn DynamicsModel,
    traj: &NominalTrajectory,
    k: usize,
    next: &Zonotope,
    tx: &HyperRect,
    tu: &HyperRect,
    w: &DVector<f64>,
    max_error_ratio: f64,
    intersection: Intersection,
    core: Option<&DVector<f64>>,
) -> std::result::Result<StepSets, StepFailure> {
    let (xk, uk) = (traj.state(k), traj.input(k));
    let lin = LinearizationStep::new(model, xk, uk, tx, tu);
    let a_inv = invert(&lin.a, Some(k)).map_err(StepFailure::Singular)?;
    let subtract = w + &lin.error;
    if max_error_ratio > 0.0 {
        let half = next.interval_hull().radius();
        let e = &lin.error;
        if let Some(i) = (0..e.len()).find(|&i| e[i] > max_error_ratio * half[i]) {
            return Err(StepFailure::ErrorTooLarge(format!(
                "linearization error {:.3e} exceeds {max_error_ratio} x half-width {:.3e} in coordinate {i}",
                e[i], half[i]
            )));
        }
    }
    let psi = next
        .minkowski_diff_under(&subtract)
        .map_err(|e| StepFailure::Empty(format!("difference with the error box: {e}")))?;
    let r_u = tu.radius();
    let mut shift_g = -&lin.b;
    for (j, mut col) in shift_g.column_iter_mut().enumerate() {
        col *= r_u[j];
    }
    let shift = Zonotope::new(-(&lin.c + &lin.b * uk), shift_g).expect("finite");
    let z = psi
        .minkowski_sum(&shift)
        .and_then(|s| s.linear_map(&a_inv))
        .map_err(|e| StepFailure::Empty(e.to_string()))?;
    // The affine part maps the nominal point onto itself; pin the center to
    // it exactly so rounding does not drift the sets.
    let z = Zonotope::new(xk.clone(), z.generators().clone()).expect("finite");
    let fitted = match intersection {
        Intersection::Uniform => z.shrink_into_box(tx),
        Intersection::PerGenerator => z
            .shrink_into_box_per_generator(tx, core)
            .map(|(z, scales)| (z.pruned(), scales.min())),
    };
    let (lambda, alpha) =
        fitted.map_err(|e| StepFailure::Empty(format!("intersection with the tube: {e}")))?;
    if lambda.generators().iter().all(|v| *v == 0.0) {
        return Err(StepFailure::Empty("intersection with the tube collapsed".into()));
    }
    let deflated = lambda
        .minkowski_diff_under(w)
        .map_err(|e| StepFailure::Empty(format!("deflation: {e}")))?;
    Ok(StepSets {
        lambda,
        deflated,
        psi,
        error: lin.error,
        alpha,
    })
}

fn terminal_sets(traj: &NominalTrajectory, tx: &HyperRect, w: &DVector<f64>) -> Result<(Zonotope, Zonotope)> {
    let n = traj.horizon();
    let c = traj.state(n);
    let mut r = DVector::from_fn(c.len(), |i, _| (c[i] - tx.lower()[i]).min(tx.upper()[i] - c[i]).max(0.0));
    let lambda = loop {
        let z = Zonotope::new(c.clone(), DMatrix::from_diagonal(&r))?.pruned();
        if tx.contains_box(&z.interval_hull()) {
            break z;
        }
        r *= 1.0 - 1e-12;
    };
    let deflated = lambda.minkowski_diff_under(w).map_err(|e| Error::BrsEmpty {
        step: n,
        reason: format!("terminal deflation: {e}"),
        trace: String::new(),
    })?;
    Ok((lambda, deflated))
}

/// Runs the recursion on fixed tubes; any failing step is an error.
pub fn compute_brs_with_tubes(
    model: &dyn DynamicsModel,
    traj: &NominalTrajectory,
    tubes: Tubes,
    gamma: f64,
    intersection: Intersection,
) -> Result<BrsResult> {
    run(model, traj, tubes, gamma, None, intersection)
}

/// Initializes tubes from clearances and runs the recursion, shrinking the
/// curvature radii after each failed sweep until one succeeds or the budget
/// runs out.
pub fn compute_brs(
    model: &dyn DynamicsModel,
    spec: &ProblemSpec,
    traj: &NominalTrajectory,
    params: &TubeParams,
    gamma: f64,
) -> Result<BrsResult> {
    let tubes = initial_tubes(spec, traj, params)?;
    run(model, traj, tubes, gamma, Some(params), params.intersection)
}

/// Tubes for which [`compute_brs`] succeeds.
pub fn refine_tubes(
    model: &dyn DynamicsModel,
    spec: &ProblemSpec,
    traj: &NominalTrajectory,
    params: &TubeParams,
    gamma: f64,
) -> Result<Tubes> {
    compute_brs(model, spec, traj, params, gamma).map(|r| r.tubes)
}

type PassSets = (Vec<Zonotope>, Vec<Zonotope>, Vec<Zonotope>, Vec<DVector<f64>>, Vec<f64>);

/// One backward sweep on fixed tubes. The outer error is fatal; the inner
/// one names the failing step.
fn backward_pass(
    model: &dyn DynamicsModel,
    traj: &NominalTrajectory,
    tubes: &Tubes,
    w: &DVector<f64>,
    ratio: f64,
    intersection: Intersection,
    core: Option<&DVector<f64>>,
) -> Result<std::result::Result<PassSets, (usize, String)>> {
    let n = traj.horizon();
    let (lambda_n, deflated_n) = match terminal_sets(traj, &tubes.x[n], w) {
        Ok(s) => s,
        Err(Error::BrsEmpty { reason, .. }) => return Ok(Err((n, reason))),
        Err(e) => return Err(e),
    };
    let mut lambda = vec![lambda_n];
    let mut deflated = vec![deflated_n];
    let mut psi = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    let mut alphas = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let next = lambda.last().unwrap();
        let step = backward_step(model, traj, k, next, &tubes.x[k], &tubes.u[k], w, ratio, intersection, core);
        match step {
            Ok(s) => {
                lambda.push(s.lambda);
                deflated.push(s.deflated);
                psi.push(s.psi);
                errors.push(s.error);
                alphas.push(s.alpha);
            }
            Err(StepFailure::Singular(e)) => return Err(e),
            Err(f) => return Ok(Err((k, f.describe()))),
        }
    }
    lambda.reverse();
    deflated.reverse();
    psi.reverse();
    errors.reverse();
    alphas.reverse();
    Ok(Ok((lambda, deflated, psi, errors, alphas)))
}

fn run(
    model: &dyn DynamicsModel,
    traj: &NominalTrajectory,
    mut tubes: Tubes,
    gamma: f64,
    refine: Option<&TubeParams>,
    intersection: Intersection,
) -> Result<BrsResult> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::Invalid(format!("disturbance inflation must be >= 1, got {gamma}")));
    }
    let n = traj.horizon();
    if tubes.x.len() != n + 1 || tubes.u.len() != n {
        return Err(Error::Invalid("tube count does not match the horizon".into()));
    }
    let w = model.disturbance().upper() * gamma;
    let ratio = refine.map_or(0.0, |p| p.max_error_ratio);
    let core = refine
        .filter(|p| p.core_factor > 0.0)
        .map(|p| &w * p.core_factor);
    let floor = &w * refine.map_or(0.0, |p| p.state_floor);
    let mut trace = Vec::new();
    let mut round = 0;
    let sets = loop {
        let failure = match backward_pass(model, traj, &tubes, &w, ratio, intersection, core.as_ref())? {
            Ok(sets) => break sets,
            Err(f) => f,
        };
        let (k, reason) = failure;
        let Some(params) = refine.filter(|p| round < p.budget) else {
            return Err(Error::BrsEmpty {
                step: k,
                reason,
                trace: trace.join("\n"),
            });
        };
        let steps: Vec<usize> = match params.scope {
            RefineScope::Step => vec![k],
            RefineScope::Global => (0..n).collect(),
        };
        let mut shrunk = false;
        for &j in &steps {
            let coords = curvature_coordinates(model, &tubes.x[j], &tubes.u[j]);
            let (tx, tu) = (&mut tubes.x[j], &mut tubes.u[j]);
            shrunk |= tubes::shrink_coordinates(tx, tu, (traj.state(j), traj.input(j)), &coords, params.shrink, &floor);
        }
        if !shrunk {
            return Err(Error::BrsEmpty {
                step: k,
                reason: format!("{reason}; no tube radius left to shrink"),
                trace: trace.join("\n"),
            });
        }
        trace.push(format!(
            "round {round}: step {k}: {reason}; shrinking curvature radii by {} ({})",
            params.shrink,
            match params.scope {
                RefineScope::Step => format!("step {k}"),
                RefineScope::Global => "all steps".to_string(),
            }
        ));
        round += 1;
    };
    let (lambda, deflated, psi, errors, alphas) = sets;
    Ok(BrsResult {
        gamma,
        lambda,
        deflated,
        psi,
        tubes,
        errors,
        alphas,
        trace,
    })
}
