use nalgebra::DVector;
use rand::Rng as _;

use crate::brs::state_clearance;
use crate::model::{uniform_in, DynamicsModel, ProblemSpec};
use crate::{Error, Result};

use super::NominalTrajectory;

/// Kinodynamic RRT settings. Each extension tries every grid input held for
/// every duration in `hold_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RrtParams {
    pub max_iterations: usize,
    pub goal_bias: f64,
    pub input_grid: Vec<DVector<f64>>,
    pub hold_steps: Vec<usize>,
    /// Strict margin to the operating domain faces for non-terminal states.
    pub interior_margin: DVector<f64>,
    /// Lower bound on [`state_clearance`] for non-initial, non-terminal
    /// states. Keeps the nominal away from the extended faces of unsafe
    /// pieces, where tubes and safe sets degenerate.
    pub min_clearance: DVector<f64>,
    /// Depth into the target required to stop.
    pub goal_margin: DVector<f64>,
    /// Extra clearance around each unsafe piece.
    pub obstacle_clearance: DVector<f64>,
    pub distance_weights: DVector<f64>,
    pub max_horizon: usize,
}

impl RrtParams {
    pub fn dubins() -> Self {
        let mut input_grid = Vec::new();
        for v in [1.0, 2.0, 4.5] {
            for w in [-3.0, -1.5, 0.0, 1.5, 3.0] {
                input_grid.push(DVector::from_vec(vec![v, w]));
            }
        }
        Self {
            max_iterations: 20_000,
            goal_bias: 0.1,
            input_grid,
            hold_steps: vec![1, 3, 6],
            interior_margin: DVector::from_vec(vec![0.02, 0.02, 0.05]),
            min_clearance: DVector::from_vec(vec![0.03, 0.03, 0.05]),
            goal_margin: DVector::from_vec(vec![0.1, 0.1, 0.15]),
            obstacle_clearance: DVector::from_vec(vec![0.1, 0.1, 0.0]),
            distance_weights: DVector::from_vec(vec![1.0, 1.0, 0.3]),
            max_horizon: 400,
        }
    }

    fn check(&self, n: usize, m: usize) -> Result<()> {
        let ok = self.input_grid.iter().all(|u| u.len() == m)
            && !self.input_grid.is_empty()
            && [
                &self.interior_margin,
                &self.min_clearance,
                &self.goal_margin,
                &self.obstacle_clearance,
                &self.distance_weights,
            ]
            .iter()
            .all(|v| v.len() == n)
            && !self.hold_steps.is_empty()
            && self.hold_steps.iter().all(|&h| h >= 1)
            && (0.0..=1.0).contains(&self.goal_bias);
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid("RRT parameters do not match the problem dimensions".into()))
        }
    }
}

impl Default for RrtParams {
    fn default() -> Self {
        Self::dubins()
    }
}

struct Node {
    state: DVector<f64>,
    parent: usize,
    input: usize,
    depth: usize,
}

/// Plans a nominal trajectory from the center of the initial set into the
/// interior of the target. Deterministic given `seed`.
pub fn plan_rrt(
    spec: &ProblemSpec,
    model: &dyn DynamicsModel,
    seed: u64,
    params: &RrtParams,
) -> Result<NominalTrajectory> {
    let (n, m) = (model.state_dim(), model.input_dim());
    params.check(n, m)?;
    let x0 = spec.initial.center();
    let planner = Planner { spec, params };
    if !planner.is_admissible(&x0) {
        return Err(Error::Planning("initial state is not in the free space".into()));
    }

    if planner.in_goal(&x0) {
        let u = spec.inputs.clamp(&DVector::zeros(m));
        let x1 = model.step(&x0, &u);
        if planner.in_goal(&x1) {
            return NominalTrajectory::new(vec![x0, x1], vec![u]);
        }
    }

    let mut rng = crate::rng_from_seed(seed);
    let mut nodes = vec![Node {
        state: x0.clone(),
        parent: usize::MAX,
        input: usize::MAX,
        depth: 0,
    }];
    let goal_region = spec.target.clone();
    let sample_region = spec.operating.clone();
    let mut next = DVector::zeros(n);
    for _ in 0..params.max_iterations {
        let sample = if rng.random::<f64>() < params.goal_bias {
            uniform_in(&goal_region, &mut rng)
        } else {
            uniform_in(&sample_region, &mut rng)
        };
        let near = planner.nearest(&nodes, &sample);
        if nodes[near].depth + 1 > params.max_horizon {
            continue;
        }
        let mut best: Option<(f64, usize, Vec<DVector<f64>>)> = None;
        for (ui, u) in params.input_grid.iter().enumerate() {
            for &hold in &params.hold_steps {
                let steps = hold.min(params.max_horizon - nodes[near].depth);
                let mut x = nodes[near].state.clone();
                let mut segment = Vec::with_capacity(steps);
                let mut reached = false;
                for _ in 0..steps {
                    model.step_into(x.as_slice(), u.as_slice(), next.as_mut_slice());
                    x.copy_from(&next);
                    segment.push(x.clone());
                    if planner.in_goal(&x) {
                        reached = true;
                        break;
                    }
                    if !planner.is_free(&x) {
                        segment.clear();
                        break;
                    }
                }
                if segment.is_empty() {
                    continue;
                }
                if reached {
                    let mut inputs = vec![ui; segment.len()];
                    let mut i = near;
                    while i != 0 {
                        inputs.push(nodes[i].input);
                        i = nodes[i].parent;
                    }
                    inputs.reverse();
                    let seq = inputs.into_iter().map(|k| params.input_grid[k].clone()).collect();
                    return NominalTrajectory::simulate(model, x0, seq);
                }
                let d = planner.distance(segment.last().unwrap(), &sample);
                if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                    best = Some((d, ui, segment));
                }
            }
        }
        if let Some((_, ui, segment)) = best {
            let mut parent = near;
            for state in segment {
                let depth = nodes[parent].depth + 1;
                nodes.push(Node {
                    state,
                    parent,
                    input: ui,
                    depth,
                });
                parent = nodes.len() - 1;
            }
        }
    }
    Err(Error::Planning(format!(
        "no trajectory reached the target after {} iterations ({} tree nodes)",
        params.max_iterations,
        nodes.len()
    )))
}

struct Planner<'a> {
    spec: &'a ProblemSpec,
    params: &'a RrtParams,
}

impl Planner<'_> {
    fn is_free(&self, x: &DVector<f64>) -> bool {
        let c = state_clearance(self.spec, x);
        (0..x.len()).all(|i| c[i] >= self.params.min_clearance[i]) && self.is_admissible(x)
    }

    fn is_admissible(&self, x: &DVector<f64>) -> bool {
        let p = self.params;
        if !self.spec.operating.contains_with_margin(x, &p.interior_margin) {
            return false;
        }
        !self.spec.unsafe_region.pieces().iter().any(|b| {
            (0..x.len()).all(|i| {
                let c = p.obstacle_clearance[i];
                b.lower()[i] - c <= x[i] && x[i] <= b.upper()[i] + c
            })
        })
    }

    fn in_goal(&self, x: &DVector<f64>) -> bool {
        self.spec.target.contains_with_margin(x, &self.params.goal_margin)
    }

    fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let w = &self.params.distance_weights;
        (0..a.len()).map(|i| (w[i] * (a[i] - b[i])).powi(2)).sum::<f64>()
    }

    fn nearest(&self, nodes: &[Node], sample: &DVector<f64>) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, node) in nodes.iter().enumerate() {
            let d = self.distance(&node.state, sample);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{HyperRect, UnsafeRegion};
    use crate::model::Dubins;
    use nalgebra::dvector;

    #[test]
    fn plans_benchmark_and_is_deterministic() {
        let spec = ProblemSpec::dubins_benchmark([1.0, 1.0, 0.0]);
        let model = Dubins::standard();
        let p = RrtParams::dubins();
        let a = plan_rrt(&spec, &model, 7, &p).unwrap();
        let b = plan_rrt(&spec, &model, 7, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.validate(&spec, &model, &p.interior_margin).is_empty());
    }

    #[test]
    fn start_in_target_gives_horizon_one() {
        let spec = ProblemSpec::dubins_benchmark([4.2, 1.75, 0.0]);
        let t = plan_rrt(&spec, &Dubins::standard(), 0, &RrtParams::dubins()).unwrap();
        assert_eq!(t.horizon(), 1);
        assert_eq!(t.input(0), &dvector![0.0, 0.0]);
    }

    #[test]
    fn enclosed_target_fails() {
        let mut spec = ProblemSpec::dubins_benchmark([1.0, 1.0, 0.0]);
        let h = std::f64::consts::FRAC_PI_2;
        let wall = HyperRect::from_slices(&[3.2, 0.0, -h], &[3.4, 2.0, h]).unwrap();
        let mut pieces = spec.unsafe_region.pieces().to_vec();
        pieces.push(wall);
        spec.unsafe_region = UnsafeRegion::new(pieces).unwrap();
        let mut p = RrtParams::dubins();
        p.max_iterations = 2000;
        assert!(matches!(plan_rrt(&spec, &Dubins::standard(), 1, &p), Err(Error::Planning(_))));
    }
}
