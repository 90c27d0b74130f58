//! Closed-loop simulation under uniform disturbances.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::Rng as _;

use crate::brs::BrsResult;
use crate::controller::{baseline_control, BaselineParams, StepNet};
use crate::geom::{HyperRect, Zonotope};
use crate::model::DynamicsModel;
use crate::nominal::NominalTrajectory;
use crate::par::{try_map_range, Execution};
use crate::{mix_seed, Error, Result};

/// Picks the input at step `k`.
pub trait TrackingController: Send + Sync {
    fn horizon(&self) -> usize;
    fn control(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;
}

/// The trained networks, trimmed to the input set.
#[derive(Debug, Clone)]
pub struct NetworkController {
    pub nets: Vec<StepNet>,
    pub inputs: HyperRect,
}

impl TrackingController for NetworkController {
    fn horizon(&self) -> usize {
        self.nets.len()
    }

    fn control(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        self.nets[k].forward_trimmed(x, &self.inputs)
    }
}

/// Replays the nominal inputs regardless of the state.
#[derive(Debug, Clone)]
pub struct OpenLoop(pub Vec<DVector<f64>>);

impl TrackingController for OpenLoop {
    fn horizon(&self) -> usize {
        self.0.len()
    }

    fn control(&self, k: usize, _x: &DVector<f64>) -> DVector<f64> {
        self.0[k].clone()
    }
}

/// Solves the one-step baseline problem at every step.
#[derive(Debug, Clone, Copy)]
pub struct BaselineController<'a> {
    pub brs: &'a BrsResult,
    pub traj: &'a NominalTrajectory,
    pub model: &'a dyn DynamicsModel,
    pub params: &'a BaselineParams,
}

impl TrackingController for BaselineController<'_> {
    fn horizon(&self) -> usize {
        self.traj.horizon()
    }

    fn control(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        baseline_control(x, k, self.brs, self.traj, self.model, self.params).u
    }
}

/// One simulated closed-loop run. `x_{k+1} = f(x_k, u_k) + w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub disturbances: Vec<DVector<f64>>,
    /// Seed of the disturbance stream.
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("a trajectory has at least its start")
    }

    /// Whether every stored disturbance lies in `[-amplitude, amplitude]`.
    pub fn disturbances_within(&self, amplitude: &DVector<f64>) -> bool {
        self.disturbances
            .iter()
            .all(|w| w.iter().zip(amplitude.iter()).all(|(v, a)| v.abs() <= *a))
    }

    /// CSV rows `id,seed,k,x...,u...,w...`; the terminal row leaves `u` and
    /// `w` empty.
    pub fn write_csv_rows(&self, id: usize, out: &mut String) {
        let n = self.states[0].len();
        let m = self.inputs.first().map_or(0, |u| u.len());
        for (k, x) in self.states.iter().enumerate() {
            write!(out, "{id},{},{k}", self.seed).unwrap();
            for v in x.iter() {
                write!(out, ",{v:?}").unwrap();
            }
            match (self.inputs.get(k), self.disturbances.get(k)) {
                (Some(u), Some(w)) => {
                    for v in u.iter().chain(w.iter()) {
                        write!(out, ",{v:?}").unwrap();
                    }
                }
                _ => out.push_str(&",".repeat(m + n)),
            }
            out.push('\n');
        }
    }
}

/// Header for [`Trajectory::write_csv_rows`].
pub fn csv_header(n: usize, m: usize) -> String {
    let mut cols = vec!["rollout".to_string(), "seed".to_string(), "k".to_string()];
    cols.extend((0..n).map(|i| format!("x{i}")));
    cols.extend((0..m).map(|i| format!("u{i}")));
    cols.extend((0..n).map(|i| format!("w{i}")));
    cols.join(",") + "\n"
}

/// The whole batch as one CSV document.
pub fn batch_csv(trajs: &[Trajectory]) -> String {
    let Some(first) = trajs.first() else {
        return String::new();
    };
    let n = first.states[0].len();
    let m = first.inputs.first().map_or(0, |u| u.len());
    let mut out = csv_header(n, m);
    for (i, t) in trajs.iter().enumerate() {
        t.write_csv_rows(i, &mut out);
    }
    out
}

/// Simulates `controller` from `x0` with disturbances drawn uniformly from
/// `[-amplitude, amplitude]` by a stream seeded with `seed`.
pub fn rollout(
    controller: &dyn TrackingController,
    x0: &DVector<f64>,
    amplitude: &DVector<f64>,
    model: &dyn DynamicsModel,
    seed: u64,
) -> Result<Trajectory> {
    let n = model.state_dim();
    if x0.len() != n || amplitude.len() != n {
        return Err(Error::Invalid("start or amplitude has the wrong dimension".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    let mut rng = crate::rng_from_seed(seed);
    let steps = controller.horizon();
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let mut disturbances = Vec::with_capacity(steps);
    states.push(x0.clone());
    for k in 0..steps {
        let x = &states[k];
        let u = controller.control(k, x);
        let w = DVector::from_fn(n, |i, _| {
            let a = amplitude[i];
            if a > 0.0 {
                rng.random_range(-a..=a)
            } else {
                0.0
            }
        });
        let next = model.step(x, &u) + &w;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k + 1));
        }
        inputs.push(u);
        disturbances.push(w);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        inputs,
        disturbances,
        seed,
    })
}

/// Re-simulates a stored trajectory from its start and seed.
pub fn replay(
    traj: &Trajectory,
    controller: &dyn TrackingController,
    amplitude: &DVector<f64>,
    model: &dyn DynamicsModel,
) -> Result<Trajectory> {
    rollout(controller, &traj.states[0], amplitude, model, traj.seed)
}

/// Stream index reserved for start sampling, apart from the disturbance
/// stream of the same rollout.
const START_STREAM: u64 = 0x5354_4152_54;

/// The seed of rollout `index` in a batch.
pub fn rollout_seed(base: u64, index: usize) -> u64 {
    mix_seed(base, index as u64)
}

/// Start of rollout `index`: uniform factors on `(1 + sigma)`-scaled
/// generators of `initial`.
pub fn sample_start(initial: &Zonotope, sigma: f64, base: u64, index: usize) -> DVector<f64> {
    let mut rng = crate::rng_from_seed(mix_seed(rollout_seed(base, index), START_STREAM));
    let q = initial.order();
    let b = DVector::from_fn(q, |_, _| rng.random_range(-1.0..=1.0));
    initial.center() + initial.generators() * b * (1.0 + sigma)
}

/// Reads a document written by [`batch_csv`] back into trajectories.
pub fn parse_batch_csv(text: &str, n: usize, m: usize) -> Result<Vec<Trajectory>> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
    match lines.next() {
        Some((_, h)) if h == csv_header(n, m).trim_end() => {}
        Some((i, _)) => return Err(bad(i, format!("expected the header for n = {n}, m = {m}"))),
        None => return Err(bad(0, "empty rollout file".into())),
    }
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 + 2 * n + m {
            return Err(bad(i, format!("expected {} cells, found {}", 3 + 2 * n + m, cells.len())));
        }
        let int = |c: &str| c.parse::<u64>().map_err(|_| bad(i, format!("invalid integer `{c}`")));
        let num = |c: &str| c.parse::<f64>().map_err(|_| bad(i, format!("invalid number `{c}`")));
        let (id, seed, k) = (int(cells[0])? as usize, int(cells[1])?, int(cells[2])? as usize);
        if k == 0 {
            if id != out.len() {
                return Err(bad(i, format!("expected rollout {}, found {id}", out.len())));
            }
            out.push(Trajectory {
                states: Vec::new(),
                inputs: Vec::new(),
                disturbances: Vec::new(),
                seed,
            });
        }
        let last = out.len().checked_sub(1);
        let t = match out.last_mut() {
            Some(t) if last == Some(id) && t.seed == seed && t.states.len() == k => t,
            _ => return Err(bad(i, format!("row k = {k} of rollout {id} is out of order"))),
        };
        let x = cells[3..3 + n].iter().map(|c| num(c)).collect::<Result<Vec<_>>>()?;
        t.states.push(DVector::from_vec(x));
        let rest = &cells[3 + n..];
        if rest.iter().all(|c| c.is_empty()) {
            continue;
        }
        let v = rest.iter().map(|c| num(c)).collect::<Result<Vec<_>>>()?;
        if t.inputs.len() + 1 != t.states.len() {
            return Err(bad(i, format!("rollout {id} continues after its terminal row")));
        }
        t.inputs.push(DVector::from_column_slice(&v[..m]));
        t.disturbances.push(DVector::from_column_slice(&v[m..]));
    }
    for (id, t) in out.iter().enumerate() {
        if t.states.len() != t.inputs.len() + 1 {
            return Err(Error::Parse {
                line: 0,
                msg: format!("rollout {id} has no terminal row"),
            });
        }
    }
    Ok(out)
}

/// `count` independent rollouts from starts in the `sigma`-enlarged initial
/// set.
#[allow(clippy::too_many_arguments)]
pub fn batch_rollouts(
    controller: &dyn TrackingController,
    initial: &Zonotope,
    sigma: f64,
    count: usize,
    amplitude: &DVector<f64>,
    model: &dyn DynamicsModel,
    base_seed: u64,
    exec: Execution,
) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::Invalid("a batch needs at least one rollout".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Invalid(format!("enlargement must be >= 0, got {sigma}")));
    }
    try_map_range(exec, count, |i| {
        let x0 = sample_start(initial, sigma, base_seed, i);
        rollout(controller, &x0, amplitude, model, rollout_seed(base_seed, i))
    })
}
