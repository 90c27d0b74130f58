//! Loss, Adam, and the per-step training loop.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::net::{Cache, Layout, StepNet};
use crate::brs::BrsResult;
use crate::geom::{SampleMode, Zonotope};
use crate::model::DynamicsModel;
use crate::nominal::NominalTrajectory;
use crate::par::{try_map_range, Execution};
use crate::{mix_seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the exponential hinge on `||d||_inf > 1`.
    pub lambda: f64,
    /// Weight of the tracking term.
    pub alpha1: f64,
    /// Weight of `||R||_1`.
    pub alpha2: f64,
    pub uniform_samples: usize,
    pub extreme_samples: usize,
    /// Fraction of the samples used for training; the rest validate.
    pub train_fraction: f64,
    pub learning_rate: f64,
    /// Coupled L2 decay, added to the gradient before the Adam moments.
    pub weight_decay: f64,
    pub validation_period: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub hidden: Vec<usize>,
    /// Initial `R` as a fraction of the input tube half-widths.
    pub scale_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            alpha1: 10.0,
            alpha2: 0.01,
            uniform_samples: 40,
            extreme_samples: 60,
            train_fraction: 0.7,
            learning_rate: 3e-4,
            weight_decay: 1e-4,
            validation_period: 200,
            patience: 5,
            max_epochs: 20_000,
            hidden: vec![32; 4],
            scale_fraction: 0.25,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.uniform_samples + self.extreme_samples;
        let n_train = self.train_count();
        let ok = self.lambda > 0.0
            && self.alpha1 > 0.0
            && self.alpha2 >= 0.0
            && self.train_fraction > 0.0
            && self.train_fraction < 1.0
            && n_train > 0
            && n_train < n
            && self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && self.validation_period > 0
            && self.patience > 0
            && self.scale_fraction > 0.0
            && !self.hidden.contains(&0);
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid training config: {self:?}")))
        }
    }

    fn train_count(&self) -> usize {
        let n = self.uniform_samples + self.extreme_samples;
        (self.train_fraction * n as f64).round() as usize
    }
}

/// What a step network is trained toward: map states of `Lambda_k` into the
/// deflated set of step `k+1`, measured in its generator coordinates.
#[derive(Debug, Clone)]
pub struct StepTarget {
    /// Pseudoinverse of the next deflated set's generators (`q x n`).
    pub pinv: DMatrix<f64>,
    pub x_next: DVector<f64>,
}

impl StepTarget {
    pub fn from_brs(brs: &BrsResult, traj: &NominalTrajectory, k: usize) -> Self {
        Self {
            pinv: brs.deflated_pinv(k + 1),
            x_next: traj.state(k + 1).clone(),
        }
    }

    /// `d = pinv (x_plus - x_next)`.
    pub fn coordinates(&self, x_plus: &DVector<f64>) -> DVector<f64> {
        &self.pinv * (x_plus - &self.x_next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub tracking: f64,
    pub scale: f64,
}

/// Per-sample tracking penalty `t + lambda * exp(max(t - 1, 0))` and its
/// derivative in `t`.
pub fn hinge(t: f64, lambda: f64) -> (f64, f64) {
    if t > 1.0 {
        let e = (t - 1.0).exp();
        (t + lambda * e, 1.0 + lambda * e)
    } else {
        (t + lambda, 1.0)
    }
}

/// Index of the first coordinate with the largest magnitude.
fn argmax_abs(d: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in d.iter().enumerate() {
        if v.abs() > d[best].abs() {
            best = i;
        }
    }
    best
}

/// Reusable buffers for one loss evaluation.
struct Scratch {
    cache: Cache,
    u: Vec<f64>,
    x_plus: Vec<f64>,
    d: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    g_u: Vec<f64>,
    work: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, m: usize, q: usize) -> Self {
        Self {
            cache: Cache::default(),
            u: vec![0.0; m],
            x_plus: vec![0.0; n],
            d: vec![0.0; q],
            a: vec![0.0; n * n],
            b: vec![0.0; n * m],
            g_u: vec![0.0; m],
            work: Vec::new(),
        }
    }
}

/// `||d||_inf` for one state, reusing `s`. Leaves `u`, `x_plus`, `d` and the
/// cache filled.
fn eval_sample(net: &StepNet, model: &dyn DynamicsModel, target: &StepTarget, x: &[f64], s: &mut Scratch) -> f64 {
    net.forward_into(x, &mut s.u, &mut s.cache);
    model.step_into(x, &s.u, &mut s.x_plus);
    let q = target.pinv.nrows();
    for i in 0..q {
        let mut acc = 0.0;
        for j in 0..s.x_plus.len() {
            acc += target.pinv[(i, j)] * (s.x_plus[j] - target.x_next[j]);
        }
        s.d[i] = acc;
    }
    if q == 0 {
        0.0
    } else {
        s.d[argmax_abs(&s.d)].abs()
    }
}

/// `||d(x)||_inf` with the raw controller.
pub fn tracking_norm(net: &StepNet, model: &dyn DynamicsModel, target: &StepTarget, x: &DVector<f64>) -> f64 {
    let mut s = Scratch::new(model.state_dim(), model.input_dim(), target.pinv.nrows());
    eval_sample(net, model, target, x.as_slice(), &mut s)
}

/// Mean `||d||_inf` over `batch`.
pub fn mean_tracking_norm(
    net: &StepNet,
    model: &dyn DynamicsModel,
    target: &StepTarget,
    batch: &[DVector<f64>],
) -> f64 {
    let mut s = Scratch::new(model.state_dim(), model.input_dim(), target.pinv.nrows());
    let total: f64 = batch
        .iter()
        .map(|x| eval_sample(net, model, target, x.as_slice(), &mut s))
        .sum();
    total / batch.len().max(1) as f64
}

/// `P = alpha1 * mean(hinge(||d||_inf)) + alpha2 * ||R||_1`.
pub fn loss(
    net: &StepNet,
    model: &dyn DynamicsModel,
    target: &StepTarget,
    batch: &[DVector<f64>],
    cfg: &TrainConfig,
) -> Result<LossValue> {
    loss_impl(net, model, target, batch, cfg, None)
}

/// Loss and its gradient with respect to the flat parameters.
pub fn loss_and_grad(
    net: &StepNet,
    model: &dyn DynamicsModel,
    target: &StepTarget,
    batch: &[DVector<f64>],
    cfg: &TrainConfig,
) -> Result<(LossValue, Vec<f64>)> {
    let mut grad = vec![0.0; net.layout().len()];
    let v = loss_impl(net, model, target, batch, cfg, Some(&mut grad))?;
    Ok((v, grad))
}

fn loss_impl(
    net: &StepNet,
    model: &dyn DynamicsModel,
    target: &StepTarget,
    batch: &[DVector<f64>],
    cfg: &TrainConfig,
    mut grad: Option<&mut Vec<f64>>,
) -> Result<LossValue> {
    if batch.is_empty() {
        return Err(Error::Invalid("loss needs a non-empty batch".into()));
    }
    let (n, m) = (model.state_dim(), model.input_dim());
    let q = target.pinv.nrows();
    let mut s = Scratch::new(n, m, q);
    let inv = 1.0 / batch.len() as f64;
    let mut tracking = 0.0;
    for x in batch {
        let t = eval_sample(net, model, target, x.as_slice(), &mut s);
        let (h, dh) = hinge(t, cfg.lambda);
        tracking += h * inv;
        let Some(g) = grad.as_deref_mut() else {
            continue;
        };
        if q == 0 {
            continue;
        }
        let i = argmax_abs(&s.d);
        let sign = if s.d[i] > 0.0 {
            1.0
        } else if s.d[i] < 0.0 {
            -1.0
        } else {
            0.0
        };
        if sign == 0.0 {
            continue;
        }
        model.jacobians_into(x.as_slice(), &s.u, &mut s.a, &mut s.b);
        // d(d_i)/du = pinv_i . B
        let coef = cfg.alpha1 * inv * dh * sign;
        for c in 0..m {
            let mut acc = 0.0;
            for r in 0..n {
                acc += target.pinv[(i, r)] * s.b[r * m + c];
            }
            s.g_u[c] = coef * acc;
        }
        net.backward_into(&s.cache, &s.g_u, g, &mut s.work);
    }
    let r = net.scale();
    let scale: f64 = r.iter().map(|v| v.abs()).sum();
    if let Some(g) = grad {
        let range = net.layout().scale_range();
        for (gi, v) in g[range].iter_mut().zip(r) {
            *gi += cfg.alpha2 * sign_of(*v);
        }
    }
    Ok(LossValue {
        total: cfg.alpha1 * tracking + cfg.alpha2 * scale,
        tracking,
        scale,
    })
}

fn sign_of(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adam with L2 decay added to the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub k: usize,
    /// Epochs run.
    pub epochs: usize,
    /// `(epoch, validation mean ||d||_inf)`, starting at epoch 0.
    pub validations: Vec<(usize, f64)>,
    pub best_epoch: usize,
    pub best_validation: f64,
    /// Fraction of validation points with `||d||_inf <= 1` for the kept
    /// weights.
    pub validation_inside: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn initial_validation(&self) -> f64 {
        self.validations.first().map_or(f64::NAN, |v| v.1)
    }
}

/// Training and validation points for one step: uniform and sign-vector
/// factor samples of `Lambda_k`, shuffled and split.
pub fn training_samples(lambda: &Zonotope, cfg: &TrainConfig, seed: u64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut rng = crate::rng_from_seed(seed);
    let mut pts = lambda.sample_with(cfg.uniform_samples, SampleMode::Uniform, &mut rng);
    pts.extend(lambda.sample_with(cfg.extreme_samples, SampleMode::Extreme, &mut rng));
    pts.shuffle(&mut rng);
    let val = pts.split_off(cfg.train_count());
    (pts, val)
}

/// Trains the controller of step `k`.
pub fn train_step_controller(
    k: usize,
    model: &dyn DynamicsModel,
    brs: &BrsResult,
    traj: &NominalTrajectory,
    cfg: &TrainConfig,
) -> Result<(StepNet, TrainLog)> {
    cfg.validate()?;
    if k >= traj.horizon() {
        return Err(Error::Invalid(format!("no controller for step {k} of {}", traj.horizon())));
    }
    let seed = mix_seed(cfg.seed, k as u64);
    let (train, val) = training_samples(&brs.lambda[k], cfg, seed);
    let target = StepTarget::from_brs(brs, traj, k);
    let layout = Layout::new(model.state_dim(), model.input_dim(), &cfg.hidden)?;
    let scale = brs.tubes.u[k].radius() * cfg.scale_fraction;
    let mut rng = crate::rng_from_seed(mix_seed(seed, u64::MAX));
    let net = StepNet::init(k, layout, traj.state(k).clone(), traj.input(k).clone(), &scale, &mut rng)?;
    fit(net, model, &target, &train, &val, cfg)
}

/// The optimization loop on fixed data; keeps the weights with the best
/// validation score.
pub fn fit(
    mut net: StepNet,
    model: &dyn DynamicsModel,
    target: &StepTarget,
    train: &[DVector<f64>],
    val: &[DVector<f64>],
    cfg: &TrainConfig,
) -> Result<(StepNet, TrainLog)> {
    let k = net.k;
    let mut adam = Adam::new(net.layout().len(), cfg.learning_rate, cfg.weight_decay);
    let first = mean_tracking_norm(&net, model, target, val);
    let mut log = TrainLog {
        k,
        epochs: 0,
        validations: vec![(0, first)],
        best_epoch: 0,
        best_validation: first,
        validation_inside: 0.0,
        stopped_early: false,
    };
    let mut best = net.params().to_vec();
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let (value, grad) = loss_and_grad(&net, model, target, train, cfg)?;
        if !value.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training {
                step: k,
                epoch,
                detail: format!(
                    "loss {} (tracking {}, scale {})",
                    value.total, value.tracking, value.scale
                ),
            });
        }
        adam.step(net.params_mut(), &grad);
        log.epochs = epoch;
        if epoch % cfg.validation_period == 0 {
            let v = mean_tracking_norm(&net, model, target, val);
            log.validations.push((epoch, v));
            if v < log.best_validation {
                log.best_validation = v;
                log.best_epoch = epoch;
                best.copy_from_slice(net.params());
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }
    net.params_mut().copy_from_slice(&best);
    let inside = val
        .iter()
        .filter(|x| tracking_norm(&net, model, target, x) <= 1.0)
        .count();
    log.validation_inside = inside as f64 / val.len().max(1) as f64;
    Ok((net, log))
}

/// Trains every step controller, in parallel across steps.
pub fn train_all(
    model: &dyn DynamicsModel,
    brs: &BrsResult,
    traj: &NominalTrajectory,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<(Vec<StepNet>, Vec<TrainLog>)> {
    let out = try_map_range(exec, traj.horizon(), |k| train_step_controller(k, model, brs, traj, cfg))?;
    Ok(out.into_iter().unzip())
}
