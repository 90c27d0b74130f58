//! The stages and the files they exchange.
//!
//! Every stage reads its inputs from the output directory and fails with the
//! name of the stage that produces a missing one. Outputs are deterministic
//! given the config; wall-clock timings go to `timings.txt` only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use safetrack::brs::{compute_brs, BrsResult};
use safetrack::conformal::{build_safe_sets, certify, score, ConformalReport, SafeSetSequence};
use safetrack::controller::{
    baseline_control, load_controllers, save_controllers, train_all, BaselineParams, StepNet, TrainLog,
};
use safetrack::model::{Dubins, DynamicsModel, ProblemSpec};
use safetrack::nominal::{plan_rrt, NominalTrajectory};
use safetrack::par::Execution;
use safetrack::rollout::{batch_csv, batch_rollouts, parse_batch_csv, rollout, NetworkController, Trajectory};

use crate::config::ExperimentConfig;
use crate::figures;

/// Stream tag for rollout seeds, so they differ from the planner's.
const ROLLOUT_STREAM: u64 = 0x524f_4c4c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Plan,
    Brs,
    Train,
    Rollout,
    Certify,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Plan,
        Stage::Brs,
        Stage::Train,
        Stage::Rollout,
        Stage::Certify,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Plan => "plan",
            Stage::Brs => "brs",
            Stage::Train => "train",
            Stage::Rollout => "rollout",
            Stage::Certify => "certify",
            Stage::Report => "report",
        }
    }
}

/// File names inside the output directory.
pub struct Paths {
    pub root: PathBuf,
}

impl Paths {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn nominal(&self) -> PathBuf {
        self.root.join("nominal.txt")
    }
    pub fn brs(&self) -> PathBuf {
        self.root.join("brs.txt")
    }
    pub fn controllers(&self) -> PathBuf {
        self.root.join("controllers")
    }
    pub fn train_log(&self) -> PathBuf {
        self.root.join("train_log.csv")
    }
    pub fn rollouts(&self) -> PathBuf {
        self.root.join("rollouts.csv")
    }
    pub fn certificate_json(&self) -> PathBuf {
        self.root.join("certificate.json")
    }
    pub fn certificate_txt(&self) -> PathBuf {
        self.root.join("certificate.txt")
    }
    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn report_txt(&self) -> PathBuf {
        self.root.join("report.txt")
    }
    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.txt")
    }
    pub fn figures(&self) -> PathBuf {
        self.root.join("figures")
    }
}

/// Everything a stage needs besides files.
pub struct Context_ {
    pub cfg: ExperimentConfig,
    pub spec: ProblemSpec,
    pub model: Dubins,
    pub paths: Paths,
}

pub type Ctx = Context_;

impl Ctx {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.spec()?;
        let model = cfg.model();
        let paths = Paths::new(&cfg.out);
        std::fs::create_dir_all(&paths.root).with_context(|| format!("creating {}", paths.root.display()))?;
        Ok(Self {
            cfg,
            spec,
            model,
            paths,
        })
    }

    fn require(&self, path: &Path, producer: Stage) -> Result<()> {
        if !path.exists() {
            bail!("{} not found; run {} first", path.display(), producer.name());
        }
        Ok(())
    }

    pub fn load_nominal(&self) -> Result<NominalTrajectory> {
        let p = self.paths.nominal();
        self.require(&p, Stage::Plan)?;
        let dims = (self.model.state_dim(), self.model.input_dim());
        Ok(NominalTrajectory::load(&p, Some(dims))?)
    }

    pub fn load_brs(&self) -> Result<BrsResult> {
        let p = self.paths.brs();
        self.require(&p, Stage::Brs)?;
        Ok(BrsResult::load(&p)?)
    }

    pub fn load_controllers(&self) -> Result<Vec<StepNet>> {
        let dir = self.paths.controllers();
        self.require(&dir.join(safetrack::controller::MANIFEST), Stage::Train)?;
        Ok(load_controllers(&dir)?)
    }

    pub fn load_rollouts(&self) -> Result<Vec<Trajectory>> {
        let p = self.paths.rollouts();
        self.require(&p, Stage::Rollout)?;
        let text = std::fs::read_to_string(&p)?;
        Ok(parse_batch_csv(&text, self.model.state_dim(), self.model.input_dim())?)
    }

    pub fn load_certificate(&self) -> Result<serde_json::Value> {
        let p = self.paths.certificate_json();
        self.require(&p, Stage::Certify)?;
        Ok(serde_json::from_str(&std::fs::read_to_string(&p)?)?)
    }

    pub fn safe_sets(&self, traj: &NominalTrajectory) -> Result<SafeSetSequence> {
        let sets = build_safe_sets(traj, &self.spec, self.cfg.certify.epsilon, &self.cfg.roles())?;
        Ok(sets)
    }

    pub fn controller(&self) -> Result<NetworkController> {
        Ok(NetworkController {
            nets: self.load_controllers()?,
            inputs: self.spec.inputs.clone(),
        })
    }

    pub fn rollout_seed(&self) -> u64 {
        safetrack::mix_seed(self.cfg.seed, ROLLOUT_STREAM)
    }
}

pub fn run_stage(ctx: &Ctx, stage: Stage) -> Result<String> {
    let start = Instant::now();
    let summary = match stage {
        Stage::Plan => plan(ctx),
        Stage::Brs => brs(ctx),
        Stage::Train => train(ctx),
        Stage::Rollout => rollouts(ctx),
        Stage::Certify => certify_stage(ctx),
        Stage::Report => report(ctx),
    }
    .with_context(|| format!("stage {}", stage.name()))?;
    record_timing(&ctx.paths, stage, start.elapsed().as_secs_f64())?;
    Ok(summary)
}

pub fn run_all(ctx: &Ctx) -> Result<Vec<String>> {
    Stage::ALL.iter().map(|s| run_stage(ctx, *s)).collect()
}

fn read_timings(paths: &Paths) -> BTreeMap<Stage, f64> {
    let text = std::fs::read_to_string(paths.timings()).unwrap_or_default();
    text.lines()
        .filter_map(|l| {
            let (name, secs) = l.split_once(' ')?;
            let stage = Stage::ALL.into_iter().find(|s| s.name() == name)?;
            Some((stage, secs.trim().parse().ok()?))
        })
        .collect()
}

fn record_timing(paths: &Paths, stage: Stage, secs: f64) -> Result<()> {
    let mut t = read_timings(paths);
    t.insert(stage, secs);
    let text: String = t.iter().map(|(s, v)| format!("{} {v:.3}\n", s.name())).collect();
    std::fs::write(paths.timings(), text)?;
    Ok(())
}

fn plan(ctx: &Ctx) -> Result<String> {
    std::fs::write(ctx.paths.config(), ctx.cfg.to_toml())?;
    let params = ctx.cfg.rrt_params();
    let traj = plan_rrt(&ctx.spec, &ctx.model, ctx.cfg.seed, &params)?;
    let violations = traj.validate(&ctx.spec, &ctx.model, &params.interior_margin);
    if !violations.is_empty() {
        let v: Vec<String> = violations.iter().map(ToString::to_string).collect();
        bail!("planned trajectory is invalid: {}", v.join("; "));
    }
    traj.save(&ctx.paths.nominal())?;
    Ok(format!("plan: N = {}", traj.horizon()))
}

fn brs(ctx: &Ctx) -> Result<String> {
    let traj = ctx.load_nominal()?;
    let res = compute_brs(&ctx.model, &ctx.spec, &traj, &ctx.cfg.tube_params()?, ctx.cfg.brs.gamma)?;
    let bad = res.invariant_violations(&ctx.spec);
    if !bad.is_empty() {
        bail!("set invariants fail: {}", bad.join("; "));
    }
    res.save(&ctx.paths.brs())?;
    let h = res.lambda[0].interval_hull().radius();
    Ok(format!(
        "brs: {} steps, {} refinement rounds, Lambda_0 hull half-widths {:.4?}",
        res.horizon(),
        res.trace.len(),
        h.as_slice()
    ))
}

fn train(ctx: &Ctx) -> Result<String> {
    let traj = ctx.load_nominal()?;
    let brs = ctx.load_brs()?;
    let (nets, logs) = train_all(&ctx.model, &brs, &traj, &ctx.cfg.train_config(), Execution::Parallel)?;
    let dir = ctx.paths.controllers();
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    save_controllers(&dir, &nets)?;
    std::fs::write(ctx.paths.train_log(), train_log_csv(&logs))?;
    let worst = logs.iter().map(|l| l.validation_inside).fold(1.0, f64::min);
    Ok(format!(
        "train: {} controllers, worst validation fraction with ||d||_inf <= 1: {worst:.2}",
        nets.len()
    ))
}

pub fn train_log_csv(logs: &[TrainLog]) -> String {
    let mut s = String::from("k,epochs,best_epoch,initial_validation,best_validation,validation_inside,stopped_early\n");
    for l in logs {
        writeln!(
            s,
            "{},{},{},{:?},{:?},{:?},{}",
            l.k,
            l.epochs,
            l.best_epoch,
            l.initial_validation(),
            l.best_validation,
            l.validation_inside,
            l.stopped_early
        )
        .unwrap();
    }
    s
}

fn rollouts(ctx: &Ctx) -> Result<String> {
    let brs = ctx.load_brs()?;
    let ctl = ctx.controller()?;
    let r = &ctx.cfg.rollout;
    let runs = batch_rollouts(
        &ctl,
        &brs.lambda[0],
        r.sigma,
        r.count,
        &ctx.cfg.amplitude(),
        &ctx.model,
        ctx.rollout_seed(),
        Execution::Parallel,
    )?;
    std::fs::write(ctx.paths.rollouts(), batch_csv(&runs))?;
    Ok(format!("rollout: {} trajectories, sigma = {}", runs.len(), r.sigma))
}

pub fn hash_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Scores of a batch against the safe sets and the target.
pub fn scores(ctx: &Ctx, sets: &SafeSetSequence, runs: &[Trajectory]) -> Result<Vec<f64>> {
    runs.iter()
        .map(|t| Ok(score(t, sets, &ctx.spec.target)?.total))
        .collect()
}

fn certificate_json(ctx: &Ctx, report: &ConformalReport, sets: &SafeSetSequence) -> serde_json::Value {
    let finite = |v: f64| if v.is_finite() { serde_json::json!(v) } else { serde_json::json!("inf") };
    serde_json::json!({
        "H": report.h(),
        "delta": report.delta,
        "l": report.l,
        "q": finite(report.q),
        "verdict": format!("{:?}", report.verdict),
        "statement": report.statement(),
        "scores": report.scores,
        "safe_set_hash": hash_hex(&sets.write_text()),
        "epsilon": sets.epsilon,
        "sampling": format!(
            "starts uniform in the factors of (1 + {}) x Lambda_0, disturbances i.i.d. uniform on +-{:?}, base seed {}",
            ctx.cfg.rollout.sigma,
            ctx.cfg.rollout.amplitude,
            ctx.rollout_seed()
        ),
    })
}

fn certify_stage(ctx: &Ctx) -> Result<String> {
    let traj = ctx.load_nominal()?;
    let runs = ctx.load_rollouts()?;
    let sets = ctx.safe_sets(&traj)?;
    let lemma = sets.lemma_violations(&ctx.spec);
    if !lemma.is_empty() {
        bail!("safe sets fail the separation check: {}", lemma.join("; "));
    }
    let s = scores(ctx, &sets, &runs)?;
    let report = certify(&s, ctx.cfg.certify.delta)?;
    let json = certificate_json(ctx, &report, &sets);
    std::fs::write(ctx.paths.certificate_json(), serde_json::to_string_pretty(&json)? + "\n")?;
    let zero = s.iter().filter(|v| **v == 0.0).count();
    let text = format!(
        "H = {}, delta = {}, l = {}, q = {}\n{zero} of {} trajectories have score 0\n{}\n",
        report.h(),
        report.delta,
        report.l,
        report.q,
        report.h(),
        report.statement()
    );
    std::fs::write(ctx.paths.certificate_txt(), &text)?;
    Ok(format!("certify: {}", report.statement()))
}

/// Outcome of the probe start.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub start: Vec<f64>,
    pub in_initial_set: bool,
    pub baseline_objective: f64,
    pub network_score: f64,
    pub network_reaches_target: bool,
    pub trajectory: Trajectory,
}

pub fn probe(ctx: &Ctx, start: &[f64]) -> Result<ProbeOutcome> {
    let traj = ctx.load_nominal()?;
    let brs = ctx.load_brs()?;
    let ctl = ctx.controller()?;
    let sets = ctx.safe_sets(&traj)?;
    let x0 = nalgebra::DVector::from_column_slice(start);
    let b = baseline_control(&x0, 0, &brs, &traj, &ctx.model, &BaselineParams::default());
    let zero = nalgebra::DVector::zeros(ctx.model.state_dim());
    let run = rollout(&ctl, &x0, &zero, &ctx.model, 0)?;
    let s = score(&run, &sets, &ctx.spec.target)?;
    Ok(ProbeOutcome {
        start: start.to_vec(),
        in_initial_set: brs.lambda[0].contains(&x0),
        baseline_objective: b.objective,
        network_score: s.total,
        network_reaches_target: ctx.spec.target.contains(run.last()),
        trajectory: run,
    })
}

fn report(ctx: &Ctx) -> Result<String> {
    let traj = ctx.load_nominal()?;
    let brs = ctx.load_brs()?;
    let runs = ctx.load_rollouts()?;
    let cert = ctx.load_certificate()?;
    let sets = ctx.safe_sets(&traj)?;
    let probe = match &ctx.cfg.probe {
        Some(p) => Some(probe(ctx, &p.start)?),
        None => None,
    };
    let fig_dir = ctx.paths.figures();
    std::fs::create_dir_all(&fig_dir)?;
    figures::write_all(&fig_dir, &ctx.spec, &traj, &brs, &sets, &runs, probe.as_ref().map(|p| &p.trajectory))?;

    let train_log = std::fs::read_to_string(ctx.paths.train_log()).unwrap_or_default();
    let mut record = serde_json::json!({
        "horizon": traj.horizon(),
        "lambda0_half_widths": brs.lambda[0].interval_hull().radius().as_slice(),
        "refinement_rounds": brs.trace.len(),
        "certificate": cert,
    });
    if let Some(p) = &probe {
        record["probe"] = serde_json::json!({
            "start": p.start,
            "in_initial_set": p.in_initial_set,
            "baseline_objective": p.baseline_objective,
            "baseline_success": p.baseline_objective <= 1.0,
            "network_score": p.network_score,
            "network_reaches_target": p.network_reaches_target,
        });
    }
    std::fs::write(ctx.paths.report_json(), serde_json::to_string_pretty(&record)? + "\n")?;

    let mut s = String::new();
    writeln!(s, "nominal horizon N = {}", traj.horizon())?;
    writeln!(
        s,
        "Lambda_0 hull half-widths {:.4?} after {} refinement rounds",
        brs.lambda[0].interval_hull().radius().as_slice(),
        brs.trace.len()
    )?;
    let inside: Vec<f64> = train_log
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(5)?.parse().ok())
        .collect();
    if !inside.is_empty() {
        let worst = inside.iter().copied().fold(1.0, f64::min);
        writeln!(s, "training: worst validation fraction with ||d||_inf <= 1 is {worst:.2}")?;
    }
    writeln!(
        s,
        "rollouts: H = {}, q_(1-delta) = {}, l = {}",
        runs.len(),
        cert["q"],
        cert["l"]
    )?;
    writeln!(s, "certificate: {}", cert["statement"].as_str().unwrap_or(""))?;
    writeln!(s, "safe-set hash: {}", cert["safe_set_hash"].as_str().unwrap_or(""))?;
    if let Some(p) = &probe {
        writeln!(
            s,
            "probe {:?}: in Lambda_0 = {}, baseline objective {:.3} ({}), network score {} ({})",
            p.start,
            p.in_initial_set,
            p.baseline_objective,
            if p.baseline_objective <= 1.0 { "success" } else { "failure" },
            p.network_score,
            if p.network_reaches_target { "reaches the target" } else { "misses the target" }
        )?;
    }
    writeln!(s, "timings (s):")?;
    for (stage, secs) in read_timings(&ctx.paths) {
        writeln!(s, "  {} {secs:.3}", stage.name())?;
    }
    std::fs::write(ctx.paths.report_txt(), &s)?;
    Ok(s)
}
