use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::dvector;
use safetrack::brs::{compute_brs, BrsResult, TubeParams};
use safetrack::controller::{train_all, Layout, StepNet, TrainConfig};
use safetrack::model::{Dubins, ProblemSpec};
use safetrack::nominal::{plan_rrt, NominalTrajectory, RrtParams};
use safetrack::par::Execution;
use safetrack::rollout::{batch_rollouts, NetworkController};

struct Setup {
    spec: ProblemSpec,
    model: Dubins,
    traj: NominalTrajectory,
    brs: BrsResult,
}

fn setup() -> Setup {
    let spec = ProblemSpec::dubins_benchmark([1.0, 1.0, 0.0]);
    let model = Dubins::standard().with_disturbance([0.003, 0.003, 0.015]);
    let traj = plan_rrt(&spec, &model, 0, &RrtParams::dubins()).expect("plan");
    let brs = compute_brs(&model, &spec, &traj, &TubeParams::default(), 1.1).expect("brs");
    Setup { spec, model, traj, brs }
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn rollouts(c: &mut Criterion) {
    let s = setup();
    let layout = Layout::new(3, 2, &[32; 4]).unwrap();
    let mut rng = safetrack::rng_from_seed(1);
    let nets = (0..s.traj.horizon())
        .map(|k| {
            StepNet::random(k, layout.clone(), s.traj.state(k).clone(), s.traj.input(k).clone(), 0.3, &mut rng).unwrap()
        })
        .collect();
    let ctl = NetworkController {
        nets,
        inputs: s.spec.inputs.clone(),
    };
    let amp = dvector![0.003, 0.003, 0.015];
    let mut group = c.benchmark_group("rollouts_1000");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| batch_rollouts(&ctl, &s.brs.lambda[0], 0.0, 1000, &amp, &s.model, 3, exec).unwrap())
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let s = setup();
    let cfg = TrainConfig {
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("train_all_200_epochs");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| train_all(&s.model, &s.brs, &s.traj, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, rollouts, training);
criterion_main!(benches);
