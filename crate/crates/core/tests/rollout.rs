use nalgebra::{dvector, DVector};
use rand::Rng as _;
use safetrack::brs::{compute_brs, TubeParams};
use safetrack::controller::{Layout, StepNet};
use safetrack::geom::Zonotope;
use safetrack::model::{Dubins, ProblemSpec};
use safetrack::nominal::{plan_rrt, NominalTrajectory, RrtParams};
use safetrack::par::Execution;
use safetrack::rollout::{batch_rollouts, replay, rollout, rollout_seed, sample_start, NetworkController, OpenLoop};

fn setup() -> (ProblemSpec, Dubins, NominalTrajectory) {
    let spec = ProblemSpec::dubins_benchmark([1.0, 1.0, 0.0]);
    let model = Dubins::standard().with_disturbance([0.003, 0.003, 0.015]);
    let traj = plan_rrt(&spec, &model, 0, &RrtParams::dubins()).unwrap();
    (spec, model, traj)
}

fn random_controller(spec: &ProblemSpec, traj: &NominalTrajectory, seed: u64) -> NetworkController {
    let layout = Layout::new(3, 2, &[32; 4]).unwrap();
    let mut rng = safetrack::rng_from_seed(seed);
    let nets = (0..traj.horizon())
        .map(|k| StepNet::random(k, layout.clone(), traj.state(k).clone(), traj.input(k).clone(), 0.5, &mut rng).unwrap())
        .collect();
    NetworkController {
        nets,
        inputs: spec.inputs.clone(),
    }
}

#[test]
fn undisturbed_runs_follow_the_nominal() {
    let (spec, model, traj) = setup();
    let zero = DVector::zeros(3);
    let open = OpenLoop(traj.inputs().to_vec());
    let nets = random_controller(&spec, &traj, 1);
    for run in [
        rollout(&open, traj.state(0), &zero, &model, 0).unwrap(),
        rollout(&nets, traj.state(0), &zero, &model, 0).unwrap(),
    ] {
        for k in 0..=traj.horizon() {
            assert!((&run.states[k] - traj.state(k)).amax() <= 1e-9, "step {k}");
        }
    }
}

#[test]
fn disturbances_stay_in_the_box_and_runs_replay() {
    let (spec, model, traj) = setup();
    let ctl = random_controller(&spec, &traj, 2);
    let amp = dvector![0.003, 0.003, 0.015];
    let initial = Zonotope::from_box(&safetrack::geom::HyperRect::from_center_radius(traj.state(0), &dvector![0.05, 0.05, 0.1]).unwrap());
    let runs = batch_rollouts(&ctl, &initial, 0.0, 50, &amp, &model, 9, Execution::Parallel).unwrap();
    for (i, run) in runs.iter().enumerate() {
        assert!(run.disturbances_within(&amp));
        assert_eq!(run.seed, rollout_seed(9, i));
        assert_eq!(&replay(run, &ctl, &amp, &model).unwrap(), run);
        for k in 0..run.horizon() {
            let next = safetrack::model::DynamicsModel::step(&model, &run.states[k], &run.inputs[k]) + &run.disturbances[k];
            assert_eq!(next, run.states[k + 1]);
        }
    }
    let seq = batch_rollouts(&ctl, &initial, 0.0, 50, &amp, &model, 9, Execution::Sequential).unwrap();
    assert_eq!(seq, runs);
    let one = batch_rollouts(&ctl, &initial, 0.0, 1, &amp, &model, 9, Execution::Sequential).unwrap();
    let direct = rollout(&ctl, &sample_start(&initial, 0.0, 9, 0), &amp, &model, rollout_seed(9, 0)).unwrap();
    assert_eq!(one[0], direct);
}

#[test]
fn enlarged_starts_stay_in_the_scaled_hull() {
    let (spec, model, traj) = setup();
    let brs = compute_brs(&model, &spec, &traj, &TubeParams::default(), 1.1).unwrap();
    let lambda = &brs.lambda[0];
    let hull = lambda.interval_hull();
    let mut rng = safetrack::rng_from_seed(4);
    for i in 0..500 {
        let base = rng.random::<u64>();
        let x = sample_start(lambda, 0.0, base, i);
        assert!(lambda.contains(&x));
        let y = sample_start(lambda, 0.3, base, i);
        let off = (&y - lambda.center()).abs();
        assert!(off.iter().zip(hull.radius().iter()).all(|(o, r)| *o <= 1.3 * r + 1e-12));
    }
}
