use std::path::Path;
use std::process::{Command, Output};

use safetrack_cli::ExperimentConfig;

const SMOKE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.toml");

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safetrack"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

#[test]
fn full_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let first = run(&["all", "--config", SMOKE], out);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("q_(1-delta)"), "{report}");
    assert!(report.contains("timings (s):"), "{report}");
    assert!(report.contains("probe [1.0, 0.8, 0.0]"), "{report}");
    for f in ["nominal.txt", "brs.txt", "train_log.csv", "rollouts.csv", "certificate.json", "figures/xy.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(json["H"], 20);
    assert_eq!(json["scores"].as_array().unwrap().len(), 20);
    assert_eq!(json["safe_set_hash"].as_str().unwrap().len(), 64);

    let before = std::fs::read(out.join("report.json")).unwrap();
    let again = run(&["all", "--config", SMOKE], out);
    assert!(again.status.success());
    assert_eq!(before, std::fs::read(out.join("report.json")).unwrap());
}

#[test]
fn missing_inputs_name_the_producing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let fail = run(&["brs", "--config", SMOKE], out);
    assert!(!fail.status.success());
    assert!(String::from_utf8_lossy(&fail.stderr).contains("run plan first"));

    for stage in ["plan", "brs", "train"] {
        assert!(run(&[stage, "--config", SMOKE], out).status.success(), "{stage}");
    }
    let fail = run(&["certify", "--config", SMOKE], out);
    assert!(!fail.status.success());
    assert!(String::from_utf8_lossy(&fail.stderr).contains("run rollout first"));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let ok = run(&["plan", "--config", SMOKE, "--seed", "3", "--sigma", "0.1", "--delta", "0.1"], out);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let cfg = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!((cfg.seed, cfg.rollout.sigma, cfg.certify.delta), (3, 0.1, 0.1));
    assert_eq!(cfg.out, out);

    let bad = run(&["plan", "--config", SMOKE, "--delta", "1.5"], out);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("certify.delta"));
}

#[test]
fn bundled_configs_round_trip() {
    for name in ["default", "smoke"] {
        let path = format!("{}/../../configs/{name}.toml", env!("CARGO_MANIFEST_DIR"));
        let cfg = ExperimentConfig::load(Path::new(&path)).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.probe.as_ref().map(|p| p.start.clone()), Some(vec![1.0, 0.8, 0.0]));
    }
}
