use std::path::Path;
use std::process::{Command, Output};

use mtlk::bounds::{multitask_epsilon, BoundConstants, BoundInputs};
use mtlk::envsim::{sample_lifelong, sample_multitask, InputLaw, PlantedSpec, TaskCluster, TaskEnvironment};
use mtlk::kernel::Kernel;

const FAMILY: &str = r#"variant = "sparse_combo"
k = 1
[[dictionary]]
type = "rbf"
bandwidth = 0.5
[[dictionary]]
type = "rbf"
bandwidth = 1.0
[[dictionary]]
type = "rbf"
bandwidth = 2.0
"#;

fn mtlk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtlk"))
        .args(args)
        .env_remove("MTLK_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("stderr error is JSON")
}

fn write_inputs(dir: &Path) {
    std::fs::write(dir.join("family.toml"), FAMILY).unwrap();
    let env = TaskEnvironment {
        dictionary: vec![Kernel::rbf(1.0)],
        true_kernel_index: 0,
        input_law: InputLaw::uniform_cube(2),
        clusters: vec![TaskCluster {
            weight: 1.0,
            planted: PlantedSpec::Random { n_centers: 3 },
            margin_gap: 0.05,
            flip_rate: 0.05,
        }],
    };
    let dists = sample_lifelong(&env, 3, 1).unwrap();
    let sample = sample_multitask(&dists, 15, 2).unwrap();
    let mut buf = Vec::new();
    sample.write_csv(&mut buf).unwrap();
    std::fs::write(dir.join("data.csv"), buf).unwrap();
}

#[test]
fn bound_matches_the_library() {
    let o = mtlk(&[
        "bound", "--mode", "multitask", "--n", "10", "--m", "1000", "--dphi", "4", "--B", "1", "--gamma", "0.1",
        "--delta", "0.05",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    let lib = multitask_epsilon(&BoundInputs {
        n: 10,
        m: 1000,
        d_phi: 4.0,
        b: 1.0,
        gamma: 0.1,
        delta: 0.05,
        constants: BoundConstants::default(),
    })
    .unwrap();
    assert_eq!(row[1].parse::<f64>().unwrap(), lib.epsilon);
    assert_eq!(row[2], lib.valid.to_string());
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[bound]\nmode = \"multitask\"\nn = 1\nm = 1\nd_phi = 1\nB = 1\ngamma = 0.1\ndelta = 0.1\nc_typo = 2\n",
    )
    .unwrap();
    let o = mtlk(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains("c_typo"));
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[learn]\nfamily = \"nope.toml\"\ndata = \"nope.csv\"\n").unwrap();
    let o = mtlk(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "input");
}

#[test]
fn infeasible_inversion_exits_3() {
    let o = mtlk(&[
        "bound", "--mode", "invert", "--n", "2", "--m", "2", "--dphi", "4", "--B", "1", "--gamma", "0.1", "--delta",
        "0.05",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "infeasible");
}

#[test]
fn candidate_budget_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let o = mtlk(&[
        "learn",
        "--family",
        dir.path().join("family.toml").to_str().unwrap(),
        "--data",
        dir.path().join("data.csv").to_str().unwrap(),
        "--max-candidates",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr_json(&o)["error"], "budget");
}

#[test]
fn learn_writes_solution_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = dir.path().join("out");
    let o = mtlk(&[
        "learn",
        "--family",
        dir.path().join("family.toml").to_str().unwrap(),
        "--data",
        dir.path().join("data.csv").to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sol: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["predictors"].as_array().unwrap().len(), 3);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "learn");
    assert!(manifest["artifacts"]["solution.json"].is_string());
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
    let text = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(!text.contains("timestamp"));
}

#[test]
fn replay_reproduces_artifacts_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 11\noutput_dir = \"first\"\n[cover]\nfamily = \"family.toml\"\ndim = 2\nmetric = \"d1_empirical\"\nepsilons = [0.5, 0.05]\nsample_size = 4\nprobe_budget = 4\n",
    )
    .unwrap();
    let o = mtlk(&["run", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = dir.path().join("first");
    let again = dir.path().join("again");
    let o = mtlk(&[
        "--workers",
        "1",
        "replay",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["cover.csv", "cover.json", "cover.svg"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap());
    }
    // a changed input is refused
    std::fs::write(dir.path().join("family.toml"), FAMILY.replace("2.0", "3.0")).unwrap();
    let o = mtlk(&["replay", first.join("manifest.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overhead_experiment_emits_curve_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let o = mtlk(&[
        "experiment",
        "--kind",
        "overhead",
        "--n-grid",
        "1,2",
        "--trials",
        "2",
        "--mc-samples",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = std::fs::read_to_string(out.join("overhead_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    assert!(curve.starts_with("n,mean_gap,mean_excess"));
    let rows = std::fs::read_to_string(out.join("overhead_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5);
    assert!(std::fs::read_to_string(out.join("overhead.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn sandwich_experiment_reports_each_trial() {
    let o = mtlk(&[
        "experiment",
        "--kind",
        "sandwich",
        "--n-grid",
        "2",
        "--m",
        "10",
        "--trials",
        "2",
        "--mc-samples",
        "1000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 3);
    assert!(out.lines().next().unwrap().ends_with("valid,sandwich_ok"));
}
