use decodable::harness::{exit_code, run_experiment, sweep, ExperimentConfig, SweepConfig};

const SWEEP: &str = r#"{"configs": [
    {"label": "golf-4", "env": {"kind": "hadamard", "exponent": 2}, "class": {"kind": "hadamard"},
     "algorithm": {"name": "mgolf", "epochs": 40, "beta_c": 0.1}, "seeds": [0, 1]},
    {"label": "olive-4", "env": {"kind": "hadamard", "exponent": 2}, "class": {"kind": "hadamard"},
     "algorithm": {"name": "olive", "n_est": 200}, "seeds": [0, 1]},
    {"label": "lock", "env": {"kind": "lock", "memory": 2, "actions": 2},
     "algorithm": {"name": "ucbvi", "episodes": 300}, "seeds": [2]},
    {"label": "isrl", "env": {"kind": "random", "states": 2, "observations": 3, "actions": 2, "horizon": 2, "memory": 2, "seed": 5},
     "algorithm": {"name": "isrl", "samples": 400}, "seeds": [3]},
    {"label": "too-big", "env": {"kind": "lock", "memory": 3, "actions": 2},
     "algorithm": {"name": "isrl", "mode": "full"}, "seeds": [0]}
]}"#;

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walk(dir)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn identical_configs_write_identical_csvs() {
    let config = ExperimentConfig::from_json(
        r#"{"env": {"kind": "hadamard", "exponent": 2}, "class": {"kind": "hadamard"},
            "algorithm": {"name": "olive", "n_est": 100}, "seeds": [0, 7]}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config).unwrap().write(&dir.path().join("a")).unwrap();
    run_experiment(&config).unwrap().write(&dir.path().join("b")).unwrap();
    let a = files(&dir.path().join("a"));
    assert_eq!(a.len(), 2);
    assert_eq!(a, files(&dir.path().join("b")));
}

#[test]
fn sweep_is_independent_of_parallelism_and_isolates_failures() {
    let configs = SweepConfig::from_json(SWEEP).unwrap().configs;
    let dir = tempfile::tempdir().unwrap();
    let serial = sweep(&configs, 1).unwrap();
    let parallel = sweep(&configs, 8).unwrap();
    assert_eq!(serial.failures().len(), 1);
    assert_eq!(serial.failures()[0].0, 4);
    assert!(serial.failures()[0].1.contains("exceeds cap"));
    serial.write(&dir.path().join("s")).unwrap();
    parallel.write(&dir.path().join("p")).unwrap();
    assert_eq!(files(&dir.path().join("s")), files(&dir.path().join("p")));
    let manifest = std::fs::read_to_string(dir.path().join("s/manifest.json")).unwrap();
    assert!(manifest.contains("\"failures\""));
}

#[test]
fn single_config_sweep_matches_a_direct_run() {
    let configs = SweepConfig::from_json(SWEEP).unwrap().configs;
    let one = &configs[2];
    let direct = run_experiment(one).unwrap();
    let swept = sweep(std::slice::from_ref(one), 2).unwrap();
    let entry = swept.entries[0].outcome.as_ref().unwrap();
    assert_eq!(entry.runs, direct.runs);
    assert_eq!(swept.summary_rows().len(), 1);
    let row = &swept.summary_rows()[0];
    assert_eq!(row[0], "0");
    assert_eq!(row[1], one.hash());
    assert_eq!(row[2], "lock");
}

#[test]
fn run_errors_map_to_exit_codes() {
    let empty = ExperimentConfig::from_json(r#"{"env": {"kind": "lock", "memory": 2, "actions": 2},
        "algorithm": {"name": "ucbvi"}, "seeds": []}"#)
    .unwrap_err();
    assert_eq!(exit_code(&empty), 2);
    let configs = SweepConfig::from_json(SWEEP).unwrap().configs;
    assert_eq!(exit_code(&run_experiment(&configs[4]).unwrap_err()), 3);
    let missing = ExperimentConfig::from_json(r#"{"env": {"kind": "file", "path": "/nonexistent/model.json"},
        "algorithm": {"name": "ucbvi"}, "seeds": [1]}"#)
    .unwrap();
    assert_eq!(exit_code(&run_experiment(&missing).unwrap_err()), 4);
}
