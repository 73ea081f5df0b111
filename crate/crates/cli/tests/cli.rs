use std::process::Command;

fn decodable(args: &[&str], cwd: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_decodable")).args(args).current_dir(cwd).output().unwrap()
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = decodable(&["--help"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["env", "verify", "run", "analyze", "sweep", "DECODABLE_ORACLE_CAP"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
    let run = String::from_utf8(decodable(&["run", "--help"], dir.path()).stdout).unwrap();
    for cmd in ["mgolf", "ucbvi", "isrl", "olive", "config"] {
        assert!(run.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("empty.json"), r#"{"env": {"kind": "lock", "memory": 2, "actions": 2},
        "algorithm": {"name": "ucbvi"}, "seeds": []}"#)
    .unwrap();
    assert_eq!(decodable(&["run", "config", "--config", "empty.json", "--out", "o"], d).status.code(), Some(2));
    assert_eq!(decodable(&["verify", "--env", "missing.json"], d).status.code(), Some(4));
    assert!(decodable(&["env", "build", "--kind", "lock", "--memory", "3", "--out", "l.json"], d).status.success());
    let cap = decodable(&["run", "isrl", "--env", "l.json", "--mode", "full", "--out", "i.csv"], d);
    assert_eq!(cap.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&cap.stderr).contains("exceeds cap"));
}

#[test]
fn verify_reports_a_witness_below_the_memory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(decodable(&["env", "build", "--kind", "lock", "--memory", "2", "--out", "l.json"], d).status.success());
    let at = String::from_utf8(decodable(&["verify", "--env", "l.json"], d).stdout).unwrap();
    assert!(at.contains("decodable = true"));
    let below = String::from_utf8(decodable(&["verify", "--env", "l.json", "--memory", "1"], d).stdout).unwrap();
    assert!(below.contains("decodable = false") && below.contains("witness"));
}

#[test]
fn config_run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), r#"{"env": {"kind": "hadamard", "exponent": 2}, "class": {"kind": "hadamard"},
        "algorithm": {"name": "mgolf", "epochs": 20, "beta_c": 0.1}, "seeds": [0], "output": "res"}"#)
    .unwrap();
    assert!(decodable(&["run", "config", "--config", "c.json"], d).status.success());
    for f in ["detail.csv", "summary.csv", "manifest.json"] {
        assert!(d.join("res").join(f).exists(), "{f}");
    }
    let detail = std::fs::read_to_string(d.join("res/detail.csv")).unwrap();
    assert!(detail.starts_with("seed,epoch,selected,optimistic_value,confset_size,episodes_used,exact_gap"));
}
