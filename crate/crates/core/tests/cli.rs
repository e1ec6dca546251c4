use std::path::Path;
use std::process::Command;

fn skewlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_skewlab")).args(args).output().expect("spawn skewlab")
}

fn construct(dir: &Path, extra: &[&str]) -> std::process::Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["construct", "--stages", "1", "--out", out];
    args.extend_from_slice(extra);
    skewlab(&args)
}

#[test]
fn construct_succeeds_and_lists_existing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = construct(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    let artifacts = summary["artifacts"].as_array().expect("artifact list");
    assert!(!artifacts.is_empty());
    for a in artifacts {
        let name = a.as_str().unwrap();
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    assert!(dir.path().join("stage_1.json").exists());
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(construct(dir.path(), &["--stages", "0"]).status.code(), Some(2));
    assert_eq!(skewlab(&["no-such-command"]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"unknown_field\": 1}").unwrap();
    let o = skewlab(&["construct", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("nope/stage_1.json");
    assert_eq!(skewlab(&["certify", "--checkpoint", missing.to_str().unwrap()]).status.code(), Some(2));
    let garbage = dir.path().join("stage_9.json");
    std::fs::write(&garbage, "not json").unwrap();
    assert_eq!(skewlab(&["certify", "--checkpoint", garbage.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn certificate_failure_exits_one_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\"stages\": 2, \"mean_equi_k_max\": 1}").unwrap();
    let out = dir.path().join("run");
    let o = skewlab(&["construct", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("failure.json").exists());
    assert!(out.join("stage_1.json").exists());
    assert!(!out.join("stage_2.json").exists());
}

#[test]
fn downstream_commands_read_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(construct(dir.path(), &[]).status.code(), Some(0));
    let ck = dir.path().join("stage_1.json");
    let ck = ck.to_str().unwrap();
    let o = skewlab(&["certify", "--checkpoint", ck]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let capt = dir.path().join("capt.json");
    let o = skewlab(&["capt", "--checkpoint", ck, "--orbit", "20000", "--out", capt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("orbit.csv");
    let o = skewlab(&["export", "--checkpoint", ck, "--what", "orbit", "--n", "2000", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    for svg in [&a, &b] {
        let o = skewlab(&["plot", "--kind", "orbit", "--input", csv.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
