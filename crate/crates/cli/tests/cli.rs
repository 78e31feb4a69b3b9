use std::process::Command;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bench"))
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"name": "tiny", "trials": [{"label": "near", "trajectory":
            {"kind": "static", "distance": 0.9, "yaw": 0.0, "duration": 0.2, "frame_rate": 30.0}}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bench()
        .args(["run", "--seed", "4", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--dump-frames")
        .status()
        .unwrap();
    assert!(status.success());
    for f in [
        "tiny.csv",
        "tiny.json",
        "tiny_timing.json",
        "frames/near/near_00000_l.pgm",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("tiny.csv")).unwrap();
    assert!(csv.starts_with("d_m,a_rad,p_rmse_cm,"));
    assert_eq!(csv.lines().count(), 2);

    let md = bench().args(["report", "--in"]).arg(&out).output().unwrap();
    assert!(md.status.success());
    let text = String::from_utf8(md.stdout).unwrap();
    assert!(text.contains("## tiny") && text.contains("| 0.9 | 0 |"), "{text}");

    let again = bench()
        .args(["report", "--format", "csv", "--in"])
        .arg(&out)
        .output()
        .unwrap();
    let text = String::from_utf8(again.stdout).unwrap();
    assert!(text.contains(&csv), "{text}");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bench()
        .args(["run", "--config", "/nonexistent/run.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/run.json"));

    let nothing = bench().args(["run", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!nothing.status.success());

    let empty = bench().args(["report", "--in"]).arg(dir.path()).output().unwrap();
    assert!(!empty.status.success());
}
