use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn diskf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diskf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn repeated_runs_write_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "--scenario",
        "dynamic_9agent",
        "--seeds",
        "0..3",
        "--estimator",
        "diskf,oracle",
    ];
    assert!(diskf(&args, a.path()).status.success());
    assert!(diskf(&args, b.path()).status.success());
    for name in [
        "dynamic_9agent_diskf_r120_trace.csv",
        "dynamic_9agent_oracle_r120_trace.csv",
        "dynamic_9agent_aggregate.csv",
    ] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn trace_and_aggregate_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = diskf(&["--seeds", "5", "--topology", "ring"], dir.path());
    assert!(out.status.success());
    let trace = String::from_utf8(read(dir.path(), "stationary_4agent_diskf_trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,seed,step,agent_id,truth_x,truth_y,truth_d,est_x,est_y,est_d,input_valid,n_neighbors"
    );
    assert_eq!(lines.count(), 200 * 4);
    let aggregate = String::from_utf8(read(dir.path(), "stationary_4agent_aggregate.csv")).unwrap();
    let rows: Vec<&str> = aggregate.lines().collect();
    assert_eq!(rows[0], "estimator,topology,radius,metric,value");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("diskf,ring,,mae_state,"));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_diskf"))
        .args(["--seeds", "1", "--horizon", "20"])
        .env("DISKF_OUT", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("stationary_4agent_aggregate.csv").exists());
}

#[test]
fn radius_sweep_writes_one_trace_per_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = diskf(
        &[
            "--scenario",
            "dynamic",
            "--seeds",
            "0",
            "--horizon",
            "30",
            "--sweep-radii",
            "0,60,120",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for r in ["0", "60", "120"] {
        assert!(dir
            .path()
            .join(format!("dynamic_9agent_sweep_diskf_r{r}_trace.csv"))
            .exists());
    }
    let aggregate =
        String::from_utf8(read(dir.path(), "dynamic_9agent_sweep_aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 1 + 3 * 4);
}

#[test]
fn printed_config_reloads_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let printed = diskf(
        &[
            "--scenario",
            "dynamic",
            "--seeds",
            "3",
            "--horizon",
            "40",
            "--no-compensation",
            "--print-config",
        ],
        dir.path(),
    );
    assert!(printed.status.success());
    let file = dir.path().join("scenario.toml");
    fs::write(&file, &printed.stdout).unwrap();

    let from_file = dir.path().join("a");
    let from_flags = dir.path().join("b");
    assert!(diskf(&["--config", file.to_str().unwrap()], &from_file)
        .status
        .success());
    assert!(diskf(
        &[
            "--scenario",
            "dynamic",
            "--seeds",
            "3",
            "--horizon",
            "40",
            "--no-compensation"
        ],
        &from_flags
    )
    .status
    .success());
    let name = "dynamic_9agent_diskf_r120_trace.csv";
    assert_eq!(read(&from_file, name), read(&from_flags, name));
}

#[test]
fn ablation_flags_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "--scenario",
        "stationary",
        "--topology",
        "ring",
        "--seeds",
        "0,1",
    ];
    let run = |extra: &[&str], sub: &str| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        let out = diskf(&args, &dir.path().join(sub));
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let full = run(&[], "full");
    assert_ne!(full, run(&["--no-compensation"], "nc"));
    assert_ne!(full, run(&["--no-input-fusion"], "nf"));
    assert_ne!(full, run(&["--epsilon", "0.01"], "eps"));
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["--scenario", "nope"][..],
        &["--seeds", "3..3"],
        &["--estimator", "kalman"],
        &["--sweep-radii", "10", "--topology", "ring"],
        &["--config", "/nonexistent/scenario.toml"],
    ] {
        let out = diskf(args, dir.path());
        assert!(!out.status.success(), "{args:?} should fail");
    }
}
