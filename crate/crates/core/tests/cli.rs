use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgpu-memsim"))
        .args(args)
        .env_remove("MGPU_MEMSIM_SEED")
        .output()
        .unwrap()
}

fn out_arg(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

#[test]
fn simulate_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--mode",
        "rdma",
        "--workload",
        "sgemm:n=64,dist=L0R100",
        "--out",
        out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "counters.csv", "phases.csv", "links.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(report.contains("\"mode\": \"rdma\""));
}

#[test]
fn compare_writes_plotdata_and_labels_reference_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "compare",
        "--workload",
        "dnn:alg=shared,w=16K",
        "--workload",
        "sgemm:n=64",
        "--out",
        out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plot = std::fs::read_to_string(dir.path().join("plotdata.txt")).unwrap();
    assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 6);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("reference only"));
}

#[test]
fn sweep_over_offchip_bandwidth() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep",
        "--param",
        "offchip_bw_gbps=16,32,50",
        "--modes",
        "rdma",
        "--workload",
        "synthetic:local=0,accesses=200",
        "--out",
        out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn trace_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.trace");
    let o = run(&[
        "trace",
        "--workload",
        "dnn:alg=p2p,w=8K",
        "--file",
        file.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let out = dir.path().join("run");
    let o = run(&[
        "simulate",
        "--workload",
        file.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failures_exit_with_their_category() {
    let dir = tempfile::tempdir().unwrap();
    let d = out_arg(dir.path());
    let o = run(&[
        "simulate",
        "--set",
        "num_gpus=0",
        "--workload",
        "sgemm:n=64",
        "--out",
        d,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [config]"));

    let o = run(&["simulate", "--workload", "/nonexistent/file.trace", "--out", d]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [workload]"));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mgpu-memsim"))
        .args([
            "simulate",
            "--workload",
            "synthetic:local=0.5,accesses=20",
            "--out",
            out_arg(dir.path()),
        ])
        .env("MGPU_MEMSIM_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success());
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(report.contains("\"seed\": 99"));
}
