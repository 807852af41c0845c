use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn robtop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robtop")).args(args).output().unwrap()
}

fn smoke_args(out: &Path) -> Vec<String> {
    [
        "--preset",
        "cantilever",
        "--set",
        "nx=12",
        "--set",
        "ny=6",
        "--set",
        "filter_radius=0.3",
        "--set",
        "e_d=0.1",
        "--set",
        "budget=0.01",
        "--set",
        "max_iter=5",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

fn run_ok(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = robtop(&refs);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn smoke_run_is_quick_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = run_ok(&smoke_args(dir.path()));
    assert!(start.elapsed() < Duration::from_secs(10));
    for name in ["report.csv", "iterations.log", "meta.txt", "robust_density.pgm", "nominal_density.pgm"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("nominal compliance"));
}

#[test]
fn sweep_flag_sorts_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = smoke_args(dir.path());
    args.extend(["--sweep".into(), "D=0.02,0.01".into(), "--continuation".into(), "steps=3".into()]);
    run_ok(&args);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let budgets: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(budgets, ["0.01", "0.02"]);
    assert!(csv.lines().next().unwrap().contains("_contin"));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "preset = cantilever\nnx = 12\nny = 6\nfilter_radius = 0.3\nmax_iter = 2\n").unwrap();
    let out = dir.path().join("out");
    run_ok(&["--config".into(), cfg.display().to_string(), "--out".into(), out.display().to_string()]);
    let meta = std::fs::read_to_string(out.join("meta.txt")).unwrap();
    assert!(meta.contains("nx = 12"));
}

#[test]
fn bad_configuration_exits_with_two() {
    let out = robtop(&["--preset", "cantilever", "--set", "volume_fraction=1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("volume_fraction") && err.contains("(0, 1]"), "{err}");

    let out = robtop(&["--preset", "cantilever", "--sweep", "0.1,0.2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_failure_exits_with_one_and_names_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = smoke_args(dir.path());
    args.extend(["--set".into(), "max_newton=1".into()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = robtop(&refs);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("robtop: ["), "{err}");
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let mut args = smoke_args(d);
        args.extend(["--seed".into(), "7".into()]);
        run_ok(&args);
    }
    for name in ["report.csv", "iterations.log", "meta.txt", "worst_delta.pgm"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        if name == "meta.txt" {
            // The echoed output path differs.
            let strip = |v: Vec<u8>| String::from_utf8(v).unwrap().lines().filter(|l| !l.starts_with("out =")).collect::<Vec<_>>().join("\n");
            assert_eq!(strip(x), strip(y));
        } else {
            assert_eq!(x, y, "{name} differs");
        }
    }
}
