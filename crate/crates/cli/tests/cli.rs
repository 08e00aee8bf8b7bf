use std::path::Path;
use std::process::{Command, Output};

fn rclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rclab")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let o = rclab(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

fn same_dirs(a: &Path, b: &Path) {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut other: Vec<_> = std::fs::read_dir(b).unwrap().map(|e| e.unwrap().file_name()).collect();
    other.sort();
    assert_eq!(names, other);
    for n in names {
        let n = n.to_str().unwrap();
        assert!(read(a, n) == read(b, n), "{n} differs");
    }
}

fn error_json(o: &Output) -> serde_json::Value {
    let s = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(s.lines().last().unwrap()).expect("machine-readable error")
}

#[test]
fn oracle_writes_exact_table() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("o");
    run_ok(&["oracle", "--dim", "2", "--n", "1", "--q", "2", "--p", "0.6", "--bc", "wired", "--out", out.to_str().unwrap()]);
    let text = String::from_utf8(read(&out, "exact.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mask,config,probability"));
    let probs: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(probs.len(), 1 << 12);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let m: serde_json::Value = serde_json::from_slice(&read(&out, "manifest.json")).unwrap();
    assert_eq!(m["config"]["q"], 2.0);
}

#[test]
fn oracle_cap_has_its_own_exit_code() {
    let t = tempfile::tempdir().unwrap();
    let o = rclab(&["oracle", "--dim", "3", "--n", "2", "--p", "0.5", "--out", t.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "oracle_cap");
}

#[test]
fn crossing_at_p_one_is_certain() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("c");
    run_ok(&["crossing", "--p", "1", "--q", "2", "--n", "2", "--sweeps", "64", "--out", out.to_str().unwrap()]);
    let text = String::from_utf8(read(&out, "results.csv")).unwrap();
    let row = text.lines().find(|l| l.starts_with("face_crossing")).unwrap();
    assert!(row.contains(",1.0,0.0,"), "{row}");
}

#[test]
fn config_errors_exit_two_before_sampling() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("x");
    for args in [
        vec!["crossing", "--p", "1.5"],
        vec!["crossing"],
        vec!["crossing", "--p", "0.5", "--beta", "0.3"],
        vec!["crossing", "--p", "0.5", "--bc", "mixed:x9+"],
        vec!["sample", "--p", "0.5", "--q", "1.5", "--kernel", "cluster"],
        vec!["nonsense"],
    ] {
        let mut a = args.clone();
        a.extend(["--out", out.to_str().unwrap()]);
        let o = rclab(&a);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(error_json(&o)["error"], "config");
    }
    assert!(!out.join("results.csv").exists());
}

#[test]
fn estimator_failure_exits_four() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("r");
    let o = rclab(&[
        "renorm", "--p", "0", "--block-l", "2", "--block-h", "6", "--sweeps", "64", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("calibration.json").exists());
}

#[test]
fn toml_file_with_flag_override() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("c.toml");
    std::fs::write(&cfg, "command = \"crossing\"\nq = 2.0\np = 0.0\nn = 2\nsweeps = 64\n").unwrap();
    let out = t.path().join("o");
    run_ok(&["--config", cfg.to_str().unwrap(), "--p", "1", "--out", out.to_str().unwrap()]);
    let m: serde_json::Value = serde_json::from_slice(&read(&out, "manifest.json")).unwrap();
    assert_eq!(m["config"]["p"], 1.0);
    assert_eq!(m["config"]["q"], 2.0);
    assert_eq!(m["command"], "crossing");
}

#[test]
fn threshold_is_byte_identical_across_reruns_and_threads() {
    let t = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = ["a", "b", "c"].iter().map(|n| t.path().join(n)).collect();
    let base = ["threshold", "--q", "2", "--L", "2", "--ns", "3,6", "--sweeps", "96", "--depth", "3", "--seed", "5"];
    for (d, threads) in dirs.iter().zip(["1", "1", "3"]) {
        let mut a = base.to_vec();
        a.extend(["--threads", threads, "--out", d.to_str().unwrap()]);
        run_ok(&a);
    }
    let r: serde_json::Value = serde_json::from_slice(&read(&dirs[0], "threshold.json")).unwrap();
    assert_eq!(r["criterion"], "slab");
    assert_eq!(r["trace"].as_array().unwrap().len(), 3);
    same_dirs(&dirs[0], &dirs[1]);
    same_dirs(&dirs[0], &dirs[2]);
}

#[test]
fn manifest_reproduces_its_artifacts() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    run_ok(&["mixing", "--q", "2", "--p", "0.5", "--k", "1", "--sweeps", "128", "--replicas", "2", "--out", a.to_str().unwrap()]);
    let m = a.join("manifest.json");
    run_ok(&["--config", m.to_str().unwrap(), "--threads", "2", "--out", b.to_str().unwrap()]);
    same_dirs(&a, &b);
}

fn crossing_run(dir: &Path, first: &str, reps: &str) {
    run_ok(&[
        "crossing", "--q", "2", "--p", "0.4", "--n", "2", "--sweeps", "64", "--seed", "11", "--first-replica", first,
        "--replicas", reps, "--out", dir.to_str().unwrap(),
    ]);
}

#[test]
fn merge_is_commutative_and_matches_one_run() {
    let t = tempfile::tempdir().unwrap();
    let p = |n: &str| t.path().join(n);
    crossing_run(&p("r0"), "0", "1");
    crossing_run(&p("r1"), "1", "1");
    crossing_run(&p("r2"), "2", "1");
    crossing_run(&p("all"), "0", "3");
    let f = |n: &str| p(n).join("partial.json").to_str().unwrap().to_string();
    run_ok(&["merge", &f("r0"), &f("r1"), &f("r2"), "--out", p("m1").to_str().unwrap()]);
    run_ok(&["merge", &f("r2"), &f("r0"), &f("r1"), "--out", p("m2").to_str().unwrap()]);
    same_dirs(&p("m1"), &p("m2"));
    for name in ["partial.json", "results.csv"] {
        assert!(read(&p("m1"), name) == read(&p("all"), name), "{name}");
    }
    run_ok(&["merge", &f("r1"), "--out", p("id").to_str().unwrap()]);
    for name in ["partial.json", "results.csv"] {
        assert!(read(&p("id"), name) == read(&p("r1"), name), "{name}");
    }
}

#[test]
fn merge_refuses_mismatched_configs() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    crossing_run(&a, "0", "1");
    run_ok(&["crossing", "--q", "2", "--p", "0.5", "--n", "2", "--sweeps", "64", "--seed", "11", "--first-replica", "1", "--out", b.to_str().unwrap()]);
    let o = rclab(&[
        "merge",
        a.join("partial.json").to_str().unwrap(),
        b.join("partial.json").to_str().unwrap(),
        "--out",
        t.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = rclab(&[
        "merge",
        a.join("partial.json").to_str().unwrap(),
        a.join("partial.json").to_str().unwrap(),
        "--out",
        t.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn renorm_demo_writes_growth() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("r");
    run_ok(&[
        "renorm", "--p", "0.97", "--k", "1", "--ell", "6", "--h", "18", "--block-l", "6", "--block-h", "18", "--m", "1",
        "--out", out.to_str().unwrap(),
    ]);
    let r: serde_json::Value = serde_json::from_slice(&read(&out, "renorm.json")).unwrap();
    assert_eq!(r["runs"][0]["verified"], true);
    assert!(out.join("growth_r0.svg").exists());
}

#[test]
fn sample_writes_snapshots() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("s");
    run_ok(&["sample", "--q", "1.5", "--p", "0.5", "--n", "1", "--sweeps", "64", "--replicas", "2", "--out", out.to_str().unwrap()]);
    for f in ["snapshot_r0.rcs", "snapshot_r1.rcs", "results.csv", "partial.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
