use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_plapflow");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN).args(args).arg("--out").arg(out).env("RUST_LOG", "error").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (h, n) = l.split_once("  ").expect("manifest line");
            (h.to_string(), n.to_string())
        })
        .collect()
}

fn listed_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.txt")
        .collect();
    names.sort();
    names
}

fn assert_manifest_complete(dir: &Path) {
    let entries = manifest(dir);
    let names: Vec<String> = entries.iter().map(|(_, n)| n.clone()).collect();
    assert_eq!(names, listed_files(dir));
    for (hash, name) in entries {
        let bytes = fs::read(dir.join(&name)).unwrap();
        assert_eq!(hash, hex::encode(Sha256::digest(&bytes)), "{name}");
    }
}

#[test]
fn minimal_z1_run_writes_one_trace_with_header_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["evolve", p(&configs().join("smoke_z1.toml"))], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("trace_1.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("# plap-flow v1"));
    assert!(trace.contains("# p = 2\n"));
    assert!(trace.contains("# graph = Z^1 ball R=16 vertices=33\n"));
    assert!(trace.contains("# amplitude = 1\n"));
    assert!(trace.contains("\nt,dt,linf,mass,E2,Dp,boundary_max\n"));
    assert_eq!(listed_files(&out), ["resolved_evolve.toml", "trace_1.csv"]);
    assert_manifest_complete(&out);
}

#[test]
fn decay_with_alpha_at_least_p_is_rejected_citing_h1() {
    let tmp = tempfile::tempdir().unwrap();
    let o =
        run(&["evolve", p(&configs().join("decay_z3.toml")), "--set", "density.alpha=2.5"], &tmp.path().join("run"));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("H1 window"), "{}", stderr(&o));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn universal_requires_alpha_above_p() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        &["evolve", p(&configs().join("universal_z3.toml")), "--set", "density.alpha=2.0"],
        &tmp.path().join("run"),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("alpha > p"), "{}", stderr(&o));
}

#[test]
fn reference_universal_config_writes_one_trace_per_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(
        &[
            "evolve",
            p(&configs().join("universal_z3.toml")),
            "--set",
            "graph.R=5",
            "--set",
            "flow.T=2",
            "--set",
            "flow.snapshots=30",
        ],
        &out,
    );
    assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));
    for s in ["1", "10", "100"] {
        assert!(out.join(format!("trace_{s}.csv")).exists(), "scale {s}");
    }
    assert_manifest_complete(&out);
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[graph]\nN = 1\nR = \"sixteen\"\n");
    let o = run(&["evolve", p(&cfg)], &tmp.path().join("run"));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "[graph]\nN = 1\nR = 8\n[flow]\np = 2.5\nwrong_key = 1\n");
    let o = run(&["evolve", p(&cfg)], &tmp.path().join("run"));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("wrong_key"), "{}", stderr(&o));
}

#[test]
fn tainted_boundary_exits_with_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["evolve", p(&configs().join("smoke_z1.toml")), "--set", "graph.R=3", "--set", "flow.T=20"], &out);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(fs::read_to_string(out.join("trace_1.csv")).unwrap().contains("# tainted = true"));
}

#[test]
fn evolve_is_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("decay_z3.toml");
    let args = ["evolve", p(&cfg), "--set", "graph.R=6", "--set", "flow.T=2", "--set", "initial_data.scales=[1, 3]"];
    let mut dirs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("t{threads}"));
        let o = Command::new(BIN).args(args).arg("--out").arg(&out).env("PLAPFLOW_THREADS", threads).output().unwrap();
        assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));
        dirs.push(out);
    }
    let files = listed_files(&dirs[0]);
    assert_eq!(files, listed_files(&dirs[1]));
    for f in files.iter().chain(std::iter::once(&"manifest.txt".to_string())) {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_thread_count_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["graph-dump", p(&configs().join("smoke_z1.toml")), "--stdout"])
        .env("PLAPFLOW_THREADS", "zero")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("PLAPFLOW_THREADS"));
}

#[test]
fn verify_lemma24_on_power_density_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["verify", p(&configs().join("decay_z3.toml")), "--set", "verify.suites=[\"lemma24\"]"], &out);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(out.join("lemma24.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("inequality,trials,worst_ratio,seed,witness_file"));
    assert!(lines.next().unwrap().starts_with("lemma24,"));
    assert_manifest_complete(&out);
}

#[test]
fn verify_gn_with_q_at_least_p_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        &["verify", p(&configs().join("decay_z3.toml")), "--set", "verify.suites=[\"gn\"]", "--set", "verify.gn_q=2.5"],
        &tmp.path().join("run"),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("q < p"), "{}", stderr(&o));
}

#[test]
fn verify_caccioppoli_reports_positive_minimum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["verify", p(&configs().join("decay_z3.toml")), "--set", "verify.suites=[\"caccioppoli\"]"], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("caccioppoli.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "caccioppoli");
    assert_eq!(row[1], "10000");
    let min_ratio: f64 = row[2].parse().unwrap();
    assert!(min_ratio > 0.0 && min_ratio.is_finite());
    assert_eq!(row[4], "caccioppoli_witness.txt");
    let witness = fs::read_to_string(out.join(row[4])).unwrap();
    assert_eq!(witness.lines().count(), 2);
}

#[test]
fn verify_suites_write_reports_and_witnesses() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(
        &[
            "verify",
            p(&configs().join("decay_z3.toml")),
            "--set",
            "graph.R=8",
            "--set",
            "verify.trials=12",
            "--set",
            "verify.polish_sweeps=1",
            "--set",
            "verify.lemma21_radii=[2, 4, 8]",
        ],
        &out,
    );
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    for suite in ["sobolev", "faber_krahn", "gn", "lemma21", "lemma24", "caccioppoli"] {
        let csv = fs::read_to_string(out.join(format!("{suite}.csv"))).unwrap();
        let row = csv.lines().nth(1).unwrap();
        assert!(row.starts_with(&format!("{suite},")), "{row}");
        let witness = row.rsplit(',').next().unwrap();
        if witness != "-" {
            assert!(out.join(witness).exists());
        }
    }
    let sob = fs::read_to_string(out.join("sobolev_witness.txt")).unwrap();
    for line in sob.lines() {
        let (x, v) = line.split_once(' ').unwrap();
        x.parse::<usize>().unwrap();
        v.parse::<f64>().unwrap();
    }
    assert_manifest_complete(&out);
}

#[test]
fn verify_fails_when_budget_is_exceeded() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "verify",
            p(&configs().join("decay_z3.toml")),
            "--set",
            "verify.suites=[\"lemma21\"]",
            "--set",
            "verify.lemma21_budget=1.0",
        ],
        &tmp.path().join("run"),
    );
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("lemma21: FAIL"));
}

/// Trace file whose sup norm follows `c t^slope` exactly.
fn synthetic_trace(meta: &[(&str, &str)], slope: f64, c: f64) -> String {
    let mut s = String::from("# plap-flow v1\n");
    for (k, v) in meta {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s.push_str("t,dt,linf,mass,E2,Dp,boundary_max\n");
    let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},1,1,1,0", 0.0, 0.0, c);
    let (lo, hi): (f64, f64) = (0.03, 30.0);
    let k = 200;
    let mut prev = 0.0;
    for i in 0..k {
        let t = lo * (hi / lo).powf(i as f64 / (k - 1) as f64);
        let _ = writeln!(s, "{t:.16e},{:.16e},{:.16e},1,1,1,0", t - prev, c * t.powf(slope));
        prev = t;
    }
    s
}

#[test]
fn analyze_exact_power_law_matches_theory() {
    let tmp = tempfile::tempdir().unwrap();
    // N = 3, p = 2.5, alpha = 1: rate (N - alpha) / H = 2 / 2.5.
    let meta = [("p", "2.5"), ("density", "power(alpha=1)"), ("horizon", "30"), ("snapshots", "200")];
    let path = tmp.path().join("trace_synthetic.csv");
    fs::write(&path, synthetic_trace(&meta, -0.8, 3.0)).unwrap();
    let out = tmp.path().join("report");
    let o = run(&["analyze", p(&configs().join("decay_z3.toml")), p(&path)], &out);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(out.join("decay_synthetic.csv")).unwrap();
    let value = |key: &str| -> f64 {
        csv.lines()
            .find_map(|l| l.strip_prefix(&format!("{key},")))
            .unwrap_or_else(|| panic!("{key} missing"))
            .parse()
            .unwrap()
    };
    assert!((value("exponent") + 0.8).abs() < 1e-10);
    assert!((value("theory_exponent") + 0.8).abs() < 1e-12);
    assert!(fs::read_to_string(out.join("decay_synthetic.txt")).unwrap().contains("verdict: PASS"));
    assert_manifest_complete(&out);

    fs::write(&path, synthetic_trace(&meta, -0.5, 3.0)).unwrap();
    let o = run(&["analyze", p(&configs().join("decay_z3.toml")), p(&path)], &out);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("verdict: FAIL"));
}

#[test]
fn analyze_rejects_traces_from_another_config() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("trace_other.csv");
    fs::write(&path, synthetic_trace(&[("p", "3"), ("density", "power(alpha=1)")], -0.8, 1.0)).unwrap();
    let o = run(&["analyze", p(&configs().join("decay_z3.toml")), p(&path)], &tmp.path().join("report"));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("mismatch"), "{}", stderr(&o));
}

#[test]
fn analyze_rejects_mismatched_universal_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("trace_a.csv");
    let b = tmp.path().join("trace_b.csv");
    let common = [("p", "2.5"), ("density", "power(alpha=3)"), ("snapshots", "200")];
    let with = |h: &'static str| {
        let mut m = common.to_vec();
        m.push(("horizon", h));
        m
    };
    fs::write(&a, synthetic_trace(&with("30"), -1.0, 1.0)).unwrap();
    fs::write(&b, synthetic_trace(&with("60"), -1.0, 10.0)).unwrap();
    let o = run(&["analyze", p(&configs().join("universal_z3.toml")), p(&a), p(&b)], &tmp.path().join("report"));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("mismatch"), "{}", stderr(&o));
}

#[test]
fn analyze_rejects_other_format_versions() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("trace_v2.csv");
    let text = synthetic_trace(&[("p", "2.5")], -0.8, 1.0).replace("plap-flow v1", "plap-flow v2");
    fs::write(&path, text).unwrap();
    let o = run(&["analyze", p(&configs().join("decay_z3.toml")), p(&path)], &tmp.path().join("report"));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("plap-flow v1"), "{}", stderr(&o));
}

#[test]
fn heat_run_round_trips_through_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = configs().join("smoke_z1.toml");
    let set = ["--set", "graph.R=80", "--set", "flow.T=60", "--set", "flow.snapshots=60"];
    let mut args = vec!["evolve", p(&cfg)];
    args.extend(set);
    let o = run(&args, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = out.join("trace_1.csv");
    let mut args = vec!["analyze", p(&cfg)];
    args.extend(set);
    args.push(p(&trace));
    let o = run(&args, &out);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let text = fs::read_to_string(out.join("decay_1.txt")).unwrap();
    assert!(text.contains("theory -0.5000"), "{text}");
    assert_eq!(
        listed_files(&out),
        ["decay_1.csv", "decay_1.txt", "resolved_analyze.toml", "resolved_evolve.toml", "trace_1.csv"]
    );
    assert_manifest_complete(&out);
}

#[test]
fn graph_dump_writes_the_ball() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["graph-dump", p(&configs().join("smoke_z1.toml")), "--set", "graph.R=3"], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dump = fs::read_to_string(out.join("graph.txt")).unwrap();
    let header: Vec<&str> = dump.lines().next().unwrap().split(' ').collect();
    assert_eq!(&header[..3], ["1", "3", "7"]);
    assert_manifest_complete(&out);

    let o = Command::new(BIN)
        .args(["graph-dump", p(&configs().join("smoke_z1.toml")), "--set", "graph.R=3", "--stdout"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), dump);
}
