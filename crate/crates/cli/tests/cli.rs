use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/curves_le600.csv")
}

fn murmur(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_murmur"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = murmur(args);
    assert!(
        out.status.success(),
        "murmur {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Fixture curves, a 100-prime cache built from them, and an output directory.
struct Setup {
    dir: TempDir,
    cache: PathBuf,
}

impl Setup {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let cache = dir.path().join("traces.murm");
        let out = dir.path().join("build");
        ok(&["traces", "--curves", s(&fixture()), "--cache", s(&cache), "--primes", "100", "--out", s(&out)]);
        Setup { dir, cache }
    }

    fn run(&self, cmd: &str, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.dir.path().join(out);
        let curves = fixture();
        let mut args = vec![
            cmd,
            "--curves",
            s(&curves),
            "--cache",
            s(&self.cache),
            "--primes",
            "100",
            "--range",
            "11:600",
            "--shuffles",
            "200",
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

#[test]
fn ingest_of_empty_input_reports_zero_curves() {
    let dir = TempDir::new().unwrap();
    for (name, body) in [("empty.csv", ""), ("header.csv", "label,conductor,rank,a1,a2,a3,a4,a6,root_number,sha_an,real_period,regulator,tamagawa_product,torsion_order,l_value\n")] {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        let out = dir.path().join(format!("out_{name}"));
        ok(&["ingest", "--curves", s(&path), "--out", s(&out)]);
        let r = json(&out.join("ingest.json"));
        assert_eq!(r["result"]["n_curves"], 0, "{name}");
    }
}

#[test]
fn ingest_summarizes_fixture() {
    let dir = TempDir::new().unwrap();
    ok(&["ingest", "--curves", s(&fixture()), "--out", s(dir.path())]);
    let r = json(&dir.path().join("ingest.json"));
    assert_eq!(r["result"]["n_curves"], 2777);
    assert_eq!(r["result"]["n_rejected"], 0);
    assert_eq!(r["command"], "ingest");
    assert_eq!(r["inputs"]["curves"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn traces_cache_is_verified_on_rerun() {
    let setup = Setup::new();
    let out = setup.dir.path().join("again");
    ok(&["traces", "--curves", s(&fixture()), "--cache", s(&setup.cache), "--primes", "100", "--out", s(&out)]);
    let r = json(&out.join("traces.json"));
    assert_eq!(r["result"]["action"], "verified");
    assert_eq!(r["result"]["n_primes"], 100);
    assert!(r["result"]["max_hasse_ratio"].as_f64().unwrap() <= 1.0);
}

#[test]
fn stratify_report_is_deterministic() {
    let setup = Setup::new();
    let a = setup.run("stratify", "a", &["--rule", "tamagawa,sha", "--threads", "1"]);
    let b = setup.run("stratify", "b", &["--rule", "tamagawa,sha", "--threads", "2"]);
    let ja = fs::read(a.join("stratify.json")).unwrap();
    let jb = fs::read(b.join("stratify.json")).unwrap();
    assert_eq!(ja, jb);
    let r: Value = serde_json::from_slice(&ja).unwrap();
    let rules = r["result"]["rules"].as_array().unwrap();
    assert_eq!(rules.len(), 2);
    for rule in rules {
        let rep = &rule["report"];
        assert!(rep["observed_rms"].as_f64().unwrap() > 0.0);
        assert!(rep["null_mean"].as_f64().unwrap() > 0.0);
        let p = rep["p_value"].as_f64().unwrap();
        assert!(p > 0.0 && p <= 1.0);
    }
    assert!(a.join("profile_tamagawa.csv").exists());
}

#[test]
fn mismatched_cache_is_refused() {
    let setup = Setup::new();
    let dir = setup.dir.path();
    let text = fs::read_to_string(fixture()).unwrap();
    let fewer: String = text.lines().take(500).map(|l| format!("{l}\n")).collect();
    let curves = dir.join("fewer.csv");
    fs::write(&curves, fewer).unwrap();
    let out = murmur(&["stratify", "--curves", s(&curves), "--cache", s(&setup.cache), "--primes", "100", "--out", s(&dir.join("x"))]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["command"], "stratify");
    assert!(err["error"]["message"].as_str().unwrap().contains("does not match"));
}

#[test]
fn bad_flags_give_structured_errors() {
    let dir = TempDir::new().unwrap();
    for args in [
        vec!["stratify", "--range", "500"],
        vec!["stratify", "--range", "600:11"],
        vec!["zeros", "--band", "3:1"],
        vec!["ingest", "--curves", "/does/not/exist.csv"],
    ] {
        let mut full = args.clone();
        full.extend(["--out", s(dir.path())]);
        let out = murmur(&full);
        assert!(!out.status.success(), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        assert_eq!(err["error"]["command"], args[0]);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let setup = Setup::new();
    let cfg = setup.dir.path().join("run.conf");
    fs::write(&cfg, "# test\nshuffles = 50\nseed = 7\nrule = sha\n").unwrap();
    let out = setup.run("stratify", "c", &["--config", s(&cfg), "--seed", "9"]);
    let r = json(&out.join("stratify.json"));
    assert_eq!(r["seed"], 9);
    // --shuffles 200 from the shared flags beats the file's 50
    assert_eq!(r["config"]["shuffles"], 200);
    assert_eq!(r["config"]["rules"], serde_json::json!(["sha"]));
}

#[test]
fn analysis_subcommands_run_on_fixture() {
    let setup = Setup::new();
    let w = setup.run("windows", "w", &["--window", "100", "--step", "10", "--svg"]);
    assert!(w.join("windows.json").exists());
    assert!(fs::read_dir(&w).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));

    let c = setup.run("confound", "c", &["--band", "0.2:5"]);
    let r = json(&c.join("confound.json"));
    assert!(r["result"]["table8"].as_array().is_some_and(|t| !t.is_empty()));

    let d = setup.run("diagnose", "d", &["--band", "0.2:5"]);
    let r = json(&d.join("diagnose.json"));
    assert!(r["result"].is_object());

    let z = setup.run("zeros", "z", &["--band", "0.2:5", "--sample", "4", "--t-max", "12"]);
    let r = json(&z.join("zeros.json"));
    let sha1 = r["result"]["mean_gammas_sha1"].as_array().unwrap();
    assert_eq!(sha1.len(), 5);
    assert!(z.join("zeros.csv").exists());

    // Re-import the computed zeros instead of searching again.
    let zi = setup.run("zeros", "zi", &["--band", "0.2:5", "--zeros", s(&z.join("zeros.csv"))]);
    let ri = json(&zi.join("zeros.json"));
    assert_eq!(ri["result"]["source"], "imported");
    assert_eq!(ri["result"]["mean_gammas_sha1"], r["result"]["mean_gammas_sha1"]);

    let all = setup.dir.path().join("all");
    fs::create_dir_all(&all).unwrap();
    for (name, dir) in [("windows", &w), ("confound", &c), ("diagnose", &d), ("zeros", &z)] {
        fs::copy(dir.join(format!("{name}.json")), all.join(format!("{name}.json"))).unwrap();
    }
    ok(&["report", "--out", s(&all)]);
    let rep = json(&all.join("report.json"));
    for name in ["windows", "confound", "diagnose", "zeros"] {
        assert!(rep["result"][name]["result"].is_object(), "{name}");
    }
}
