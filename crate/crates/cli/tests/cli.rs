use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const THREE_POINT: &str = "inf,4,2\n4,inf,4\n2,4,inf\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_newtonize"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn setup(matrix: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    fs::write(&path, matrix).unwrap();
    (dir, path)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn check_exit_codes() {
    let (dir, _) = setup(THREE_POINT);
    let d = dir.path();
    assert_eq!(
        code(&run(
            d,
            &["check", "--input", "m.csv", "--nu", "linear:0.5"]
        )),
        0
    );
    let o = run(
        d,
        &[
            "check",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.6",
            "--report",
            "r.json",
        ],
    );
    assert_eq!(code(&o), 1);
    let r = json(&d.join("r.json"));
    assert_eq!(r["schema"], 1);
    assert_eq!(r["k4"]["pass"], false);
    assert_eq!(r["k4"]["worst_triple"], serde_json::json!([0, 1, 2]));
    assert_eq!(code(&run(d, &["check", "--input", "m.csv"])), 0);
}

#[test]
fn malformed_input_is_a_usage_error() {
    let (dir, _) = setup("inf,1\n1,inf,3\n");
    let d = dir.path();
    let o = run(d, &["check", "--input", "m.csv", "--nu", "linear:0.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fields"));
    assert_eq!(code(&run(d, &["check", "--input", "missing.csv"])), 2);
    fs::write(d.join("ok.csv"), THREE_POINT).unwrap();
    assert_eq!(
        code(&run(d, &["check", "--input", "ok.csv", "--nu", "cubic:1"])),
        2
    );
    assert_eq!(
        code(&run(d, &["check", "--input", "ok.csv", "--nu", "linear:2"])),
        2
    );
    assert_eq!(code(&run(d, &["check"])), 2);
    assert_eq!(code(&run(d, &["frobnicate"])), 2);
}

#[test]
fn gaussian_fixture_is_rejected_on_the_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(
        d,
        &[
            "synth",
            "--kernel",
            "gaussian:1",
            "--n",
            "6",
            "--seed",
            "1",
            "--points",
            "p.csv",
            "--matrix",
            "g.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let o = run(
        d,
        &[
            "check",
            "--input",
            "g.csv",
            "--nu",
            "linear:0.5",
            "--report",
            "r.json",
        ],
    );
    assert_eq!(code(&o), 1);
    let r = json(&d.join("r.json"));
    assert_eq!(r["k3"]["pass"], false);
    assert_eq!(r["k3"]["counterexample"], serde_json::json!([0, 0]));
    assert!(r["violations"][0].as_str().unwrap().contains("K3"));
    assert!(r["k4"].is_null());
}

#[test]
fn estimate_nu_outputs() {
    let (dir, _) = setup(THREE_POINT);
    let d = dir.path();
    let o = run(
        d,
        &[
            "estimate-nu",
            "--input",
            "m.csv",
            "--emit-nu",
            "nu.csv",
            "--report",
            "s.json",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(d.join("nu.csv")).unwrap(),
        "0,0\n4,2,0.5\n"
    );
    let s = json(&d.join("s.json"));
    assert_eq!(s["check"]["pass"], true);
    // the emitted table is itself an admissible modulus
    assert_eq!(
        code(&run(
            d,
            &["check", "--input", "m.csv", "--nu", "pwl:nu.csv"]
        )),
        0
    );

    fs::write(d.join("two.csv"), "inf,3\n3,inf\n").unwrap();
    let o = run(d, &["estimate-nu", "--input", "two.csv"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no triples"));
}

#[test]
fn estimate_nu_on_constant_matrix() {
    let (dir, _) = setup("inf,3,3,3\n3,inf,3,3\n3,3,inf,3\n3,3,3,inf\n");
    let d = dir.path();
    let o = run(d, &["estimate-nu", "--input", "m.csv"]);
    assert_eq!(code(&o), 0);
    // single frontier point (3, 3); the identity cap 0.95 * 3 binds
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    let rows: Vec<Vec<f64>> = out
        .lines()
        .map(|l| l.split(',').map(|t| t.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], vec![0.0, 0.0]);
    assert_eq!(rows[1][0], 3.0);
    assert!((rows[1][1] - 2.85).abs() < 1e-12);
    assert!((rows[1][2] - 0.95).abs() < 1e-12);
}

#[test]
fn decompose_three_point_and_recertify() {
    let (dir, _) = setup(THREE_POINT);
    let d = dir.path();
    let o = run(
        d,
        &[
            "decompose",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.5",
            "--emit-rho",
            "rho.csv",
            "--emit-h",
            "h.csv",
            "--emit-phi",
            "phi.csv",
            "--report",
            "r.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(d.join("h.csv")).unwrap(),
        "1,1,1\n1,1,1\n1,1,1\n"
    );
    let r = json(&d.join("r.json"));
    assert_eq!(r["schema"], 1);
    assert_eq!(r["pass"], true);
    assert!(r["reconstruction_max_rel_err"].as_f64().unwrap() <= 1e-9);
    let phi = fs::read_to_string(d.join("phi.csv")).unwrap();
    assert_eq!(phi.lines().count(), 200);

    let o = run(
        d,
        &[
            "certify",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.5",
            "--rho",
            "rho.csv",
            "--h",
            "h.csv",
            "--report",
            "r2.json",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(d.join("r.json")).unwrap(),
        fs::read(d.join("r2.json")).unwrap()
    );
    let o = run(
        d,
        &[
            "certify",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.5",
            "--rho",
            "rho.csv",
            "--report",
            "r3.json",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(d.join("r.json")).unwrap(),
        fs::read(d.join("r3.json")).unwrap()
    );
}

#[test]
fn tampered_artifacts_fail_certification() {
    let (dir, _) = setup(THREE_POINT);
    let d = dir.path();
    let o = run(
        d,
        &[
            "decompose",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.5",
            "--emit-rho",
            "rho.csv",
            "--report",
            "r.json",
        ],
    );
    assert_eq!(code(&o), 0);
    fs::write(d.join("h.csv"), "1,1,2\n1,1,1\n2,1,1\n").unwrap();
    let o = run(
        d,
        &[
            "certify",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.5",
            "--rho",
            "rho.csv",
            "--h",
            "h.csv",
            "--report",
            "bad.json",
        ],
    );
    assert_eq!(code(&o), 1);
    let r = json(&d.join("bad.json"));
    assert_eq!(r["reconstruction_pass"], false);
    // not a metric at all
    fs::write(d.join("rho_bad.csv"), "0,1,4\n1,0,1\n4,1,0\n").unwrap();
    let o = run(
        d,
        &[
            "certify",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.5",
            "--rho",
            "rho_bad.csv",
        ],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn decompose_with_estimated_modulus() {
    let (dir, _) = setup(THREE_POINT);
    let d = dir.path();
    let o = run(
        d,
        &[
            "decompose",
            "--input",
            "m.csv",
            "--emit-nu",
            "nu.csv",
            "--report",
            "r.json",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(json(&d.join("r.json"))["pass"], true);
    assert!(d.join("nu.csv").exists());
}

#[test]
fn failing_matrix_leaves_no_artifacts() {
    let (dir, _) = setup(THREE_POINT);
    let d = dir.path();
    let o = run(
        d,
        &[
            "decompose",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.9",
            "--emit-rho",
            "rho.csv",
            "--emit-h",
            "h.csv",
            "--report",
            "r.json",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("(0, 1, 2)"));
    let names: Vec<_> = fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names, vec![std::ffi::OsString::from("m.csv")]);
}

#[test]
fn synth_is_reproducible_and_admissible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["a", "b"] {
        let (p, m) = (format!("{name}_p.csv"), format!("{name}_m.csv"));
        let o = run(
            d,
            &[
                "synth", "--kernel", "invpow:1", "--n", "20", "--dim", "3", "--seed", "5",
                "--points", &p, "--matrix", &m,
            ],
        );
        assert_eq!(code(&o), 0);
    }
    assert_eq!(
        fs::read(d.join("a_m.csv")).unwrap(),
        fs::read(d.join("b_m.csv")).unwrap()
    );
    assert_eq!(
        fs::read(d.join("a_p.csv")).unwrap(),
        fs::read(d.join("b_p.csv")).unwrap()
    );
    assert_eq!(
        code(&run(
            d,
            &["check", "--input", "a_m.csv", "--nu", "linear:0.5"]
        )),
        0
    );
    let o = run(
        d,
        &[
            "check",
            "--points",
            "a_p.csv",
            "--kernel",
            "invpow:2",
            "--nu",
            "linear:0.25",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        code(&run(
            d,
            &["synth", "--kernel", "invpow:1", "--n", "1", "--points", "x", "--matrix", "y"]
        )),
        2
    );
}

#[test]
fn point_cloud_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("p.csv"), "0,0\n0.5,0\n").unwrap();
    let o = run(
        d,
        &[
            "decompose",
            "--points",
            "p.csv",
            "--kernel",
            "invpow:1",
            "--nu",
            "linear:0.5",
            "--report",
            "r.json",
        ],
    );
    assert_eq!(code(&o), 0);
    let r = json(&d.join("r.json"));
    assert_eq!(r["h_min"], 1.0);
    assert_eq!(r["h_max"], 1.0);
}

#[test]
fn roundtrip_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(
        d,
        &[
            "roundtrip",
            "--n",
            "30",
            "--dim",
            "2",
            "--p",
            "1",
            "--seed",
            "7",
            "--report",
            "rt.json",
        ],
    );
    assert_eq!(code(&o), 0);
    let r = json(&d.join("rt.json"));
    assert_eq!(r["pass"], true);
    assert!(r["phi_ratio_max"].as_f64().unwrap() <= 1.125 + 1e-9);
    assert_eq!(code(&run(d, &["roundtrip", "--n", "2", "--seed", "7"])), 0);
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(
        d,
        &[
            "synth", "--kernel", "invpow:1", "--n", "40", "--seed", "11", "--points", "p.csv",
            "--matrix", "m.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let mut reports = Vec::new();
    for threads in ["1", "3", "1"] {
        let o = bin()
            .current_dir(d)
            .env("NEWTONIZE_THREADS", threads)
            .args([
                "decompose",
                "--input",
                "m.csv",
                "--nu",
                "linear:0.5",
                "--emit-rho",
                "rho.csv",
            ])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        reports.push((o.stdout, fs::read(d.join("rho.csv")).unwrap()));
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
    let o = bin()
        .current_dir(d)
        .env("NEWTONIZE_THREADS", "many")
        .args(["check", "--input", "m.csv"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn phi_range_flag() {
    let (dir, _) = setup(THREE_POINT);
    let d = dir.path();
    let o = run(
        d,
        &[
            "decompose",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.5",
            "--emit-phi",
            "phi.csv",
            "--phi-range",
            "1:2:3:lin",
            "--report",
            "r.json",
        ],
    );
    assert_eq!(code(&o), 0);
    let phi = fs::read_to_string(d.join("phi.csv")).unwrap();
    let rows: Vec<&str> = phi.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("1,"));
    assert!(rows[1].starts_with("1.5,"));
    let o = run(
        d,
        &[
            "decompose",
            "--input",
            "m.csv",
            "--nu",
            "linear:0.5",
            "--emit-phi",
            "phi2.csv",
            "--phi-range",
            "1:2:3",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(!d.join("phi2.csv").exists());
}
