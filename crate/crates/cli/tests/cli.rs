use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn cpclim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpclim")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

fn pilot() -> Value {
    serde_json::from_str(include_str!("../../core/tests/fixtures/z_folner_pilot.json")).unwrap()
}

fn strip_wall_ms(v: &mut Value) {
    for r in v.as_array_mut().unwrap() {
        r.as_object_mut().unwrap().remove("wall_ms");
    }
}

#[test]
fn build_af_toy_lists_stages() {
    let out = cpclim(&["build", "--preset", "af-toy"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("stage 0:")));
    assert!(text.contains("step min Choi eigenvalue"));
}

#[test]
fn build_folner_prefix_with_certificate_flag() {
    let out = cpclim(&["build", "--preset", "z-folner", "--max-stage", "8", "--certificate"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("stage 8:")));
    assert!(text.contains("certificate: none"));
}

#[test]
fn non_contractive_step_exits_2() {
    let cfg = fixture("non_contractive.json");
    for cmd in ["build", "audit"] {
        let out = cpclim(&[cmd, "--config", &cfg]);
        assert_eq!(code(&out), 2, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).contains("not contractive"));
    }
}

#[test]
fn input_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"system\": ").unwrap();
    let bad = bad.display().to_string();
    let missing = dir.path().join("missing.json").display().to_string();
    for args in [
        vec!["audit", "--config", bad.as_str()],
        vec!["audit", "--config", missing.as_str()],
        vec!["audit", "--preset", "nowhere"],
        vec!["build", "--preset", "nowhere"],
        vec!["product", "--preset", "z5-full", "--k", "0", "--x", "psi(", "--y", "unit", "--schedule", "1"],
        vec!["frobnicate"],
        vec!["audit"],
    ] {
        assert_eq!(code(&cpclim(&args)), 3, "{args:?}");
    }
}

#[test]
fn exact_audits_pass_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["af-toy", "z5-full"] {
        let path = dir.path().join(format!("{preset}.json"));
        let p = path.display().to_string();
        let first = cpclim(&["audit", "--preset", preset, "--out", &p]);
        assert_eq!(code(&first), 0, "{preset}: {}", String::from_utf8_lossy(&first.stderr));
        let mut a: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let again = cpclim(&["audit", "--preset", preset]);
        assert_eq!(code(&again), 0);
        let mut b: Value = serde_json::from_str(&stdout(&again)).unwrap();
        strip_wall_ms(&mut a);
        strip_wall_ms(&mut b);
        assert_eq!(a, b, "{preset}");
        for r in a.as_array().unwrap() {
            assert!(r["verdict"].as_str().unwrap().starts_with("pass"), "{preset}: {r}");
        }
    }
}

#[test]
fn csv_report_has_one_row_per_defect() {
    let out = cpclim(&["audit", "--preset", "af-toy", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("condition,system,k,r,elements,j,n,m,value,signed"));
    // seven conditions over three tuples
    assert_eq!(lines.count(), 21);
}

#[test]
fn z_folner_encoding_passes_and_nf_check_fails() {
    let out = cpclim(&["audit", "--preset", "z-folner-encoding"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = cpclim(&["audit", "--preset", "z-folner-nf-check"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let reports: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let mult = reports.as_array().unwrap().iter().find(|r| r["condition"] == "multiplicative").unwrap();
    assert!(mult["verdict"].as_str().unwrap().contains("(floor "), "{mult}");
}

fn pushforward_coeff(text: &str, label: &str) -> f64 {
    let line = text.lines().find(|l| l.trim_start().starts_with(&format!("{label}:"))).expect("term listed");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn product_on_z5_is_the_group_product() {
    let out = cpclim(&[
        "product",
        "--preset",
        "z5-full",
        "--k",
        "0",
        "--x",
        "psi(0, delta(3))",
        "--y",
        "psi(0, delta(4))",
        "--schedule",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("1 terms"), "{text}");
    assert!((pushforward_coeff(&text, "g2") - 1.0).abs() <= 1e-9, "{text}");
}

#[test]
fn product_of_units_has_norm_one() {
    let out = cpclim(&["product", "--preset", "af-toy", "--k", "1", "--x", "unit", "--y", "unit", "--schedule", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("norm 1.000000000000"));
}

#[test]
fn product_on_z_matches_pilot() {
    let out = cpclim(&[
        "product",
        "--k",
        "2",
        "--x",
        "psi(2, delta(1))",
        "--y",
        "psi(2, delta(1))",
        "--schedule",
        "2,4,8",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let pilot = pilot();
    let expected = pilot["curves"]["k2"]["pushforward_coeff_at_2"][2].as_f64().unwrap();
    assert!((pushforward_coeff(&text, "2") - expected).abs() <= 1e-9, "{text}");
    let diag: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("stinespring")).skip(1).collect();
    assert_eq!(diag.len(), 3);
    let again = cpclim(&[
        "product",
        "--k",
        "2",
        "--x",
        "psi(2, delta(1))",
        "--y",
        "psi(2, delta(1))",
        "--schedule",
        "2,4,8",
        "--seed",
        "3",
    ]);
    assert_eq!(stdout(&again), text);
}
