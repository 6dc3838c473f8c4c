//! End-to-end runs of the binary: flag parsing, report determinism, JSON
//! round-tripping, and the applicability matrix.

use std::path::PathBuf;
use std::process::{Command, Output};

fn qtag(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qtag"));
    cmd.args(args).env_remove("QTAG_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("qtag-cli-test-{}-{name}", std::process::id()))
}

#[test]
fn bad_geometry_is_a_config_error_with_context() {
    let out = qtag(&["run", "--scheme", "I", "--geometry", "a0=5,t=5,a1=10"], &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("a0 < t required"), "{err}");
}

#[test]
fn unknown_adversary_is_rejected() {
    let out = qtag(&["run", "--scheme", "I", "--adversary", "mystery"], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown adversary"));
}

#[test]
fn scheme_ii_without_f_table_warns_and_defaults_to_xor() {
    let out = qtag(
        &["run", "--scheme", "II", "--rounds", "5", "--trials", "2", "--seed", "3"],
        &[],
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("XOR default"));
}

#[test]
fn spoofed_scheme_iii_reports_p_hat_one_and_round_trips() {
    let json = tmp("spoof.json");
    let out = qtag(
        &[
            "run",
            "--scheme",
            "III",
            "--adversary",
            "teleport_III_style",
            "--rounds",
            "40",
            "--trials",
            "4",
            "--seed",
            "42",
            "--geometry",
            "a0=0,t=5,a1=10,e0=2,e1=8",
            "--json",
            json.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(&json).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["schema_version"], 1);
    assert_eq!(value["rows"][0]["p_hat"], 1.0);
    assert_eq!(value["rows"][0]["accepted"], 4);
    // parse and re-serialize: identity
    let reparsed: serde_json::Value =
        serde_json::from_str(&serde_json::to_string_pretty(&value).unwrap()).unwrap();
    assert_eq!(value, reparsed);
    std::fs::remove_file(&json).ok();
}

#[test]
fn same_seed_twice_gives_byte_identical_reports() {
    let (a, b) = (tmp("det-a.json"), tmp("det-b.json"));
    for path in [&a, &b] {
        let out = qtag(
            &[
                "run", "--scheme", "IV", "--adversary", "guess_measure", "--rounds", "30",
                "--trials", "3", "--seed", "11", "--json", path.to_str().unwrap(),
            ],
            &[],
        );
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    std::fs::remove_file(&a).ok();
    std::fs::remove_file(&b).ok();
}

#[test]
fn qtag_seed_env_matches_explicit_flag() {
    let (a, b) = (tmp("env-a.json"), tmp("env-b.json"));
    let out = qtag(
        &["run", "--scheme", "I", "--rounds", "10", "--trials", "2", "--seed", "99", "--json", a.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success());
    let out = qtag(
        &["run", "--scheme", "I", "--rounds", "10", "--trials", "2", "--json", b.to_str().unwrap()],
        &[("QTAG_SEED", "99")],
    );
    assert!(out.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    std::fs::remove_file(&a).ok();
    std::fs::remove_file(&b).ok();
}

#[test]
fn matrix_marks_inapplicable_cells_and_exports_csv() {
    let (json, csv) = (tmp("matrix.json"), tmp("matrix.csv"));
    let out = qtag(
        &[
            "matrix", "--rounds", "10", "--trials", "2", "--seed", "5",
            "--json", json.to_str().unwrap(), "--csv", csv.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("n/a"), "{stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 36);
    let na = rows
        .iter()
        .find(|r| r["scheme"] == "IV" && r["adversary"] == "teleport_I_II")
        .unwrap();
    assert_eq!(na["applicable"], false);
    assert!(na["reason"].as_str().unwrap().contains("does not apply"));
    // honest cells accept everything; routing attack spoofs scheme I
    for (scheme, adversary) in [("I", "none"), ("VI", "none"), ("I", "teleport_I_II")] {
        let row = rows
            .iter()
            .find(|r| r["scheme"] == scheme && r["adversary"] == adversary)
            .unwrap();
        assert_eq!(row["p_hat"], 1.0, "{scheme} x {adversary}");
    }
    let silent = rows
        .iter()
        .find(|r| r["scheme"] == "III" && r["adversary"] == "tag_off_silent")
        .unwrap();
    assert_eq!(silent["p_hat"], 0.0);

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("scheme,adversary,"));
    assert_eq!(csv_text.lines().count(), 37);
    std::fs::remove_file(&json).ok();
    std::fs::remove_file(&csv).ok();
}
