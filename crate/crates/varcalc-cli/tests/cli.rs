//! End-to-end tests of the `varcalc` binary: determinism of preset runs,
//! the exit-code contract, and the numerical claims encoded in the preset
//! footers.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

fn varcalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varcalc"))
        .args(args)
        .env_remove("VARCALC_SEED")
        .output()
        .expect("binary spawns")
}

fn stdout_of(args: &[&str]) -> String {
    let out = varcalc(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "expected success for {args:?}, stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn exit_code(args: &[&str]) -> i32 {
    varcalc(args).status.code().expect("exit code")
}

fn footer_value(text: &str, key: &str) -> f64 {
    let prefix = format!("#{key},");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("footer '{key}' missing in:\n{text}"))
        .trim()
        .parse()
        .expect("footer parses as f64")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).expect("config written");
    path.to_string_lossy().into_owned()
}

#[test]
fn preset_runs_are_byte_identical() {
    let dir = tempfile::tempdir().expect("tempdir");
    for preset in ["perelman-kscan", "s3-geodesic"] {
        let command = if preset == "perelman-kscan" {
            "energy"
        } else {
            "geodesic"
        };
        let a = dir.path().join(format!("{preset}-a.csv"));
        let b = dir.path().join(format!("{preset}-b.csv"));
        for out in [&a, &b] {
            let code = exit_code(&[
                command,
                "--preset",
                preset,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0, "preset {preset} failed");
        }
        let bytes_a = std::fs::read(&a).unwrap();
        let bytes_b = std::fs::read(&b).unwrap();
        assert!(!bytes_a.is_empty());
        assert_eq!(bytes_a, bytes_b, "preset {preset} not deterministic");
    }
}

#[test]
fn kscan_rows_follow_the_exponential_law() {
    let text = stdout_of(&["energy", "--preset", "perelman-kscan"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,energy"));
    let rows: Vec<(i64, f64)> = lines
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let (k, e) = l.split_once(',').expect("two columns");
            (k.parse().unwrap(), e.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 11);
    for (i, &(k, e)) in rows.iter().enumerate() {
        assert_eq!(k, i as i64);
        let expected = 8.0 * PI * (-(k as f64)).exp();
        assert!(
            (e - expected).abs() <= 1e-12 * expected,
            "row {k}: {e} vs {expected}"
        );
        if i > 0 {
            assert!(e < rows[i - 1].1, "scan must decrease");
        }
    }
}

#[test]
fn csv_uses_crlf_and_a_header_row() {
    let text = stdout_of(&["energy", "--preset", "perelman-kscan"]);
    assert!(text.starts_with("k,energy\r\n"));
    // Every LF is part of a CRLF pair.
    assert_eq!(text.matches('\n').count(), text.matches("\r\n").count());
}

#[test]
fn config_mistakes_exit_2() {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();
    let unknown_key = write_config(d, "unknown-key.json", r#"{"command": "energy", "bogus": 1}"#);
    assert_eq!(exit_code(&["energy", "--config", &unknown_key]), 2);

    let mismatch = write_config(d, "mismatch.json", r#"{"command": "geodesic"}"#);
    assert_eq!(exit_code(&["energy", "--config", &mismatch]), 2);

    assert_eq!(exit_code(&["energy", "--preset", "no-such-preset"]), 2);
    assert_eq!(exit_code(&["geodesic", "--preset", "perelman-kscan"]), 2);
    assert_eq!(exit_code(&["energy", "--grid-order", "0"]), 2);
    assert_eq!(exit_code(&["energy", "--grid-order", "257"]), 2);
    assert_eq!(exit_code(&["classify", "--format", "csv"]), 2);
    assert_eq!(exit_code(&["energy", "--no-such-flag"]), 2);

    let bad_gamma = write_config(d, "bad-gamma.json", r#"{"chart": "s3", "gamma": 1.5}"#);
    assert_eq!(exit_code(&["geodesic", "--config", &bad_gamma]), 2);

    let flat_compare = write_config(
        d,
        "flat-compare.json",
        r#"{"chart": "s2", "gamma": 0.0, "mode": "compare"}"#,
    );
    assert_eq!(exit_code(&["geodesic", "--config", &flat_compare]), 2);

    let bad_chart = write_config(d, "bad-chart.json", r#"{"chart": "torus"}"#);
    assert_eq!(exit_code(&["energy", "--config", &bad_chart]), 2);
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().expect("tempdir");
    // Classification is defined for the entropy functional only; asking for
    // it with the Dirichlet integrand is schema-valid but fails at runtime.
    let cfg = write_config(
        dir.path(),
        "classify-dirichlet.json",
        r#"{"command": "classify", "functional": "dirichlet", "grid_order": 8, "probe_count": 3}"#,
    );
    assert_eq!(exit_code(&["classify", "--config", &cfg]), 1);

    let missing_dir = dir.path().join("no-such-dir").join("out.csv");
    assert_eq!(
        exit_code(&[
            "energy",
            "--preset",
            "perelman-kscan",
            "--out",
            missing_dir.to_str().unwrap(),
        ]),
        1
    );
}

#[test]
fn s3_preset_footers_certify_a_great_circle() {
    let text = stdout_of(&["geodesic", "--preset", "s3-geodesic"]);
    assert!(text.starts_with("t,u1,u2,u3,x1,x2,x3,x4\r\n"));
    assert!((footer_value(&text, "length") - PI).abs() < 1e-6);
    assert!(footer_value(&text, "planarity") < 1e-8);
    assert!(footer_value(&text, "defect") < 1e-4);
    assert!(footer_value(&text, "eq1_max") < 1e-8);
    assert!(footer_value(&text, "eq3prime_max") < 1e-8);
}

#[test]
fn s2_compare_preset_shoots_onto_the_closed_form() {
    let text = stdout_of(&["geodesic", "--preset", "s2-geodesic"]);
    assert!(footer_value(&text, "sup_deviation") < 1e-6);
    assert!((footer_value(&text, "length") - 1.0).abs() < 1e-8);
    assert_eq!(footer_value(&text, "exited"), 0.0);
}

#[test]
fn radial_and_boundary_residual_presets_hit_their_targets() {
    let text = stdout_of(&["residual", "--preset", "laplace-radial"]);
    assert!(text.starts_with("u0,u1,residual\r\n"));
    assert!(footer_value(&text, "sup_norm") < 1e-5);

    let text = stdout_of(&["residual", "--preset", "neumann-demo"]);
    assert!(text.starts_with("face,s0,residual\r\n"));
    // v = u₀ matches the prescribed flux on the upper u₀ face and misses it
    // by 4 on the lower one; the sup norm reports the worst face.
    assert!((footer_value(&text, "sup_norm") - 4.0).abs() < 1e-12);
    let upper_rows: Vec<f64> = text
        .lines()
        .filter_map(|l| l.strip_prefix("u0-upper,"))
        .map(|rest| rest.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(upper_rows.len(), 8);
    assert!(upper_rows.iter().all(|r: &f64| r.abs() < 1e-12));
}

#[test]
fn entropy_residual_of_the_zero_field_is_minus_two() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "perelman-zero.json",
        r#"{"command": "residual", "chart": "s2", "functional": "perelman",
            "field": "zero", "grid_order": 4}"#,
    );
    let text = stdout_of(&["residual", "--config", &cfg]);
    let residuals: Vec<f64> = text
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(residuals.len(), 16);
    assert!(residuals.iter().all(|r| (r + 2.0).abs() < 1e-12));
}

#[test]
fn dirichlet_energy_of_a_constant_vanishes() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "dirichlet-const.json",
        r#"{"command": "energy", "chart": "flat-box", "functional": "dirichlet",
            "field": "one", "grid_order": 8}"#,
    );
    let text = stdout_of(&["energy", "--config", &cfg]);
    let energy: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("one,"))
        .expect("row for the constant field")
        .parse()
        .unwrap();
    assert_eq!(energy, 0.0);
}

#[test]
fn meridian_closed_form_footers_read_a_half_circle() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "meridian.json",
        r#"{"command": "geodesic", "chart": "s2", "gamma": 0.0, "phase": 0.4,
            "samples": 400}"#,
    );
    let text = stdout_of(&["geodesic", "--config", &cfg]);
    assert!(text.contains("#param_kind,u1\r\n"));
    // Chord length of the sampled sub-arc: π minus the endpoint margins
    // and the (uniform, O(h²)) chord deficit.
    assert!((footer_value(&text, "length") - PI).abs() < 1e-4);
    assert!(footer_value(&text, "planarity") < 1e-8);
    assert!(footer_value(&text, "defect") < 1e-8);
}

#[test]
fn profile_preset_reports_blow_up_and_crossing() {
    let text = stdout_of(&["perelman-profile", "--preset", "perelman-profile"]);
    assert!(text.starts_with("u2,w,f\r\n"));
    let blow_up = footer_value(&text, "blow_up_t");
    assert!(blow_up < PI / 2.0 && blow_up > PI / 2.0 - 1e-3);
    let crossing = footer_value(&text, "u2_star_sqrt2");
    assert!((crossing - 0.686491).abs() < 1e-4);
}

#[test]
fn classify_reports_verdicts_as_json() {
    let text = stdout_of(&["classify"]);
    let doc: serde_json::Value = serde_json::from_str(&text).expect("valid json");
    assert_eq!(doc["verdict"], "strict_local_min_candidate");
    assert_eq!(doc["sup_grad_sq"], 0.0);
    assert_eq!(doc["has_witness"], false);

    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "steep.json",
        r#"{"command": "classify", "field": "steep-parallel"}"#,
    );
    let text = stdout_of(&["classify", "--config", &cfg]);
    let doc: serde_json::Value = serde_json::from_str(&text).expect("valid json");
    assert_eq!(doc["verdict"], "saddle");
    assert!(doc["witness_value"].as_f64().unwrap() < 0.0);
}

#[test]
fn random_probes_honor_the_seed_env() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "random.json",
        r#"{"command": "classify", "probes": "random", "probe_count": 5}"#,
    );
    let run = |seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_varcalc"));
        cmd.args(["classify", "--config", &cfg]).env_remove("VARCALC_SEED");
        if let Some(s) = seed {
            cmd.env("VARCALC_SEED", s);
        }
        cmd.output().expect("binary spawns")
    };
    let unset = run(None);
    let zero = run(Some("0"));
    let seven = run(Some("7"));
    assert_eq!(unset.status.code(), Some(0));
    assert_eq!(zero.status.code(), Some(0));
    assert_eq!(seven.status.code(), Some(0));
    // The default seed is 0; both runs classify v ≡ 0 identically.
    assert_eq!(unset.stdout, zero.stdout);
    assert!(String::from_utf8(seven.stdout)
        .unwrap()
        .contains("strict_local_min_candidate"));
    assert_eq!(run(Some("not-a-number")).status.code(), Some(2));
}

#[test]
fn flags_override_the_config_document() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "json-format.json",
        r#"{"command": "energy", "preset": "perelman-kscan", "format": "json", "k_max": 2}"#,
    );
    let json_text = stdout_of(&["energy", "--config", &cfg]);
    assert!(serde_json::from_str::<serde_json::Value>(&json_text).is_ok());
    let csv_text = stdout_of(&["energy", "--config", &cfg, "--format", "csv"]);
    assert!(csv_text.starts_with("k,energy\r\n"));
    // k_max from the file narrows the preset's scan to k = 0, 1, 2.
    assert_eq!(csv_text.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn json_tables_parse_and_mirror_the_csv_rows() {
    let text = stdout_of(&["geodesic", "--preset", "s3-geodesic", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&text).expect("valid json");
    assert_eq!(doc["columns"][0], "t");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 400);
    let length = doc["footer"]["length"].as_f64().unwrap();
    assert!((length - PI).abs() < 1e-6);
}

#[test]
fn coefficient_fields_address_the_probe_basis() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "coeffs.json",
        r#"{"command": "energy", "chart": "s2", "functional": "perelman",
            "fields": [[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], "one"]}"#,
    );
    let text = stdout_of(&["energy", "--config", &cfg]);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "field,energy");
    // All-zero coefficients reproduce the constant field v ≡ 0.
    let zero_energy: f64 = rows[1].strip_prefix("coeffs-0,").unwrap().parse().unwrap();
    assert!((zero_energy - 8.0 * PI).abs() < 1e-10);

    // A wrong coefficient count is a configuration mistake.
    let bad = write_config(
        dir.path(),
        "bad-coeffs.json",
        r#"{"command": "energy", "chart": "s2", "fields": [[1.0, 2.0]]}"#,
    );
    assert_eq!(exit_code(&["energy", "--config", &bad]), 2);
}
