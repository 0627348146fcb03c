//! End-to-end tests of the trunc-ellipse binary: exit codes, JSON schema
//! conformance, numerical spot checks, and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trunc-ellipse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("bad JSON ({e}): {text}"))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn schema(name: &str) -> Value {
    let path = workspace_root().join("schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap())
        .unwrap_or_else(|e| panic!("schema {name} unreadable: {e}"))
}

/// Minimal JSON-Schema subset validator: type, properties, required,
/// items, enum, additionalProperties.
fn validate(value: &Value, schema: &Value, path: &str) -> Result<(), String> {
    if let Some(types) = schema.get("type") {
        let allowed: Vec<String> = match types {
            Value::String(s) => vec![s.clone()],
            Value::Array(a) => a.iter().filter_map(|v| v.as_str().map(String::from)).collect(),
            _ => return Err(format!("{path}: malformed type spec")),
        };
        let actual = match value {
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Number(n) => {
                if n.is_i64() || n.is_u64() {
                    "integer"
                } else {
                    "number"
                }
            }
            Value::String(_) => "string",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
        };
        let ok = allowed.iter().any(|t| {
            t == actual || (t == "number" && actual == "integer")
        });
        if !ok {
            return Err(format!("{path}: expected {allowed:?}, found {actual}"));
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(format!("{path}: {value} not in {allowed:?}"));
        }
    }
    if let Value::Object(map) = value {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    return Err(format!("{path}: missing required key {key:?}"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(props) = props {
            for (key, sub) in map {
                if let Some(sub_schema) = props.get(key) {
                    validate(sub, sub_schema, &format!("{path}.{key}"))?;
                } else if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
                    return Err(format!("{path}: unexpected key {key:?}"));
                }
            }
        }
    }
    if let (Value::Array(items), Some(item_schema)) = (value, schema.get("items")) {
        for (i, item) in items.iter().enumerate() {
            validate(item, item_schema, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn assert_schema(value: &Value, schema_name: &str) {
    let s = schema(schema_name);
    if let Err(e) = validate(value, &s, "$") {
        panic!("schema {schema_name} violated: {e}\nvalue: {value}");
    }
}

fn temp_file(name: &str, content: &str) -> PathBuf {
    let path = std::env::temp_dir().join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn quadrant_model_file() -> PathBuf {
    temp_file(
        "te_cli_model.json",
        r#"{
            "mu": [0.0, 0.0],
            "sigma": [[1.0, 0.0], [0.0, 1.0]],
            "c": [0.0, 0.0],
            "generator": {"kind": "normal"}
        }"#,
    )
}

#[test]
fn pdf_reports_quadrant_density() {
    let model = quadrant_model_file();
    let out = run(&["pdf", "--model", model.to_str().unwrap(), "--w", "0,0"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_schema(&v, "pdf.schema.json");
    let expected = 2.0 / std::f64::consts::PI;
    assert!((v["pdf"].as_f64().unwrap() - expected).abs() < 1e-8);
}

#[test]
fn pdf_outside_support_is_zero() {
    let model = quadrant_model_file();
    let out = run(&["pdf", "--model", model.to_str().unwrap(), "--w", "-1,0"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_schema(&v, "pdf.schema.json");
    assert!(v["log_pdf"].is_null());
    assert_eq!(v["pdf"].as_f64().unwrap(), 0.0);
}

#[test]
fn sample_writes_headerless_csv() {
    let model = quadrant_model_file();
    let out_csv = std::env::temp_dir().join("te_cli_sample.csv");
    let out = run(&[
        "sample",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "200",
        "--seed",
        "9",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_schema(&v, "sample.schema.json");
    assert_eq!(v["n"].as_u64(), Some(200));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 200);
    for line in &lines {
        let cols: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(cols.len(), 2);
        assert!(cols[0] >= 0.0 && cols[1] >= 0.0);
    }
}

#[test]
fn polar_zero_corr_construction() {
    // the shape that solves the zero-correlation equation at rho = -1/sqrt(2)
    let b = 16.0 * (3.0 * 2.0f64.sqrt() - 4.0)
        / (std::f64::consts::PI * (4.0 - std::f64::consts::PI));
    let shape = 1.0 / (b - 1.0);
    let out = run(&[
        "polar",
        "--rho",
        "-0.70710678118654752",
        "--generator",
        &format!("gamma:{shape:.16e}"),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_schema(&v, "polar.schema.json");
    assert!(v["cov"].as_f64().unwrap().abs() < 1e-9, "cov {}", v["cov"]);
    assert!((v["psi_star"].as_f64().unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-8);

    // the rounded shape from the construction stays near zero as well
    let out = run(&["polar", "--rho", "-0.70710678", "--generator", "gamma:2.275"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!(v["cov"].as_f64().unwrap().abs() < 1e-4, "cov {}", v["cov"]);
}

#[test]
fn zero_corr_solves_gamma_shape() {
    let out = run(&["zero-corr", "--rho", "-0.7071067811865476"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_schema(&v, "zero-corr.schema.json");
    let b = 16.0 * (3.0 * 2.0f64.sqrt() - 4.0)
        / (std::f64::consts::PI * (4.0 - std::f64::consts::PI));
    assert!((v["b_required"].as_f64().unwrap() - b).abs() < 1e-10);
    assert!((v["gamma_shape"].as_f64().unwrap() - 1.0 / (b - 1.0)).abs() < 1e-10);
}

#[test]
fn rectprob_quadrant() {
    let out = run(&["rectprob", "--mean", "0,0", "--cov", "1,0;0,1", "--lower", "0,0"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_schema(&v, "rectprob.schema.json");
    assert!((v["value"].as_f64().unwrap() - 0.25).abs() < 1e-10);
    assert_eq!(v["method"].as_str(), Some("quadrature_2d_3d"));
}

#[test]
fn rectprob_accepts_neg_inf_bounds() {
    let out = run(&["rectprob", "--mean", "0,0", "--cov", "1,0.5;0.5,1", "--lower", "0,-inf"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!((v["value"].as_f64().unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn fit_and_lrt_on_simulated_data() {
    // simulate through the sample subcommand, then fit
    let model = temp_file(
        "te_cli_fitmodel.json",
        r#"{
            "mu": [164.19, 77.195],
            "sigma": [[9.357481, 7.197303911], [7.197303911, 29.800681]],
            "c": [159.5, 0.0],
            "generator": {"kind": "normal"}
        }"#,
    );
    let csv = std::env::temp_dir().join("te_cli_fit.csv");
    let out = run(&[
        "sample",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "517",
        "--seed",
        "4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    // add the header the fit/lrt commands expect
    let raw = std::fs::read_to_string(&csv).unwrap();
    let with_header = temp_file("te_cli_fit_hdr.csv", &format!("w1,w2\n{raw}"));

    let out = run(&[
        "fit",
        "--data",
        with_header.to_str().unwrap(),
        "--c1",
        "159.5",
        "--c2",
        "0",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_schema(&v, "fit.schema.json");
    assert_eq!(v["converged"].as_bool(), Some(true));
    let rho = v["theta_hat"]["rho"].as_f64().unwrap();
    assert!((rho - 0.431).abs() < 0.2, "rho {rho}");

    let out = run(&[
        "lrt",
        "--data",
        with_header.to_str().unwrap(),
        "--c1",
        "159.5",
        "--c2",
        "0",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_schema(&v, "lrt.schema.json");
    assert!(v["statistic"].as_f64().unwrap() > 0.0);
    assert!(v["p_value"].as_f64().unwrap() < 0.05);
}

#[test]
fn restricted_fit_reports_zero_rho() {
    let rows: String = (0..40)
        .map(|i| format!("{},{}\n", 0.1 + 0.05 * i as f64, 0.2 + 0.04 * ((i * 7) % 11) as f64))
        .collect();
    let csv = temp_file("te_cli_restricted.csv", &format!("w1,w2\n{rows}"));
    let out = run(&[
        "fit",
        "--data",
        csv.to_str().unwrap(),
        "--c1",
        "0",
        "--c2",
        "0",
        "--restricted",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_schema(&v, "fit.schema.json");
    assert_eq!(v["restricted"].as_bool(), Some(true));
    assert_eq!(v["theta_hat"]["rho"].as_f64(), Some(0.0));
}

#[test]
fn verify_scenario_file_round_trip() {
    let scenario = temp_file(
        "te_cli_scenario.json",
        r#"{
            "kind": "theorem1",
            "sigma": [[1.0, 0.5], [0.5, 1.0]],
            "mu": [0.0, 0.0],
            "c": [0.0, "-inf"],
            "p1": 1,
            "n": 400,
            "replicates": 5,
            "alpha": 0.05
        }"#,
    );
    let out = run(&["verify", "--scenario", scenario.to_str().unwrap(), "--seed", "11"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_schema(&v, "verify.schema.json");
    assert_eq!(v["test_name"].as_str(), Some("lrt"));
    assert!(v["replicate_rejection_rate"].as_f64().unwrap() > 0.5);
}

#[test]
fn regularity_classifies_kotz_exception() {
    let out = run(&["regularity", "--generator", "kotz:1:1:0.5"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_schema(&v, "regularity.schema.json");
    assert_eq!(v["r3"].as_str(), Some("neither"));
}

#[test]
fn unknown_flag_exits_64() {
    let out = run(&["polar", "--rho", "0", "--generator", "normal", "--bogus"]);
    assert_eq!(out.status.code(), Some(64));
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn domain_error_exits_2() {
    let out = run(&["polar", "--rho", "1.5", "--generator", "normal"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    // moment does not exist for dof <= 2
    let out = run(&["polar", "--rho", "0", "--generator", "student_t:2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_csv_exits_2_with_line() {
    let csv = temp_file("te_cli_badrow.csv", "w1,w2\n1.0,2.0\nabc,1.0\n");
    let out = run(&["fit", "--data", csv.to_str().unwrap(), "--c1", "0", "--c2", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn identical_invocations_are_byte_identical() {
    let args = ["polar", "--rho", "-0.3", "--generator", "student_t:4"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);

    let model = quadrant_model_file();
    let out_csv = std::env::temp_dir().join("te_cli_det.csv");
    let args = [
        "sample",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "500",
        "--seed",
        "77",
        "--out",
        out_csv.to_str().unwrap(),
    ];
    let a = run(&args);
    let csv_a = std::fs::read(&out_csv).unwrap();
    let b = run(&args);
    let csv_b = std::fs::read(&out_csv).unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(csv_a, csv_b);
}

#[test]
fn model_file_validates_against_schema() {
    let model_text = std::fs::read_to_string(quadrant_model_file()).unwrap();
    let v: Value = serde_json::from_str(&model_text).unwrap();
    assert_schema(&v, "model.schema.json");
}

#[test]
fn floats_printed_with_17_significant_digits() {
    let out = run(&["zero-corr", "--rho", "0"]);
    let text = String::from_utf8_lossy(&out.stdout);
    // 4/pi with every digit: 1.2732395447351628e0
    assert!(text.contains("1.2732395447351628e0"), "stdout: {text}");
}
