//! End-to-end tests of the command-line interface: exit codes, emitted file
//! formats and cross-run determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracsde"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fracsde-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary launches")
}

const SMALL_CONFIG: &str = r#"
sigma = "2 + sin(x)"
x0 = 0.0
hurst = 0.45
scheme = "milstein"
m = 1
n = [64, 128, 256]
paths = 8
seed = 99
"#;

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let out = run(bin().args(["rates", "--config", "/nonexistent/cfg.toml", "--out", "/tmp"]));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/cfg.toml"), "stderr: {stderr}");
}

#[test]
fn invalid_hurst_for_size_exits_2_with_admissibility_message() {
    let dir = tmpdir("admissibility");
    let cfg = write_config(
        &dir,
        "bad.toml",
        r#"
sigma = "2 + sin(x)"
x0 = 0.0
hurst = 0.3
scheme = "milstein"
m = 0
n = [64]
paths = 4
seed = 1
"#,
    );
    let out = run(bin().args([
        "rates",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("(1/(m+2), 1)"), "stderr: {stderr}");
}

#[test]
fn ncweights_prints_exact_tables() {
    for (order, expected) in
        [("0", "0: 1"), ("1", "0: 1/2, 1: 1/2"), ("2", "0: 1/6, 1/2: 2/3, 1: 1/6")]
    {
        let out = run(bin().args(["ncweights", "--order", order]));
        assert_eq!(out.status.code(), Some(0));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert_eq!(stdout.trim(), expected);
    }
}

#[test]
fn simulate_constant_sigma_writes_tiny_errors() {
    let dir = tmpdir("simulate");
    let cfg = write_config(
        &dir,
        "const.toml",
        r#"
sigma = "3"
x0 = 0.5
hurst = 0.5
scheme = "milstein"
m = 0
n = [4]
paths = 1
seed = 7
"#,
    );
    let out_dir = dir.join("out");
    let out = run(bin().args([
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,approx,exact,abs_error");
    assert_eq!(lines.len(), 6, "n = 4 gives 5 data rows");
    for line in &lines[1..] {
        let err: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err <= 1e-10, "line {line}");
    }
}

#[test]
fn rates_round_trips_through_report_command_and_is_deterministic() {
    let dir = tmpdir("rates");
    let cfg = write_config(&dir, "small.toml", SMALL_CONFIG);

    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(bin().args([
            "rates",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]));
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }

    // byte-identical modulo the timing field
    let strip = |path: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_time_secs");
        serde_json::to_string_pretty(&v).unwrap()
    };
    assert_eq!(strip(&out_a.join("report.json")), strip(&out_b.join("report.json")));
    assert_eq!(
        fs::read_to_string(out_a.join("paths.csv")).unwrap(),
        fs::read_to_string(out_b.join("paths.csv")).unwrap()
    );

    // the report command rebuilds the same summaries from the dump
    let rebuilt = dir.join("rebuilt");
    let out = run(bin().args([
        "report",
        "--config",
        cfg.to_str().unwrap(),
        "--paths",
        out_a.join("paths.csv").to_str().unwrap(),
        "--out",
        rebuilt.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let original: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("report.json")).unwrap()).unwrap();
    let recomputed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rebuilt.join("report.json")).unwrap()).unwrap();
    assert_eq!(original["summaries"], recomputed["summaries"]);
    assert_eq!(original["rate_fit"], recomputed["rate_fit"]);

    // seed override changes the records
    let out_c = dir.join("c");
    let out = run(bin().args([
        "rates",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_c.to_str().unwrap(),
        "--seed",
        "12345",
    ]));
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(
        fs::read_to_string(out_a.join("paths.csv")).unwrap(),
        fs::read_to_string(out_c.join("paths.csv")).unwrap()
    );

    // one summary block per configured grid size
    assert_eq!(original["summaries"].as_array().unwrap().len(), 3);
}

#[test]
fn powervar_requires_section_and_emits_summary() {
    let dir = tmpdir("powervar");
    let bare = write_config(&dir, "bare.toml", SMALL_CONFIG);
    let out = run(bin().args([
        "powervar",
        "--config",
        bare.to_str().unwrap(),
        "--out",
        dir.join("x").to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(
        &dir,
        "pv.toml",
        r#"
sigma = "2 + sin(x)"
x0 = 0.0
hurst = 0.4
scheme = "milstein"
m = 1
n = [128, 256]
paths = 8
seed = 5

[powervar]
weight = "2 + cos(x)"
kappa = 3
"#,
    );
    let out_dir = dir.join("out");
    let out = run(bin().args([
        "powervar",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--threads",
        "1",
    ]));
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("powervar.csv")).unwrap();
    assert!(csv.starts_with("seed,n,raw_variation,scaled_variation,limit"));
    assert_eq!(csv.lines().count(), 1 + 2 * 8);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("powervar.json")).unwrap()).unwrap();
    assert_eq!(summary["kappa"], 3);
    assert_eq!(summary["per_n"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_scheme_and_unknown_key_are_config_errors() {
    let dir = tmpdir("schema");
    let bad_scheme = write_config(
        &dir,
        "scheme.toml",
        r#"
sigma = "2 + sin(x)"
x0 = 0.0
hurst = 0.45
scheme = "heun"
n = [64]
paths = 2
seed = 1
"#,
    );
    let out = run(bin().args([
        "rates",
        "--config",
        bad_scheme.to_str().unwrap(),
        "--out",
        dir.join("o1").to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));

    let unknown_key = write_config(
        &dir,
        "key.toml",
        r#"
sigma = "2 + sin(x)"
x0 = 0.0
hurst = 0.45
scheme = "milstein"
m = 1
n = [64]
paths = 2
seed = 1
frobnicate = true
"#,
    );
    let out = run(bin().args([
        "rates",
        "--config",
        unknown_key.to_str().unwrap(),
        "--out",
        dir.join("o2").to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
}
