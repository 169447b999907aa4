use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_srstab");

fn srstab(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SRSTAB_OUT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

fn run(dir: &Path, json: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = config(dir, json);
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    srstab(&args, &[])
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

const GEODESIC: &str = r#"{"system": "euclidean-2", "job": "geodesic", "geodesic": {"p0": [3.0, 4.0]}}"#;

#[test]
fn list_systems_names_every_builtin() {
    let out = srstab(&["list-systems"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in srstab::chart::BUILTIN_NAMES {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn geodesic_run_writes_trajectory_and_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let result = run(dir.path(), GEODESIC, &out, &[]);
    assert_eq!(
        result.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );

    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,x1,x2,p1,p2,H");
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((last[1] - 3.0).abs() < 1e-9 && (last[2] - 4.0).abs() < 1e-9);

    let r = report(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["job"], "geodesic");
    let length = r["quantities"]
        .as_array()
        .unwrap()
        .iter()
        .find(|q| q["name"] == "length")
        .unwrap();
    assert!((length["value"].as_f64().unwrap() - 5.0).abs() < 1e-9);
    for q in r["quantities"].as_array().unwrap() {
        assert!(q["provenance"].is_string(), "{q}");
    }
    for c in r["checks"].as_array().unwrap() {
        assert!(c["baseline"].is_string(), "{c}");
    }
}

#[test]
fn failed_check_exits_one() {
    let dir = TempDir::new().unwrap();
    let json = r#"{"system": "heisenberg", "job": "geodesic", "geodesic": {"p0": [1.0, 2.0, 3.0]},
                   "tolerances": {"energy": 1e-300}}"#;
    let out = dir.path().join("out");
    assert_eq!(run(dir.path(), json, &out, &[]).status.code(), Some(1));
    assert_eq!(report(&out)["passed"], false);
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for json in [
        r#"{"system": "nowhere", "job": "geodesic"}"#,
        r#"{"system": "euclidean-2", "job": "geodesic", "colour": 3}"#,
        r#"{"system": "euclidean-2", "job": "geodesic", "geodesic": {"p0": [1.0]}}"#,
        r#"{"system": "euclidean-2", "job": "value-grid", "grid": {"h": -0.1}}"#,
        "not json",
    ] {
        assert_eq!(run(dir.path(), json, &out, &[]).status.code(), Some(2), "{json}");
    }
    let missing = dir.path().join("absent.json");
    let result = srstab(&["run", "--config", missing.to_str().unwrap()], &[]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn environment_overrides_the_out_flag() {
    let dir = TempDir::new().unwrap();
    let (flag, env) = (dir.path().join("flag"), dir.path().join("env"));
    let cfg = config(dir.path(), GEODESIC);
    let result = srstab(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            flag.to_str().unwrap(),
        ],
        &[("SRSTAB_OUT", &env)],
    );
    assert!(result.status.success());
    assert!(env.join("trajectory.csv").is_file());
    assert!(!flag.exists());
}

fn artifacts(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn artifacts_do_not_depend_on_worker_count() {
    let dir = TempDir::new().unwrap();
    let value_grid = r#"{"system": "heisenberg", "job": "value-grid", "grid": {"h": 0.5}}"#;
    let feedback = r#"{"system": "heisenberg", "job": "feedback", "grid": {"h": 0.5},
                       "feedback": {"random_starts": 3, "horizon": 2.0}}"#;
    for json in [value_grid, feedback] {
        let mut seen = Vec::new();
        for (k, jobs) in ["1", "3", "3"].iter().enumerate() {
            let out = dir.path().join(format!("out{k}"));
            // short runs may fail their checks; only the artifacts matter here
            let result = run(dir.path(), json, &out, &["--jobs", jobs, "--seed", "11"]);
            assert!(
                matches!(result.status.code(), Some(0 | 1)),
                "{}",
                String::from_utf8_lossy(&result.stderr)
            );
            seen.push(artifacts(&out));
        }
        assert!(!seen[0].is_empty());
        assert_eq!(seen[0], seen[1], "{json}");
        assert_eq!(seen[1], seen[2], "{json}");
    }
}

#[test]
fn seed_changes_the_random_starts() {
    let dir = TempDir::new().unwrap();
    let json = r#"{"system": "euclidean-2", "job": "feedback", "grid": {"h": 0.5},
                   "feedback": {"random_starts": 1, "estimate_singular_set": false}}"#;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(dir.path(), json, &a, &["--seed", "1"]).status.success());
    assert!(run(dir.path(), json, &b, &["--seed", "2"]).status.success());
    assert_ne!(artifacts(&a), artifacts(&b));
}

#[test]
fn plot_scripts_for_each_artifact_kind() {
    let dir = TempDir::new().unwrap();
    let geo = dir.path().join("geo");
    assert!(run(dir.path(), GEODESIC, &geo, &[]).status.success());
    let loci = dir.path().join("loci");
    let json = r#"{"system": "heisenberg", "job": "loci", "grid": {"h": 0.25}}"#;
    assert!(run(dir.path(), json, &loci, &[]).status.success());
    let grid = dir.path().join("grid");
    let json = r#"{"system": "heisenberg", "job": "value-grid", "grid": {"h": 0.25}}"#;
    assert!(run(dir.path(), json, &grid, &[]).status.success());

    for (csv, kind) in [
        (geo.join("trajectory.csv"), "trajectory"),
        (grid.join("value_grid.csv"), "value-slice"),
        (loci.join("loci.csv"), "loci"),
    ] {
        let result = srstab(&["plot", csv.to_str().unwrap(), "--kind", kind], &[]);
        assert!(
            result.status.success(),
            "{kind}: {}",
            String::from_utf8_lossy(&result.stderr)
        );
        let script = fs::read_to_string(csv.with_extension("gp")).unwrap();
        assert!(script.contains(csv.file_name().unwrap().to_str().unwrap()), "{kind}");
        assert!(script.contains("plot"), "{kind}");
    }

    let result = srstab(
        &["plot", geo.join("trajectory.csv").to_str().unwrap(), "--kind", "pie"],
        &[],
    );
    assert_eq!(result.status.code(), Some(2));
    let result = srstab(&["plot", dir.path().join("none.csv").to_str().unwrap()], &[]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn full_suite_report_lists_each_check_once() {
    let dir = TempDir::new().unwrap();
    let json = r#"{"system": "euclidean-2", "job": "full-suite", "seed": 7,
        "suite": {"extremals": 10, "reparam_extremals": 5, "closed_form_targets": 20, "oracle_targets": 5,
                  "oracle_h": 0.1, "calibration_targets": 6, "hj_points": 5, "gradient_targets": 5,
                  "triples": 300, "refine_budget": 60, "loci_h": 0.25, "srs_seeds": 6,
                  "srs_seeds_on_s": 2, "martinet_seeds": 2}}"#;
    let out = dir.path().join("out");
    let result = run(dir.path(), json, &out, &[]);
    assert_eq!(
        result.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&result.stdout)
    );
    let r = report(&out);
    let checks = r["checks"].as_array().unwrap();
    let ids: Vec<u64> = checks.iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, (1..=12).collect::<Vec<u64>>());
    for c in checks {
        assert_eq!(c["pass"], true, "{c}");
        assert!(c["baseline"].is_string(), "{c}");
    }
}
