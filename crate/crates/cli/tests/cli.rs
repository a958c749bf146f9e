use std::path::Path;
use std::process::{Command, Output};

use levelling_core::domain::generate_domain;
use levelling_core::{Domain, Region};

fn levelling(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levelling"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// 2×2 grid and `h = xy` written as `g2.json` and `h.json`.
fn golden_files(dir: &Path) {
    let o = levelling(&["gen", "--region", "rectangle", "--params", "0,1,0,1", "--res", "1", "--out", "g2.json"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(dir.join("h.json"), "[0, 0, 0, 1]").unwrap();
}

/// `(step, norm, lower_bound)` rows of a run log.
fn parse_log(csv: &str) -> Vec<(usize, f64, Option<f64>)> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,factor,norm,lower_bound"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 4, "{l}");
            (f[0].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().ok())
        })
        .collect()
}

#[test]
fn gen_writes_generated_domains() {
    let dir = tempfile::tempdir().unwrap();
    golden_files(dir.path());
    let d = Domain::load(dir.path().join("g2.json")).unwrap();
    assert_eq!(d.num_points(), 4);
    assert_eq!(d.class_counts(), &[2, 2]);

    let o = levelling(&["gen", "--region", "triangle_abc", "--res", "16", "--out", "tri16.json"], dir.path());
    assert!(o.status.success());
    let tri = Domain::load(dir.path().join("tri16.json")).unwrap();
    assert_eq!(tri, generate_domain(&Region::TriangleAbc, 16).unwrap());
}

#[test]
fn unknown_region_lists_the_known_ones() {
    let dir = tempfile::tempdir().unwrap();
    let o = levelling(&["gen", "--region", "blob", "--res", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for name in ["rectangle", "lshape_K1", "union_ncu", "triangle_abc", "convex_polygon", "product_grid"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(levelling(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(levelling(&["run", "--tol"], dir.path()).status.code(), Some(1));
    assert_eq!(levelling(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn oracle_on_the_golden_instance() {
    let dir = tempfile::tempdir().unwrap();
    golden_files(dir.path());
    let o = levelling(&["oracle", "--domain", "g2.json", "--field", "h.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["error"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(v["status"], "optimal");
    assert_eq!(v["certificate"]["verdict"], "pass");
    assert_eq!(v["dual_weights"].as_array().unwrap().len(), 4);
}

#[test]
fn run_converges_on_the_golden_instance() {
    let dir = tempfile::tempdir().unwrap();
    golden_files(dir.path());
    let o = levelling(
        &["run", "--domain", "g2.json", "--field", "h.json", "--tol", "1e-9", "--lower-bound-every", "1", "--state", "st.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = parse_log(&stdout(&o));
    assert!((rows.last().unwrap().1 - 0.25).abs() < 1e-12);
    for w in rows.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-12);
    }
    for (_, norm, lb) in &rows {
        assert!(lb.unwrap() <= norm + 1e-12);
    }
    let st: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("st.json")).unwrap()).unwrap();
    assert_eq!(st["termination"], "converged");
    assert_eq!(st["residual"].as_array().unwrap().len(), 4);
}

#[test]
fn truncated_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    golden_files(dir.path());
    let o = levelling(&["run", "--domain", "g2.json", "--field", "h.json", "--max-steps", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(parse_log(&stdout(&o)).len(), 1);
}

#[test]
fn expression_field_matches_file_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = levelling(&["gen", "--region", "rectangle", "--res", "4", "--out", "g.json"], p);
    assert!(o.status.success());
    let d = Domain::load(p.join("g.json")).unwrap();
    let values: Vec<f64> = (0..d.num_points())
        .map(|j| {
            let c = d.coords(j).unwrap();
            c[0] * c[1]
        })
        .collect();
    std::fs::write(p.join("xy.json"), serde_json::to_string(&values).unwrap()).unwrap();
    let a = levelling(&["run", "--domain", "g.json", "--expr", "x*y"], p);
    let b = levelling(&["run", "--domain", "g.json", "--field", "xy.json"], p);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn field_length_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    golden_files(dir.path());
    std::fs::write(dir.path().join("short.json"), "[1, 2, 3]").unwrap();
    let o = levelling(&["run", "--domain", "g2.json", "--field", "short.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains('3'), "{}", stderr(&o));
}

#[test]
fn irreducible_max_reports_integer_or_cap() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(levelling(&["gen", "--region", "triangle_abc", "--res", "16", "--out", "tri16.json"], p)
        .status
        .success());
    let o = levelling(&["bolts", "irreducible-max", "--domain", "tri16.json", "--cap", "64"], p);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "11");
    let o = levelling(&["bolts", "irreducible-max", "--domain", "tri16.json", "--cap", "5"], p);
    assert_eq!(stdout(&o).trim(), "exceeds_cap");
}

#[test]
fn bolt_queries() {
    let dir = tempfile::tempdir().unwrap();
    golden_files(dir.path());
    let p = dir.path();
    let o = levelling(&["bolts", "shortest", "--domain", "g2.json", "--from", "0", "--to", "3"], p);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["found"]["points"].as_array().unwrap().len(), 3);

    let o = levelling(&["bolts", "enumerate", "--domain", "g2.json", "--max-len", "4", "--closed"], p);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);

    let o = levelling(
        &["bolts", "lower-bound", "--domain", "g2.json", "--field", "h.json", "--format", "csv", "--witness", "w.json"],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert!((row[0].parse::<f64>().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(&row[1..], &["4", "true", "w.json"]);
    let w: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("w.json")).unwrap()).unwrap();
    assert_eq!(w["points"].as_array().unwrap().len(), 4);
}

#[test]
fn cproperty_jump_column_approaches_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = levelling(
        &["diagnose", "cproperty", "--region", "union_ncu", "--expr", "x*y", "--res", "16,64,256"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let jumps: Vec<f64> = stdout(&o)
        .lines()
        .filter(|l| l.contains(",max_jump_f0,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(jumps.len(), 3);
    assert!(jumps.windows(2).all(|w| w[1] > w[0]));
    assert!((jumps[2] - 1.0).abs() < 0.01);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let runs: [&[&str]; 3] = [
        &["sweep", "--region", "triangle_abc", "--expr", "x*y - y", "--res", "2,4,8"],
        &["diagnose", "multifactor", "--seed", "3", "--count", "6", "--format", "json"],
        &["diagnose", "medvedev", "--region", "lshape_K1", "--res", "4,8"],
    ];
    for args in runs {
        let a = levelling(args, p);
        let b = levelling(args, p);
        assert!(a.status.success(), "{}", stderr(&a));
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn sweep_writes_charts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = levelling(
        &[
            "sweep", "--region", "rectangle", "--expr", "x*y", "--res", "2,4", "--format", "svg",
            "--metric", "steps", "--out", "steps.svg", "--norm-chart", "norms.svg",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let steps = std::fs::read_to_string(p.join("steps.svg")).unwrap();
    let norms = std::fs::read_to_string(p.join("norms.svg")).unwrap();
    assert!(steps.starts_with("<svg") && steps.contains("<polyline"));
    assert_eq!(norms.matches("<polyline").count(), 2);

    let o = levelling(&["sweep", "--region", "rectangle", "--expr", "x", "--res", "2", "--format", "svg", "--metric", "nope"], p);
    assert_eq!(o.status.code(), Some(1));
}
