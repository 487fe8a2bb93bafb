use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn diffctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffctl")).args(args).output().expect("binary runs")
}

fn value_column(dir: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(dir.join("value.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,v,dv,d2v,psi_index,psi_u,residual");
    lines
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().parse().unwrap(), f.next().unwrap().parse().unwrap())
        })
        .collect()
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn solve_constant_unit_cost_gives_two_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffctl(&["solve", "--problem", "constant-unit-cost", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = value_column(dir.path());
    assert_eq!(rows.len(), 201);
    assert!(rows.iter().all(|(_, v)| (v - 2.0).abs() <= 1e-8));
    let report = json(dir.path(), "solve_report.json");
    assert_eq!(report["converged"], true);
    assert_eq!(report["run_config"]["problem"], "constant-unit-cost");
    assert_eq!(report["run_config"]["sim"]["seed"], 2024);
}

#[test]
fn solve_ou_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffctl(&["solve", "--problem", "ou-quadratic", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for (x, v) in value_column(dir.path()) {
        if x.abs() <= 3.0 {
            let exact = x * x / 2.0 + 0.5;
            assert!((v - exact).abs() <= 1e-3 * exact, "x={x}: {v} vs {exact}");
        }
    }
}

#[test]
fn problem_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.json");
    fs::write(
        &file,
        r#"{
  "rho": 0.5,
  "control_set": {"kind": "interval", "lo": 0.0, "hi": 1.0},
  "drift": {"state": {"kind": "constant", "value": 0.0}},
  "diffusion": {"state": {"kind": "constant", "value": 1.0}},
  "cost": {"state": {"kind": "constant", "value": 3.0}},
  "metadata": {"ellipticity": 1.0, "drift_bound": 0.0, "diffusion_bound": 1.0, "cost_bound": 3.0,
               "growth": {"c": 3.0, "m": 0.0}}
}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = diffctl(&[
        "solve",
        "--problem",
        file.to_str().unwrap(),
        "--grid",
        "-1:1:21",
        "--controls",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = value_column(&out_dir);
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|(_, v)| (v - 6.0).abs() <= 1e-8));
}

#[test]
fn malformed_input_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    fs::write(&file, "{ not json").unwrap();
    let out = diffctl(&["solve", "--problem", file.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem"));

    let out = diffctl(&["solve", "--problem", "constant-unit-cost", "--dt", "-1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));

    let out = diffctl(&["simulate", "--problem", "no-such-problem"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_non_convergence_exits_two_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.json");
    fs::write(
        &file,
        r#"{
  "rho": 0.5,
  "control_set": {"kind": "interval", "lo": -1.0, "hi": 1.0},
  "drift": {"control": {"kind": "polynomial-clipped", "coefficients": [0.0, 1.0]}},
  "diffusion": {"state": {"kind": "constant", "value": 1.0}},
  "cost": {"state": {"kind": "polynomial-clipped", "coefficients": [0.0, 0.0, 1.0]}},
  "metadata": {"ellipticity": 1.0, "drift_bound": 1.0, "diffusion_bound": 1.0,
               "growth": {"c": 1.0, "m": 2.0}}
}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = diffctl(&["solve", "--problem", file.to_str().unwrap(), "--max-iter", "1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out_dir, "solve_report.json");
    assert_eq!(report["converged"], false);
    assert_eq!(report["iterations"], 1);
    assert_eq!(value_column(&out_dir).len(), 1001);

    let out = diffctl(&["solve", "--problem", file.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn simulate_with_stored_value_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let solve_dir = dir.path().join("solve");
    let sim_dir = dir.path().join("sim");
    let out = diffctl(&["solve", "--problem", "ou-quadratic", "--out", solve_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = diffctl(&[
        "simulate",
        "--problem",
        "ou-quadratic",
        "--value",
        solve_dir.join("value.csv").to_str().unwrap(),
        "--paths",
        "4000",
        "--dt",
        "0.01",
        "--x0",
        "0,1",
        "--write-paths",
        "3",
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let est = json(&sim_dir, "estimates.json");
    let rows = est["estimates"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let x0 = r["x0"].as_f64().unwrap();
        let (mean, se) = (r["mean"].as_f64().unwrap(), r["se"].as_f64().unwrap());
        let exact = x0 * x0 / 2.0 + 0.5;
        // Euler bias at dt = 0.01 is well under 2%
        assert!((mean - exact).abs() <= 3.0 * se + 0.02 * exact, "x0={x0}: {mean} +- {se}");
    }
    let paths = fs::read_to_string(sim_dir.join("paths.csv")).unwrap();
    assert!(paths.starts_with("path,k,t,y,u,discounted_l\n"));
    assert_eq!(est["run_config"]["write_paths"], 3);
}

#[test]
fn verify_passes_and_corruption_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok_dir = dir.path().join("ok");
    let args = ["--problem", "constant-unit-cost", "--paths", "200", "--dt", "0.01", "--x0", "0,1"];
    let mut ok_args = vec!["verify"];
    ok_args.extend(args);
    ok_args.extend(["--out", ok_dir.to_str().unwrap()]);
    let out = diffctl(&ok_args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&ok_dir, "verification_report.json");
    assert_eq!(report["verdict"], true);
    assert!(fs::read_to_string(ok_dir.join("verification_report.txt")).unwrap().contains("verdict: PASS"));
    assert!(fs::read_to_string(ok_dir.join("summary.csv")).unwrap().starts_with("x0,v,j_psi,se,slack\n"));

    let bad_dir = dir.path().join("bad");
    let mut bad_args = vec!["verify"];
    bad_args.extend(args);
    bad_args.extend(["--corrupt", "0.1", "--out", bad_dir.to_str().unwrap()]);
    let out = diffctl(&bad_args);
    assert_eq!(out.status.code(), Some(3));
    let report = json(&bad_dir, "verification_report.json");
    assert_eq!(report["verdict"], false);
    assert_eq!(report["run_config"]["corrupt"], 0.1);
}

#[test]
fn seed_change_moves_estimate_by_less_than_three_se() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let d = dir.path().join(seed);
        let out = diffctl(&[
            "simulate",
            "--problem",
            "advertising",
            "--grid",
            "-4:6:501",
            "--paths",
            "4000",
            "--dt",
            "0.01",
            "--x0",
            "0.5",
            "--seed",
            seed,
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        let e = &json(&d, "estimates.json")["estimates"][0];
        (e["mean"].as_f64().unwrap(), e["se"].as_f64().unwrap())
    };
    let (a, sa) = run("1");
    let (b, sb) = run("2");
    assert_ne!(a, b);
    assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{a} vs {b}");
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = diffctl(&[
            "verify",
            "--problem",
            "advertising",
            "--grid",
            "-4:6:201",
            "--controls",
            "11",
            "--paths",
            "200",
            "--dt",
            "0.02",
            "--x0",
            "0.5",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.code().is_some());
        d
    };
    let (a, b) = (run("a"), run("b"));
    for name in ["value.csv", "estimates.json", "verification_report.json", "summary.csv", "run_config.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn demo_advertising_small_run_passes_with_box_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffctl(&["demo-advertising", "--paths", "2000", "--dt", "0.01", "--out", dir.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("J(psi)"));
    let report = json(dir.path(), "verification_report.json");
    let entries = report["entries"].as_array().unwrap();
    let boxed = entries.iter().find(|e| e["id"] == "box-insensitivity").unwrap();
    assert_eq!(boxed["passed"], true);
    assert_eq!(entries.iter().filter(|e| e["id"] == "optimality").count(), 5);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
}
