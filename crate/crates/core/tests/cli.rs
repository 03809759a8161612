use std::process::Command;

fn cutoff(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cutoff")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn validate_lemmas_passes() {
    let (code, out, _) = cutoff(&["validate-lemmas", "--cases", "20"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 5);
    assert!(out.lines().all(|l| l.ends_with("ok")));
}

#[test]
fn exact_curve_to_stdout() {
    let (code, out, _) = cutoff(&["curve", "--model", "ou:1", "--x0", "1", "--method", "exact", "--eps", "1e-6", "--c-grid", "-1,0,1"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "epsilon,c,t,distance,stderr,G");
    assert_eq!(lines.len(), 4);
    let g0: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
    assert!((g0 - 0.5204998778130465).abs() < 1e-9);
}

#[test]
fn lyapunov_csv_columns() {
    let (code, out, _) = cutoff(&["lyapunov", "--model", "ou:1,2", "--x0", "1,1", "--eps", "0.01", "--t-end", "1", "--dt", "0.5"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next(), Some("t,entry_00,entry_01,entry_10,entry_11"));
    assert_eq!(out.lines().count(), 4);
}

#[test]
fn semiflow_and_profile() {
    let (code, out, _) = cutoff(&["semiflow", "--model", "quartic:1,1", "--x0", "1", "--t-end", "2", "--dt", "1"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next(), Some("t,x0"));
    let (code, out, _) = cutoff(&["profile", "--model", "ou:1", "--x0", "1"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 14);
}

#[test]
fn precondition_and_config_errors_exit_2() {
    let (code, _, err) = cutoff(&["truncation", "--model", "quartic:1,1", "--x0", "1", "--eps", "1e-3", "--radii", "0.5"]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = cutoff(&["curve", "--model", "ou:1", "--x0", "1,2", "--method", "exact", "--eps", "1e-3"]);
    assert_eq!(code, 2);
    let (code, _, _) = cutoff(&["curve", "--model", "ou:1,2", "--x0", "1,1", "--method", "fp", "--eps", "1e-3"]);
    assert_eq!(code, 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model": {"kind": "ou-diagonal", "rates": [1]}, "x0": [1], "epsilons": [2.0], "output_dir": "o"}"#).unwrap();
    let (code, _, _) = cutoff(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn run_writes_outputs_and_reports_invariant_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"kind": "ou-diagonal", "rates": [1]}, "x0": [1], "epsilons": [1e-2, 1e-3],
            "output_dir": "ignored", "tasks": [{"task": "profile"}, {"task": "verdict"}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, _, err) = cutoff(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    // ε = 1e−3 is too large for the 0.9/0.1 verdict.
    assert_eq!(code, 4, "{err}");
    assert!(out.join("profile.csv").exists());
    assert!(out.join("verdict.csv").exists());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tasks"][0]["status"], "ok");
    assert_eq!(manifest["tasks"][1]["status"], "failed");
    assert_eq!(manifest["files"].as_array().unwrap().len(), 1);
}

#[test]
fn rotating_reports_frame_deviation() {
    let (code, out, err) = cutoff(&["rotating", "--a", "1", "--b", "-2", "--x0", "1,0.5", "--eps", "1e-6", "--c-grid", "0"]);
    assert_eq!(code, 0);
    assert!(err.contains("frame deviation"));
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn moments_command() {
    let (code, out, _) = cutoff(&["moments", "--model", "ou:1", "--x0", "1", "--eps", "0.01", "--t-end", "1", "--paths", "500", "--workers", "2"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next(), Some("t,n,estimate,stderr,bound,pass"));
}
