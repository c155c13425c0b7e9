//! End-to-end checks of the command-line interface: exit codes, file
//! contracts, and determinism.

use std::path::Path;
use std::process::{Command, Output};

fn dmp_sim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmp-sim"))
        .args(args)
        .current_dir(dir)
        .env_remove("DMP_SIM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn demo_gen_writes_duration_times_rate_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmp_sim(
        dir.path(),
        &[
            "demo-gen",
            "--kind",
            "reach",
            "--duration",
            "4",
            "--out",
            "demo.csv",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("demo.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1001); // header + duration * rate samples
    assert_eq!(lines[0], "t,y1,y2,y3,qw,qx,qy,qz");
}

#[test]
fn demo_gen_handover_angle_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmp_sim(
        dir.path(),
        &[
            "demo-gen",
            "--kind",
            "handover_gt_pi",
            "--angle",
            "4.712",
            "--out",
            "demo.csv",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let demo = cartesian_dmp::io::read_demo_csv(&dir.path().join("demo.csv")).unwrap();
    let d = cartesian_dmp::quaternion::quat_diff(
        &demo.orientations()[0],
        &demo.goal_pose().orientation,
    )
    .unwrap();
    assert!((d.angle() - 4.712).abs() < 1e-9);
}

#[test]
fn missing_kind_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmp_sim(dir.path(), &["demo-gen", "--out", "demo.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_handover_angle_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmp_sim(
        dir.path(),
        &[
            "demo-gen",
            "--kind",
            "handover_gt_pi",
            "--angle",
            "9.0",
            "--out",
            "demo.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_rollout_contract() {
    let dir = tempfile::tempdir().unwrap();
    let demo_gen = dmp_sim(
        dir.path(),
        &["demo-gen", "--kind", "reach", "--out", "demo.csv"],
    );
    assert!(demo_gen.status.success());
    let out = dmp_sim(
        dir.path(),
        &["train", "--demo", "demo.csv", "--out", "model.dmp"],
    );
    assert!(out.status.success(), "{out:?}");
    assert!(stdout_of(&out).contains("rms forcing residual"));
    // the model file parses back
    let model = cartesian_dmp::io::read_model_file(&dir.path().join("model.dmp")).unwrap();
    assert_eq!(model.n_basis(), 25);
}

#[test]
fn train_on_constant_demo_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("t,y1,y2,y3,qw,qx,qy,qz\n");
    for k in 0..100 {
        text.push_str(&format!("{},0.1,0.2,0.3,1,0,0,0\n", k as f64 * 0.004));
    }
    std::fs::write(dir.path().join("demo.csv"), text).unwrap();
    let out = dmp_sim(
        dir.path(),
        &["train", "--demo", "demo.csv", "--out", "model.dmp"],
    );
    assert!(out.status.success(), "{out:?}");
    assert!(stdout_of(&out).contains("degenerate scaling"));
    let model = cartesian_dmp::io::read_model_file(&dir.path().join("model.dmp")).unwrap();
    for dim in 0..6 {
        assert!(model.weights(dim).iter().all(|&w| w == 0.0));
    }
}

#[test]
fn train_on_two_samples_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("demo.csv"),
        "t,y1,y2,y3,qw,qx,qy,qz\n0,0,0,0,1,0,0,0\n0.004,0,0,0,1,0,0,0\n",
    )
    .unwrap();
    let out = dmp_sim(
        dir.path(),
        &["train", "--demo", "demo.csv", "--out", "model.dmp"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn residual_not_worse_with_more_bases() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dmp_sim(
        dir.path(),
        &["demo-gen", "--kind", "reach", "--out", "demo.csv"]
    )
    .status
    .success());
    let rms_of = |n: &str, out_name: &str| -> f64 {
        let out = dmp_sim(
            dir.path(),
            &[
                "train",
                "--demo",
                "demo.csv",
                "--out",
                out_name,
                "--n-basis",
                n,
            ],
        );
        assert!(out.status.success());
        let text = stdout_of(&out);
        let line = text
            .lines()
            .find(|l| l.starts_with("rms forcing residual"))
            .unwrap();
        line.split(':')
            .nth(1)
            .unwrap()
            .split_whitespace()
            .map(|v| v.parse::<f64>().unwrap())
            .sum()
    };
    let coarse = rms_of("1", "m1.dmp");
    let fine = rms_of("25", "m25.dmp");
    assert!(fine <= coarse, "residual rose from {coarse} to {fine}");
}

#[test]
fn run_setup1_reports_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmp_sim(
        dir.path(),
        &[
            "run",
            "--preset",
            "setup1",
            "--trials",
            "3",
            "--seed",
            "5",
            "--out-dir",
            "runs",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("converged = 3/3"), "{text}");
    for trial in 0..3 {
        assert!(dir
            .path()
            .join("runs")
            .join(format!("trial_{trial:03}.csv"))
            .exists());
    }
    let summary = std::fs::read_to_string(dir.path().join("runs/summary.txt")).unwrap();
    assert_eq!(summary, text);
}

#[test]
fn run_setup3_flags_equator_crossing_and_large_initial_difference() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmp_sim(
        dir.path(),
        &[
            "run",
            "--preset",
            "setup3",
            "--trials",
            "1",
            "--seed",
            "7",
            "--out-dir",
            "runs",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("equator_crossed = true"), "{text}");
    assert!(text.contains("goal_converged = true"), "{text}");
    let initial: f64 = text
        .lines()
        .find(|l| l.starts_with("trial 000"))
        .and_then(|l| l.split("initial_dcg = ").nth(1))
        .and_then(|l| l.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(initial > std::f64::consts::PI);
}

#[test]
fn run_without_perturbations_keeps_time_parameter_nominal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmp_sim(
        dir.path(),
        &[
            "run",
            "--preset",
            "setup2",
            "--trials",
            "1",
            "--no-perturb",
            "--out-dir",
            "runs",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    let ratio: f64 = text
        .lines()
        .find(|l| l.starts_with("aggregate"))
        .and_then(|l| l.split("max_tau_ratio = ").nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(ratio < 1.05, "max tau_a/tau = {ratio}");
}

#[test]
fn runs_are_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = dmp_sim(
            dir.path(),
            &[
                "run",
                "--preset",
                "setup2",
                "--trials",
                "2",
                "--seed",
                "11",
                "--jobs",
                "2",
                "--horizon",
                "6",
                "--out-dir",
                name,
            ],
        );
        assert!(out.status.success(), "{out:?}");
    }
    for file in ["trial_000.csv", "trial_001.csv", "summary.txt"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn out_dir_env_var_wins() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_dmp-sim"))
        .args([
            "run",
            "--preset",
            "setup1",
            "--trials",
            "1",
            "--out-dir",
            "ignored",
        ])
        .current_dir(dir.path())
        .env("DMP_SIM_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(env_dir.join("trial_000.csv").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn custom_preset_runs_a_loaded_model_with_config_perturbations() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dmp_sim(
        dir.path(),
        &["demo-gen", "--kind", "reach", "--out", "demo.csv"]
    )
    .status
    .success());
    assert!(dmp_sim(
        dir.path(),
        &["train", "--demo", "demo.csv", "--out", "model.dmp"]
    )
    .status
    .success());
    std::fs::write(
        dir.path().join("run.cfg"),
        "preset = custom\nmodel = model.dmp\nhorizon = 10\n\
         perturb = pulse 0.8 1.1 5 0 0 0 0 5\nseed = 3\n",
    )
    .unwrap();
    let out = dmp_sim(
        dir.path(),
        &["run", "--config", "run.cfg", "--out-dir", "runs"],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("goal_converged = true"), "{text}");
    let ratio: f64 = text
        .lines()
        .find(|l| l.starts_with("aggregate"))
        .and_then(|l| l.split("max_tau_ratio = ").nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(ratio > 1.5, "pulse did not engage coupling: {ratio}");
}

#[test]
fn custom_run_can_train_from_a_demo_directly() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dmp_sim(
        dir.path(),
        &["demo-gen", "--kind", "reach", "--out", "demo.csv"]
    )
    .status
    .success());
    let out = dmp_sim(
        dir.path(),
        &[
            "run",
            "--preset",
            "custom",
            "--demo",
            "demo.csv",
            "--horizon",
            "10",
            "--k-v-angular",
            "8",
            "--out-dir",
            "runs",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    assert!(stdout_of(&out).contains("goal_converged = true"));
}

#[test]
fn domain_abort_exits_4_and_keeps_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("t,y1,y2,y3,qw,qx,qy,qz\n");
    for k in 0..100 {
        text.push_str(&format!("{},0.1,0.2,0.3,1,0,0,0\n", k as f64 * 0.004));
    }
    std::fs::write(dir.path().join("demo.csv"), text).unwrap();
    assert!(dmp_sim(
        dir.path(),
        &["train", "--demo", "demo.csv", "--out", "model.dmp"]
    )
    .status
    .success());
    // a half-turn offset lands the actual-to-coupled difference on the
    // removed point
    std::fs::write(
        dir.path().join("run.cfg"),
        "preset = custom\nmodel = model.dmp\nhorizon = 1\n\
         perturb = displace 0.1 0 0 0 0 0 6.283185307179586\n",
    )
    .unwrap();
    let out = dmp_sim(
        dir.path(),
        &["run", "--config", "run.cfg", "--out-dir", "runs"],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(stdout_of(&out).contains("ABORTED"));
    let partial = std::fs::read_to_string(dir.path().join("runs/trial_000.csv")).unwrap();
    assert!(
        partial.lines().count() > 1,
        "partial log retained up to the failure"
    );
}

#[test]
fn report_aggregates_mixed_logs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmp_sim(
        dir.path(),
        &[
            "run",
            "--preset",
            "setup1",
            "--trials",
            "3",
            "--seed",
            "9",
            "--out-dir",
            "runs",
        ],
    );
    assert!(out.status.success());
    // a truncated reach run that has not converged yet
    let out = dmp_sim(
        dir.path(),
        &[
            "run",
            "--preset",
            "setup2",
            "--trials",
            "1",
            "--horizon",
            "2",
            "--out-dir",
            "short",
        ],
    );
    assert!(out.status.success());
    let out = dmp_sim(
        dir.path(),
        &[
            "report",
            "--logs",
            "runs",
            "short",
            "--out",
            "table.csv",
            "--long-out",
            "norms.csv",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 5); // header + 4 trials
    let converged_rows = rows[1..]
        .iter()
        .filter(|r| r.split(',').nth(4) == Some("true"))
        .count();
    assert_eq!(converged_rows, 3, "the truncated run cannot have converged");
    let text = stdout_of(&out);
    assert!(
        text.contains(&format!("converged = {converged_rows}/4")),
        "aggregate does not match rows: {text}"
    );
    let norms = std::fs::read_to_string(dir.path().join("norms.csv")).unwrap();
    assert!(norms.lines().next().unwrap() == "trial,file,t,series,value");
    // (3 x 751 + 1 x 501) records x 11 series + header
    assert_eq!(norms.lines().count(), (3 * 751 + 501) * 11 + 1);
}

#[test]
fn report_without_logs_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let out = dmp_sim(
        dir.path(),
        &["report", "--logs", "empty", "--out", "table.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}
