use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hyperpred::output::Table;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// Runs the binary inside `dir` with a clean environment override.
fn hyperpred(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperpred"))
        .args(args)
        .current_dir(dir)
        .env_remove("HYPERPRED_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn zero_scenario_writes_an_all_zero_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperpred(dir.path(), &["run", &config("zero.toml")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let traj = Table::read(&dir.path().join("out/zero/trajectory.csv")).unwrap();
    assert_eq!(traj.header, ["t", "x", "u", "v"]);
    assert_eq!(traj.columns[0].len(), 41 * 21);
    assert!(traj
        .column("u")
        .unwrap()
        .iter()
        .chain(traj.column("v").unwrap())
        .all(|&z| z == 0.0));
    let scalars = Table::read(&dir.path().join("out/zero/scalars.csv")).unwrap();
    assert_eq!(scalars.header, ["t", "X_1", "U", "norm_w_inf", "norm_X_inf"]);
    assert!(scalars.columns[1..].iter().flatten().all(|&z| z == 0.0));
    assert_eq!(*scalars.column("t").unwrap().last().unwrap(), 2.0);
}

#[test]
fn open_loop_escape_exits_with_3_and_keeps_the_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperpred(dir.path(), &["run", &config("paper-sec5-openloop.toml"), "--no-plots"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("out/paper-sec5-openloop/summary.txt")).unwrap();
    assert_eq!(summary.trim(), stdout(&o).trim());
    let t_blowup: f64 = summary
        .split("blow-up at t = ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .expect("blow-up time in the summary");
    assert!((3.1..=4.1).contains(&t_blowup), "{summary}");
    // the last CSV row is the state at detection
    let scalars = Table::read(&dir.path().join("out/paper-sec5-openloop/scalars.csv")).unwrap();
    let t_last = *scalars.column("t").unwrap().last().unwrap();
    assert!((t_last - t_blowup).abs() < 1e-4, "{t_last} vs {t_blowup}");
    assert!(scalars.column("U").unwrap().iter().all(|&u| u == 1.0));
    assert!(!dir.path().join("out/paper-sec5-openloop/norms.svg").exists());
}

#[test]
fn missing_grid_size_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("zero.toml"))
        .unwrap()
        .replace("N = 20", "");
    let path = write(dir.path(), "bad.toml", &text);
    let o = hyperpred(dir.path(), &["run", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`grid.N`"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("zero.toml"))
        .unwrap()
        .replace("t_end = 2.0", "t_end = 2.0\nt_start = 0.0");
    let path = write(dir.path(), "bad.toml", &text);
    let o = hyperpred(dir.path(), &["run", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`time.t_start`: unknown key"), "{}", stderr(&o));
}

#[test]
fn semilinear_controller_refuses_the_quasilinear_model() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("paper-sec5-stabilization.toml"))
        .unwrap()
        .replace(
            "kind = \"quasilinear\"\ntheta = 0.5\ndelta = 1.0",
            "kind = \"semilinear\"",
        );
    let path = write(dir.path(), "bad.toml", &text);
    let o = hyperpred(dir.path(), &["run", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`controller.kind`"), "{}", stderr(&o));
}

#[test]
fn reruns_are_byte_identical_and_plots_do_not_touch_the_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("paper-sec5-stabilization.toml");
    let args = |out: &'static str, plots: bool| {
        let mut a = vec!["run", cfg.as_str(), "--grid-n", "40", "--t-end", "3", "--out-dir", out];
        if !plots {
            a.push("--no-plots");
        }
        a.into_iter().map(String::from).collect::<Vec<_>>()
    };
    for (out, plots) in [("a", true), ("b", true), ("c", false)] {
        let a = args(out, plots);
        let o = hyperpred(dir.path(), &a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["trajectory.csv", "scalars.csv", "controller.csv", "summary.txt"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(dir.path().join("c").join(f)).unwrap(), "{f}");
    }
    for f in ["norms.svg", "ode_state.svg", "input.svg"] {
        let svg = fs::read_to_string(dir.path().join("a").join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"), "{f}");
        assert!(!dir.path().join("c").join(f).exists());
    }
    // six sampling intervals on [0, 3)
    let plans = Table::read(&dir.path().join("a/controller.csv")).unwrap();
    assert_eq!(plans.column("t_k").unwrap(), &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hyperpred"))
        .args(["run", &config("zero.toml")])
        .current_dir(dir.path())
        .env("HYPERPRED_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from-env/scalars.csv").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn tracking_run_reports_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperpred(
        dir.path(),
        &[
            "run",
            &config("paper-sec5-tracking.toml"),
            "--t-end",
            "2",
            "--grid-n",
            "40",
            "--no-plots",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = Table::read(&dir.path().join("out/paper-sec5-tracking/scalars.csv")).unwrap();
    let (t, r) = (s.column("t").unwrap(), s.column("X_ref").unwrap());
    for (&t, &r) in t.iter().zip(r) {
        // values went through %.12e
        assert!((r - 0.3 * (0.5 * t).sin()).abs() < 1e-12);
    }
}

#[test]
fn output_feedback_run_estimates_the_state() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperpred(dir.path(), &["run", &config("observer-semilinear.toml"), "--no-plots"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = Table::read(&dir.path().join("out/observer-semilinear/scalars.csv")).unwrap();
    let (t, err) = (s.column("t").unwrap(), s.column("x_hat_err").unwrap());
    let late = t
        .iter()
        .zip(err)
        .filter(|(&t, _)| t >= 6.0)
        .map(|(_, &e)| e)
        .fold(0.0, f64::max);
    assert!(late < 0.05, "{late}");
    let last = s
        .column("norm_w_inf")
        .unwrap()
        .last()
        .unwrap()
        .max(*s.column("norm_X_inf").unwrap().last().unwrap());
    assert!(last < 0.1, "{last}");
    assert!(dir.path().join("out/observer-semilinear/observer.csv").exists());
}

#[test]
fn observer_replay_flushes_a_wrong_guess() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = String::from("t,Y,U\n");
    for k in 0..=600 {
        data += &format!("{},0,0\n", k as f64 * 0.01);
    }
    write(dir.path(), "zero.csv", &data);
    let text = r#"
[model]
preset = "paper-sec5"
[initial]
preset = "zero"
[grid]
N = 50
[time]
t_end = 6.0
[observer]
kind = "quasilinear"
guess_v = 0.3
guess_X = [0.2]
replay = "zero.csv"
"#;
    let path = write(dir.path(), "replay.toml", text);
    let o = hyperpred(dir.path(), &["run", &path]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let obs = Table::read(&dir.path().join("out/observer.csv")).unwrap();
    let (t, w) = (obs.column("t").unwrap(), obs.column("norm_w_hat_inf").unwrap());
    assert!(w[0] > 0.1);
    // the truth is zero: after the flush the estimate is pure error
    let flush = 1.5 * (2.0 + std::f64::consts::LN_2);
    let late = t
        .iter()
        .zip(w)
        .filter(|(&t, _)| t >= flush)
        .map(|(_, &e)| e)
        .fold(0.0, f64::max);
    assert!(late < 1e-2, "{late}");
    assert!(dir.path().join("out/estimate.csv").exists());
}

#[test]
fn validate_flags_incompatible_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperpred(dir.path(), &["validate", &config("paper-sec5-stabilization.toml")]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = fs::read_to_string(configs().join("paper-sec5-stabilization.toml"))
        .unwrap()
        .replace(
            "[initial]\npreset = \"paper-sec5\"",
            "[initial]\nu0 = \"0.3\"\nv0 = \"0.5*(1 + x)\"\nX0 = [-1.0]",
        );
    let path = write(dir.path(), "bad.toml", &text);
    let o = hyperpred(dir.path(), &["validate", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stdout(&o).contains("FAIL") || stdout(&o).contains("fail"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn reproduce_paper_passes_and_writes_three_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperpred(dir.path(), &["reproduce-paper", "--out", "study", "--no-plots"]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    let report = fs::read_to_string(dir.path().join("study/report.md")).unwrap();
    assert_eq!(report.matches("| PASS |").count(), 3, "{report}");
    for name in ["paper-sec5-openloop", "paper-sec5-stabilization", "paper-sec5-tracking"] {
        assert!(
            dir.path().join("study").join(name).join("scalars.csv").exists(),
            "{name}"
        );
    }
}

#[test]
fn reproduce_paper_fails_when_a_criterion_is_missed() {
    // a short horizon cannot show the open-loop escape
    let dir = tempfile::tempdir().unwrap();
    let o = hyperpred(
        dir.path(),
        &["reproduce-paper", "--out", "study", "--t-end", "2", "--no-plots"],
    );
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("paper-sec5-openloop failed"), "{}", stderr(&o));
}
