//! Scenario execution and artifact writing.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hyperpred_core::closed_loop::{run_closed_loop, Feedback, LoopOptions, LoopRecord, OutputFeedback};
use hyperpred_core::observer::{algebraic_ode_observer, Observer, ObserverGuess, ObserverState, OdeObserver};
use hyperpred_core::quasilinear::QuasilinearController;
use hyperpred_core::semilinear::SemilinearController;
use hyperpred_core::simulator::{BlowupRecord, SimOptions};
use hyperpred_core::{Grid, PlantState, SystemModel};

use crate::config::{ControllerKind, ObserverSpec, OdeSpec, ScenarioConfig};
use crate::output::{write_csv, Table};
use crate::plot;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub enum RunError {
    /// The scenario cannot be set up; reported like a config error.
    Setup(String),
    Io {
        path: PathBuf,
        source: io::Error,
    },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Setup(m) => f.write_str(m),
            RunError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for RunError {}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Setup(_) => EXIT_CONFIG,
            RunError::Io { .. } => 1,
        }
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What a run produced.
#[derive(Debug)]
pub struct RunReport {
    pub name: String,
    pub t_reached: f64,
    pub final_norm_w: f64,
    pub final_norm_x: f64,
    /// Largest `max(‖w‖∞, |X|)` over the snapshots.
    pub peak: f64,
    pub blowup: Option<BlowupRecord>,
    pub failure: Option<String>,
    pub files: Vec<PathBuf>,
    /// The full record, absent for observer replays.
    pub record: Option<LoopRecord>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.failure.is_some() {
            EXIT_NUMERICAL
        } else if self.blowup.is_some() {
            EXIT_BLOWUP
        } else {
            0
        }
    }

    pub fn summary_line(&self) -> String {
        let mut s = format!(
            "{}: t = {:.3}, |w|inf = {:.3e}, |X|inf = {:.3e}, peak {:.3e}",
            self.name, self.t_reached, self.final_norm_w, self.final_norm_x, self.peak
        );
        if let Some(b) = &self.blowup {
            s += &format!("; blow-up at t = {:.4} ({:?})", b.t, b.trigger);
        }
        if let Some(f) = &self.failure {
            s += &format!("; numerical failure: {f}");
        }
        s
    }

    /// `max |X_1 - X_ref|` over recorded plant steps with `t ≥ from`.
    pub fn tracking_error_after(&self, reference: &dyn Fn(f64) -> f64, from: f64) -> Option<f64> {
        let rec = self.record.as_ref()?;
        rec.trace
            .iter()
            .filter(|s| s.t >= from)
            .map(|s| (s.x[0] - reference(s.t)).abs())
            .reduce(f64::max)
    }
}

fn build_observer(model: &SystemModel, spec: &ObserverSpec) -> Result<Observer, RunError> {
    let ode = match &spec.ode {
        OdeSpec::Algebraic => algebraic_ode_observer(model)
            .map_err(|e| RunError::Setup(format!("`observer.ode`: {e}; use ode = \"dynamic\" with `observer.h`")))?,
        OdeSpec::Dynamic { h, horizon } => {
            let h = h.clone();
            OdeObserver::dynamic(
                move |x, u0, v0, t, out| {
                    let mut a = x.to_vec();
                    if x.len() == 1 {
                        a.push(x[0]);
                    }
                    a.extend_from_slice(&[u0, v0, t]);
                    for (o, e) in out.iter_mut().zip(&h) {
                        *o = e.eval(&a);
                    }
                },
                *horizon,
            )
        }
    };
    Ok(Observer::new(model.clone(), ode))
}

fn guess(grid: &Grid, spec: &ObserverSpec) -> ObserverGuess {
    ObserverGuess::constant(grid, spec.guess_v, &spec.guess_x)
}

/// Runs the scenario and writes its artifacts into `cfg.out_dir`.
pub fn run(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    fs::create_dir_all(&cfg.out_dir).map_err(io_at(&cfg.out_dir))?;
    let grid = Grid::new(cfg.grid_n).map_err(|e| RunError::Setup(format!("`grid.N`: {e}")))?;
    if let Some(spec) = &cfg.observer {
        if let Some(path) = &spec.replay {
            return replay(cfg, &grid, spec, path);
        }
    }
    let model = &cfg.model;
    let state = PlantState::initial(&cfg.initial, &grid);
    let feedback = match cfg.controller.kind {
        ControllerKind::None => {
            let f: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match &cfg.input {
                Some(u) => u.clone(),
                None => {
                    let hold = state.v[cfg.grid_n];
                    Arc::new(move |_| hold)
                }
            };
            Feedback::OpenLoop(f)
        }
        ControllerKind::Semilinear => Feedback::Semilinear(
            SemilinearController::new(model.clone()).map_err(|e| RunError::Setup(format!("`controller.kind`: {e}")))?,
        ),
        ControllerKind::Quasilinear => Feedback::Quasilinear(
            QuasilinearController::new(model.clone(), cfg.controller.theta, cfg.controller.delta)
                .map_err(|e| RunError::Setup(format!("`controller`: {e}")))?,
        ),
    };
    let output = match &cfg.observer {
        Some(spec) => Some(OutputFeedback {
            observer: build_observer(model, spec)?,
            guess: guess(&grid, spec),
            engage_at: spec.engage_at,
        }),
        None => None,
    };
    let opts = LoopOptions {
        sim: SimOptions {
            cfl: cfg.cfl,
            snapshot_dt: cfg.snapshot_dt,
        },
        output,
    };
    let rec = run_closed_loop(model, &state, &feedback, cfg.t_end, &opts)
        .map_err(|e| RunError::Setup(format!("cannot start the run: {e}")))?;

    let mut files = write_loop_csv(cfg, &rec)?;
    if cfg.plots {
        files.extend(render_plots(&cfg.out_dir)?);
    }
    let snaps = &rec.trajectory.snapshots;
    let last = snaps.last().expect("initial snapshot");
    let mut report = RunReport {
        name: cfg.model_name.clone(),
        t_reached: last.t,
        final_norm_w: last.norm_w(),
        final_norm_x: last.norm_x(),
        peak: snaps.iter().map(|s| s.norm_w().max(s.norm_x())).fold(0.0, f64::max),
        blowup: rec.trajectory.blowup,
        failure: rec.failure.as_ref().map(|e| e.to_string()),
        files,
        record: None,
    };
    let summary = cfg.out_dir.join("summary.txt");
    fs::write(&summary, report.summary_line() + "\n").map_err(io_at(&summary))?;
    report.files.push(summary);
    report.record = Some(rec);
    Ok(report)
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn x_names(n: usize, prefix: &str) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn write_loop_csv(cfg: &ScenarioConfig, rec: &LoopRecord) -> Result<Vec<PathBuf>, RunError> {
    let dir = &cfg.out_dir;
    let n = cfg.model.n();
    let snaps = &rec.trajectory.snapshots;
    let mut files = Vec::new();

    let path = dir.join("trajectory.csv");
    let rows = snaps.iter().flat_map(|s| {
        let dx = 1.0 / (s.u.len() - 1) as f64;
        (0..s.u.len()).map(move |i| vec![s.t, i as f64 * dx, s.u[i], s.v[i]])
    });
    write_csv(&path, &header(&["t", "x", "u", "v"]), rows).map_err(io_at(&path))?;
    files.push(path);

    let path = dir.join("scalars.csv");
    let mut head = vec!["t".to_string()];
    head.extend(x_names(n, "X"));
    head.extend(header(&["U", "norm_w_inf", "norm_X_inf"]));
    if cfg.reference.is_some() {
        head.push("X_ref".into());
    }
    let with_estimates = !rec.estimates.is_empty();
    if with_estimates {
        head.push("x_hat_err".into());
    }
    let rows = snaps
        .iter()
        .zip(&rec.trajectory.inputs)
        .enumerate()
        .map(|(k, (s, &u))| {
            let mut row = vec![s.t];
            row.extend_from_slice(&s.x);
            row.extend([u, s.norm_w(), s.norm_x()]);
            if let Some(r) = &cfg.reference {
                row.push(r(s.t));
            }
            if with_estimates {
                // the blow-up state has no matching estimate
                row.push(rec.estimates.get(k).map_or(f64::NAN, |e| {
                    sup_diff(&e.u, &s.u).max(sup_diff(&e.v, &s.v)).max(sup_diff(&e.x, &s.x))
                }));
            }
            row
        });
    write_csv(&path, &head, rows).map_err(io_at(&path))?;
    files.push(path);

    match cfg.controller.kind {
        ControllerKind::None => {}
        ControllerKind::Semilinear => {
            let path = dir.join("controller.csv");
            let rows = rec
                .trace
                .iter()
                .map(|s| vec![s.t, s.input, s.v0, cfg.model.feedback(&s.x, s.t)]);
            write_csv(&path, &header(&["t", "U", "v_left", "K"]), rows).map_err(io_at(&path))?;
            files.push(path);
        }
        ControllerKind::Quasilinear => {
            let path = dir.join("controller.csv");
            let rows = rec.plans.iter().map(|p| {
                vec![
                    p.t_k,
                    p.plan.tau_k,
                    p.window.0,
                    p.window.1,
                    p.plan.anchor,
                    p.plan.error,
                    p.plan.switch_time.unwrap_or(f64::NAN),
                ]
            });
            let head = header(&[
                "t_k",
                "tau_k",
                "window_start",
                "window_end",
                "anchor",
                "error",
                "switch_time",
            ]);
            write_csv(&path, &head, rows).map_err(io_at(&path))?;
            files.push(path);
        }
    }

    if !rec.observer.is_empty() {
        let path = dir.join("observer.csv");
        write_observer_csv(&path, n, &rec.observer, &rec.estimates)?;
        files.push(path);
    }
    Ok(files)
}

fn write_observer_csv(path: &Path, n: usize, obs: &[ObserverState], est: &[PlantState]) -> Result<(), RunError> {
    let mut head = header(&["t", "curve_foot"]);
    head.extend(x_names(n, "X_foot"));
    head.extend(x_names(n, "X_hat"));
    head.push("norm_w_hat_inf".into());
    let rows = obs.iter().zip(est).map(|(o, e)| {
        let mut row = vec![o.t, o.curve.at_left()];
        row.extend_from_slice(&o.x);
        row.extend_from_slice(&e.x);
        row.push(e.norm_w());
        row
    });
    write_csv(path, &head, rows).map_err(io_at(path))
}

/// Feeds recorded `t, Y, U` samples to the observer.
fn replay(cfg: &ScenarioConfig, grid: &Grid, spec: &ObserverSpec, path: &Path) -> Result<RunReport, RunError> {
    let data = Table::read(path).map_err(io_at(path))?;
    let col = |name: &str| {
        data.column(name)
            .ok_or_else(|| RunError::Setup(format!("`observer.replay`: {} has no column `{name}`", path.display())))
    };
    let (t, y, u) = (col("t")?, col("Y")?, col("U")?);
    if t.len() < 2 {
        return Err(RunError::Setup(format!(
            "`observer.replay`: {} needs at least two samples",
            path.display()
        )));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RunError::Setup(format!(
            "`observer.replay`: times in {} must increase",
            path.display()
        )));
    }
    let observer = build_observer(&cfg.model, spec)?;
    let mut states = Vec::new();
    let mut estimates = Vec::new();
    let mut record = |st: &ObserverState| match observer.estimate_current(st) {
        Ok(e) => {
            states.push(st.clone());
            estimates.push(e);
            None
        }
        Err(e) => Some(e.to_string()),
    };
    let failure = match observer.init(t[0], &guess(grid, spec), y[0], u[0]) {
        Err(e) => Some(e.to_string()),
        Ok(mut st) => {
            let mut failure = record(&st);
            let mut next = t[0] + cfg.snapshot_dt;
            for k in 1..t.len() {
                if failure.is_some() || t[k] > cfg.t_end + 1e-12 {
                    break;
                }
                match observer.step(&st, y[k], u[k], t[k] - st.t) {
                    Ok(s) => st = s,
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
                if st.t >= next - 1e-12 || k + 1 == t.len() {
                    failure = record(&st);
                    next += cfg.snapshot_dt;
                }
            }
            failure
        }
    };
    let mut files = Vec::new();
    let obs_path = cfg.out_dir.join("observer.csv");
    write_observer_csv(&obs_path, cfg.model.n(), &states, &estimates)?;
    files.push(obs_path);
    let est_path = cfg.out_dir.join("estimate.csv");
    let rows = estimates.iter().flat_map(|s| {
        let dx = 1.0 / (s.u.len() - 1) as f64;
        (0..s.u.len()).map(move |i| vec![s.t, i as f64 * dx, s.u[i], s.v[i]])
    });
    write_csv(&est_path, &header(&["t", "x", "u_hat", "v_hat"]), rows).map_err(io_at(&est_path))?;
    files.push(est_path);

    let last = estimates.last();
    let report = RunReport {
        name: format!("{} (observer replay)", cfg.model_name),
        t_reached: states.last().map_or(t[0], |s| s.t),
        final_norm_w: last.map_or(f64::NAN, |e| e.norm_w()),
        final_norm_x: last.map_or(f64::NAN, |e| e.norm_x()),
        peak: estimates.iter().map(|e| e.norm_w().max(e.norm_x())).fold(0.0, f64::max),
        blowup: None,
        failure,
        files,
        record: None,
    };
    let summary = cfg.out_dir.join("summary.txt");
    fs::write(&summary, report.summary_line() + "\n").map_err(io_at(&summary))?;
    Ok(report)
}

/// Renders the SVG plots from the written `scalars.csv`.
fn render_plots(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let path = dir.join("scalars.csv");
    let table = Table::read(&path).map_err(io_at(&path))?;
    plot::render_all(&table, dir).map_err(|e| RunError::Io {
        path: dir.to_path_buf(),
        source: io::Error::other(e.to_string()),
    })
}
