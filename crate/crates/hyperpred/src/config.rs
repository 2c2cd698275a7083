//! Scenario configuration files.
//!
//! A config is a TOML document with the sections `model`, `initial`, `grid`,
//! `time`, `input`, `controller`, `observer` and `output`. Every key is
//! checked: unknown keys and missing required keys are errors that name the
//! dotted key, e.g. `grid.N`. Expressions are parsed here, so a bad formula
//! is reported against its key as well.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use hyperpred_core::model::ProfileFn;
use hyperpred_core::presets::{self, Law};
use hyperpred_core::{InitialData, ModelKind, Scenario, SystemModel};

use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted key the error is about, if any.
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.into()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "`{k}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = Result<T, ConfigError>;

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub t_end: Option<f64>,
    pub no_plots: bool,
    pub out_dir: Option<PathBuf>,
}

/// A table together with the keys read from it so far.
struct Section<'a> {
    path: String,
    table: Option<&'a toml::Table>,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: Option<&'a toml::Table>) -> Self {
        Self {
            path: path.to_string(),
            table,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.path)
    }

    fn get(&self, k: &str) -> Option<&'a toml::Value> {
        self.used.borrow_mut().insert(k.to_string());
        self.table.and_then(|t| t.get(k))
    }

    fn present(&self) -> bool {
        self.table.is_some()
    }

    fn missing(&self, k: &str) -> ConfigError {
        ConfigError::at(self.key(k), "missing required key")
    }

    fn opt_str(&self, k: &str) -> Res<Option<&'a str>> {
        match self.get(k) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(ConfigError::at(
                self.key(k),
                format!("expected a string, found {}", other.type_str()),
            )),
        }
    }

    fn req_str(&self, k: &str) -> Res<&'a str> {
        self.opt_str(k)?.ok_or_else(|| self.missing(k))
    }

    fn opt_f64(&self, k: &str) -> Res<Option<f64>> {
        match self.get(k) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(other) => Err(ConfigError::at(
                self.key(k),
                format!("expected a number, found {}", other.type_str()),
            )),
        }
    }

    fn opt_usize(&self, k: &str) -> Res<Option<usize>> {
        match self.get(k) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(other) => Err(ConfigError::at(
                self.key(k),
                format!("expected a non-negative integer, found {other}"),
            )),
        }
    }

    fn opt_bool(&self, k: &str) -> Res<Option<bool>> {
        match self.get(k) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(other) => Err(ConfigError::at(
                self.key(k),
                format!("expected true or false, found {}", other.type_str()),
            )),
        }
    }

    fn opt_f64_array(&self, k: &str) -> Res<Option<Vec<f64>>> {
        match self.get(k) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    other => Err(ConfigError::at(
                        self.key(k),
                        format!("expected numbers, found {}", other.type_str()),
                    )),
                })
                .collect::<Res<Vec<f64>>>()
                .map(Some),
            Some(toml::Value::Float(x)) => Ok(Some(vec![*x])),
            Some(toml::Value::Integer(i)) => Ok(Some(vec![*i as f64])),
            Some(other) => Err(ConfigError::at(
                self.key(k),
                format!("expected an array of numbers, found {}", other.type_str()),
            )),
        }
    }

    fn opt_str_array(&self, k: &str) -> Res<Option<Vec<&'a str>>> {
        match self.get(k) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| {
                    v.as_str().ok_or_else(|| {
                        ConfigError::at(self.key(k), format!("expected strings, found {}", v.type_str()))
                    })
                })
                .collect::<Res<Vec<&str>>>()
                .map(Some),
            Some(toml::Value::String(s)) => Ok(Some(vec![s.as_str()])),
            Some(other) => Err(ConfigError::at(
                self.key(k),
                format!("expected an array of strings, found {}", other.type_str()),
            )),
        }
    }

    fn expr(&self, k: &str, src: &str, vars: &[&str]) -> Res<Expr> {
        Expr::parse(src, vars).map_err(|e| ConfigError::at(self.key(k), e.to_string()))
    }

    /// Errors on the first key that was never read.
    fn finish(self) -> Res<()> {
        if let Some(t) = self.table {
            let used = self.used.borrow();
            if let Some(k) = t.keys().find(|k| !used.contains(k.as_str())) {
                return Err(ConfigError::at(self.key(k), "unknown key"));
            }
        }
        Ok(())
    }
}

fn section<'a>(root: &'a toml::Table, name: &str) -> Res<Section<'a>> {
    match root.get(name) {
        None => Ok(Section::new(name, None)),
        Some(toml::Value::Table(t)) => Ok(Section::new(name, Some(t))),
        Some(other) => Err(ConfigError::at(
            name,
            format!("expected a table, found {}", other.type_str()),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    None,
    Semilinear,
    Quasilinear,
}

#[derive(Debug, Clone)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub theta: f64,
    pub delta: f64,
}

#[derive(Clone)]
pub enum OdeSpec {
    Algebraic,
    Dynamic { h: Vec<Arc<Expr>>, horizon: Option<f64> },
}

#[derive(Clone)]
pub struct ObserverSpec {
    pub guess_v: f64,
    pub guess_x: Vec<f64>,
    pub ode: OdeSpec,
    pub engage_at: f64,
    /// CSV with columns `t, Y, U` to replay instead of simulating a plant.
    pub replay: Option<PathBuf>,
}

/// A fully resolved scenario.
#[derive(Clone)]
pub struct ScenarioConfig {
    pub model_name: String,
    pub model: SystemModel,
    pub scenario: Scenario,
    /// Reference signal, reported next to `X_1` when tracking.
    pub reference: Option<ProfileFn>,
    pub initial: InitialData,
    pub grid_n: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub snapshot_dt: f64,
    /// Open-loop input; `None` holds the initial `v(1)`.
    pub input: Option<ProfileFn>,
    pub controller: ControllerSpec,
    pub observer: Option<ObserverSpec>,
    pub out_dir: PathBuf,
    pub plots: bool,
}

impl fmt::Debug for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScenarioConfig")
            .field("model", &self.model_name)
            .field("grid_n", &self.grid_n)
            .field("t_end", &self.t_end)
            .field("controller", &self.controller)
            .field("observer", &self.observer.is_some())
            .field("out_dir", &self.out_dir)
            .finish_non_exhaustive()
    }
}

/// Names of the ODE-state variables: `X1..Xn`, plus `X` when `n = 1`.
fn state_vars(n: usize) -> Vec<String> {
    let mut v: Vec<String> = (1..=n).map(|i| format!("X{i}")).collect();
    if n == 1 {
        v.push("X".into());
    }
    v
}

/// Argument vector for [`state_vars`] followed by `extra`.
fn state_args(x: &[f64], extra: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    if x.len() == 1 {
        a.push(x[0]);
    }
    a.extend_from_slice(extra);
    a
}

fn profile(e: Expr) -> ProfileFn {
    Arc::new(move |z| e.eval(&[z]))
}

struct ModelChoice {
    name: String,
    model: SystemModel,
    scenario: Scenario,
    reference: Option<ProfileFn>,
    /// λᵘ has a kink at x = 1/2, so the grid must have a node there.
    kink_at_half: bool,
}

fn read_reference(sec: &Section) -> Res<Option<ProfileFn>> {
    Ok(match sec.opt_str("reference")? {
        Some(src) => Some(profile(sec.expr("reference", src, &["t"])?)),
        None => None,
    })
}

fn read_model(root: &toml::Table) -> Res<ModelChoice> {
    let sec = section(root, "model")?;
    if !sec.present() {
        return Err(ConfigError::at("model", "missing required section"));
    }
    let preset = sec.req_str("preset")?;
    let choice = match preset {
        "paper-sec5" | "paper-sec5-semilinear" => {
            let reference = read_reference(&sec)?;
            let law = sec.opt_str("law")?.unwrap_or("stabilize");
            let (law, scenario, reference) = match law {
                "stabilize" => {
                    if reference.is_some() {
                        return Err(ConfigError::at("model.reference", "only used with law = \"track\""));
                    }
                    (Law::Stabilize, Scenario::Stabilization, None)
                }
                "track" => {
                    let r: ProfileFn = reference.unwrap_or_else(|| Arc::new(presets::default_reference));
                    (Law::Track(r.clone()), Scenario::Tracking, Some(r))
                }
                other => {
                    return Err(ConfigError::at(
                        "model.law",
                        format!("unknown law `{other}` (expected \"stabilize\" or \"track\")"),
                    ))
                }
            };
            let model = if preset == "paper-sec5" {
                presets::paper_sec5(law)
            } else {
                presets::paper_sec5_semilinear(law)
            };
            ModelChoice {
                name: preset.into(),
                model,
                scenario,
                reference,
                kink_at_half: true,
            }
        }
        "zero" | "advection" => ModelChoice {
            name: preset.into(),
            model: presets::by_name(preset).expect("preset exists"),
            scenario: Scenario::Stabilization,
            reference: None,
            kink_at_half: false,
        },
        "inline" => read_inline_model(&sec)?,
        other => {
            return Err(ConfigError::at(
                "model.preset",
                format!(
                    "unknown preset `{other}` (expected paper-sec5, paper-sec5-semilinear, zero, advection or inline)"
                ),
            ))
        }
    };
    sec.finish()?;
    Ok(choice)
}

fn read_inline_model(sec: &Section) -> Res<ModelChoice> {
    let kind = match sec.req_str("kind")? {
        "semilinear" => ModelKind::Semilinear,
        "quasilinear" => ModelKind::Quasilinear,
        other => {
            return Err(ConfigError::at(
                "model.kind",
                format!("unknown kind `{other}` (expected \"semilinear\" or \"quasilinear\")"),
            ))
        }
    };
    let n = sec.opt_usize("n")?.unwrap_or(1);
    if n == 0 {
        return Err(ConfigError::at("model.n", "ODE dimension must be at least 1"));
    }
    let field_vars = ["x", "u", "v"];
    let field = |k: &str, default: &str| -> Res<Arc<Expr>> {
        let src = sec.opt_str(k)?.unwrap_or(default);
        Ok(Arc::new(sec.expr(k, src, &field_vars)?))
    };
    let lu = field("lambda_u", "1")?;
    let lv = field("lambda_v", "1")?;
    let fu = field("f_u", "0")?;
    let fv = field("f_v", "0")?;

    let xs = state_vars(n);
    let mut ode_vars: Vec<&str> = xs.iter().map(String::as_str).collect();
    ode_vars.extend(["v0", "t"]);
    let f0_src = sec.opt_str_array("f0")?.unwrap_or_else(|| vec!["0"; n]);
    if f0_src.len() != n {
        return Err(ConfigError::at(
            "model.f0",
            format!("expected {n} expression(s), found {}", f0_src.len()),
        ));
    }
    let f0: Vec<Expr> = f0_src
        .iter()
        .map(|s| sec.expr("f0", s, &ode_vars))
        .collect::<Res<_>>()?;
    let g0 = Arc::new(sec.expr("g0", sec.opt_str("g0")?.unwrap_or("0"), &ode_vars)?);

    let mut k_vars: Vec<&str> = xs.iter().map(String::as_str).collect();
    k_vars.extend(["t", "Xref"]);
    let k = Arc::new(sec.expr("K", sec.opt_str("K")?.unwrap_or("0"), &k_vars)?);
    let reference = read_reference(sec)?;
    let xref_slot = k_vars.len() - 1;
    let tracking = k.uses(xref_slot);
    if tracking && reference.is_none() {
        return Err(ConfigError::at("model.reference", "required when `model.K` uses Xref"));
    }
    let reference = if tracking { reference } else { None };
    if kind == ModelKind::Semilinear && [&lu, &lv].iter().any(|e| e.uses(1) || e.uses(2)) {
        return Err(ConfigError::at(
            "model.kind",
            "semilinear models need speeds that do not depend on u or v",
        ));
    }

    let r = reference.clone();
    let model = SystemModel::builder(kind, n)
        .lambda_u(move |x, u, v| lu.eval(&[x, u, v]))
        .lambda_v(move |x, u, v| lv.eval(&[x, u, v]))
        .f_u(move |x, u, v| fu.eval(&[x, u, v]))
        .f_v(move |x, u, v| fv.eval(&[x, u, v]))
        .f0(move |x, v0, t, out| {
            let a = state_args(x, &[v0, t]);
            for (o, e) in out.iter_mut().zip(&f0) {
                *o = e.eval(&a);
            }
        })
        .g0(move |x, v0, t| g0.eval(&state_args(x, &[v0, t])))
        .feedback(move |x, t| {
            let xr = r.as_ref().map_or(0.0, |f| f(t));
            k.eval(&state_args(x, &[t, xr]))
        })
        .build();
    Ok(ModelChoice {
        name: "inline".into(),
        model,
        scenario: if tracking {
            Scenario::Tracking
        } else {
            Scenario::Stabilization
        },
        reference,
        kink_at_half: false,
    })
}

fn read_initial(root: &toml::Table, model: &SystemModel) -> Res<InitialData> {
    let sec = section(root, "initial")?;
    if !sec.present() {
        return Err(ConfigError::at("initial", "missing required section"));
    }
    let n = model.n();
    let init = if let Some(p) = sec.opt_str("preset")? {
        for k in ["u0", "v0", "X0"] {
            if sec.get(k).is_some() {
                return Err(ConfigError::at(sec.key(k), "cannot be combined with `initial.preset`"));
            }
        }
        let init = match p {
            "paper-sec5" => presets::paper_sec5_initial(),
            "paper-sec5-small" => presets::paper_sec5_small_initial().init,
            "zero" => InitialData::zero(n),
            other => {
                return Err(ConfigError::at(
                    "initial.preset",
                    format!("unknown preset `{other}` (expected paper-sec5, paper-sec5-small or zero)"),
                ))
            }
        };
        if init.x0.len() != n {
            return Err(ConfigError::at(
                "initial.preset",
                format!("data has X of dimension {}, model expects {n}", init.x0.len()),
            ));
        }
        init
    } else {
        let u0 = sec.expr("u0", sec.req_str("u0")?, &["x"])?;
        let v0 = sec.expr("v0", sec.req_str("v0")?, &["x"])?;
        let x0 = sec.opt_f64_array("X0")?.ok_or_else(|| sec.missing("X0"))?;
        if x0.len() != n {
            return Err(ConfigError::at(
                "initial.X0",
                format!("expected {n} value(s), found {}", x0.len()),
            ));
        }
        InitialData {
            u0: profile(u0),
            v0: profile(v0),
            x0,
        }
    };
    sec.finish()?;
    Ok(init)
}

fn positive(key: &str, x: f64) -> Res<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(ConfigError::at(key, format!("must be positive, got {x}")))
    }
}

/// Parses and resolves a config document.
pub fn parse(text: &str, ov: &Overrides) -> Res<ScenarioConfig> {
    let root: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        key: None,
        message: format!("invalid TOML: {}", e.message()),
    })?;
    const SECTIONS: [&str; 8] = [
        "model",
        "initial",
        "grid",
        "time",
        "input",
        "controller",
        "observer",
        "output",
    ];
    if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(ConfigError::at(k.as_str(), "unknown section"));
    }

    let m = read_model(&root)?;
    let initial = read_initial(&root, &m.model)?;

    let grid = section(&root, "grid")?;
    let file_n = grid.opt_usize("N")?;
    let grid_n = match ov.grid_n.or(file_n) {
        Some(n) => n,
        None => return Err(grid.missing("N")),
    };
    if grid_n < 2 {
        return Err(ConfigError::at(
            "grid.N",
            format!("need at least 2 cells, got {grid_n}"),
        ));
    }
    if m.kink_at_half && grid_n % 2 != 0 {
        return Err(ConfigError::at(
            "grid.N",
            format!("must be even for `{}` so that x = 0.5 is a node, got {grid_n}", m.name),
        ));
    }
    let cfl = grid.opt_f64("cfl")?.unwrap_or(0.8);
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(ConfigError::at("grid.cfl", format!("must lie in (0, 1], got {cfl}")));
    }
    grid.finish()?;

    let time = section(&root, "time")?;
    let file_t = time.opt_f64("t_end")?;
    let t_end = positive("time.t_end", ov.t_end.or(file_t).ok_or_else(|| time.missing("t_end"))?)?;
    let snapshot_dt = positive("time.snapshot_dt", time.opt_f64("snapshot_dt")?.unwrap_or(0.05))?;
    time.finish()?;

    let ctl = section(&root, "controller")?;
    let kind = match ctl.opt_str("kind")?.unwrap_or("none") {
        "none" => ControllerKind::None,
        "semilinear" => ControllerKind::Semilinear,
        "quasilinear" => ControllerKind::Quasilinear,
        other => {
            return Err(ConfigError::at(
                "controller.kind",
                format!("unknown controller `{other}` (expected none, semilinear or quasilinear)"),
            ))
        }
    };
    if kind == ControllerKind::Semilinear && m.model.kind() != ModelKind::Semilinear {
        return Err(ConfigError::at(
            "controller.kind",
            format!(
                "the semilinear controller needs a semilinear model; `{}` is quasilinear",
                m.name
            ),
        ));
    }
    let (theta, delta) = if kind == ControllerKind::Quasilinear {
        let theta = positive("controller.theta", ctl.opt_f64("theta")?.unwrap_or(0.5))?;
        let delta = positive("controller.delta", ctl.opt_f64("delta")?.unwrap_or(1.0))?;
        let ratio = theta / snapshot_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 0.5 {
            return Err(ConfigError::at(
                "controller.theta",
                format!("must be a multiple of time.snapshot_dt = {snapshot_dt}"),
            ));
        }
        (theta, delta)
    } else {
        for k in ["theta", "delta"] {
            if ctl.get(k).is_some() {
                return Err(ConfigError::at(ctl.key(k), "only used by the quasilinear controller"));
            }
        }
        (0.5, 1.0)
    };
    ctl.finish()?;
    let controller = ControllerSpec { kind, theta, delta };

    let input_sec = section(&root, "input")?;
    let input = match input_sec.opt_str("U")? {
        Some(src) => {
            if kind != ControllerKind::None {
                return Err(ConfigError::at(
                    "input.U",
                    "only used when `controller.kind` is \"none\"",
                ));
            }
            Some(profile(input_sec.expr("U", src, &["t"])?))
        }
        None => None,
    };
    input_sec.finish()?;

    let observer = read_observer(&root, &m.model, kind)?;

    let out = section(&root, "output")?;
    let dir = out.opt_str("dir")?.unwrap_or("out");
    let plots = out.opt_bool("plots")?.unwrap_or(true) && !ov.no_plots;
    out.finish()?;
    let out_dir = ov.out_dir.clone().unwrap_or_else(|| PathBuf::from(dir));

    Ok(ScenarioConfig {
        model_name: m.name,
        model: m.model,
        scenario: m.scenario,
        reference: m.reference,
        initial,
        grid_n,
        cfl,
        t_end,
        snapshot_dt,
        input,
        controller,
        observer,
        out_dir,
        plots,
    })
}

fn read_observer(root: &toml::Table, model: &SystemModel, controller: ControllerKind) -> Res<Option<ObserverSpec>> {
    let sec = section(root, "observer")?;
    let kind = sec.opt_str("kind")?.unwrap_or("none");
    let wanted = match kind {
        "none" => {
            sec.finish()?;
            return Ok(None);
        }
        "semilinear" => ModelKind::Semilinear,
        "quasilinear" => ModelKind::Quasilinear,
        other => {
            return Err(ConfigError::at(
                "observer.kind",
                format!("unknown observer `{other}` (expected none, semilinear or quasilinear)"),
            ))
        }
    };
    if wanted != model.kind() {
        return Err(ConfigError::at(
            "observer.kind",
            format!("does not match the model kind ({:?})", model.kind()),
        ));
    }
    let n = model.n();
    let guess_v = sec.opt_f64("guess_v")?.unwrap_or(0.0);
    let guess_x = sec.opt_f64_array("guess_X")?.unwrap_or_else(|| vec![0.0; n]);
    if guess_x.len() != n {
        return Err(ConfigError::at(
            "observer.guess_X",
            format!("expected {n} value(s), found {}", guess_x.len()),
        ));
    }
    let ode = match sec.opt_str("ode")?.unwrap_or("algebraic") {
        "algebraic" => {
            for k in ["h", "horizon"] {
                if sec.get(k).is_some() {
                    return Err(ConfigError::at(sec.key(k), "only used with ode = \"dynamic\""));
                }
            }
            OdeSpec::Algebraic
        }
        "dynamic" => {
            let xs = state_vars(n);
            let mut vars: Vec<&str> = xs.iter().map(String::as_str).collect();
            vars.extend(["u0", "v0", "t"]);
            let src = sec.opt_str_array("h")?.ok_or_else(|| sec.missing("h"))?;
            if src.len() != n {
                return Err(ConfigError::at(
                    "observer.h",
                    format!("expected {n} expression(s), found {}", src.len()),
                ));
            }
            let h = src
                .iter()
                .map(|s| sec.expr("h", s, &vars).map(Arc::new))
                .collect::<Res<Vec<_>>>()?;
            let horizon = match sec.opt_f64("horizon")? {
                Some(x) => Some(positive("observer.horizon", x)?),
                None => None,
            };
            OdeSpec::Dynamic { h, horizon }
        }
        other => {
            return Err(ConfigError::at(
                "observer.ode",
                format!("unknown ODE observer `{other}` (expected algebraic or dynamic)"),
            ))
        }
    };
    let replay = sec.opt_str("replay")?.map(PathBuf::from);
    if replay.is_some() && controller != ControllerKind::None {
        return Err(ConfigError::at(
            "observer.replay",
            "replay runs the observer alone; set `controller.kind = \"none\"`",
        ));
    }
    let engage_at = match (sec.opt_f64("engage_at")?, controller) {
        (Some(t), ControllerKind::None) => {
            let _ = t;
            return Err(ConfigError::at(
                "observer.engage_at",
                "only used together with a controller",
            ));
        }
        (Some(t), _) if t >= 0.0 => t,
        (Some(t), _) => {
            return Err(ConfigError::at(
                "observer.engage_at",
                format!("must be non-negative, got {t}"),
            ))
        }
        (None, ControllerKind::None) => 0.0,
        (None, _) => return Err(sec.missing("engage_at")),
    };
    sec.finish()?;
    Ok(Some(ObserverSpec {
        guess_v,
        guess_x,
        ode,
        engage_at,
        replay,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
preset = "zero"
[initial]
preset = "zero"
[grid]
N = 20
[time]
t_end = 1.0
"#;

    fn err(text: &str) -> ConfigError {
        parse(text, &Overrides::default()).unwrap_err()
    }

    #[test]
    fn minimal_config_has_defaults() {
        let c = parse(MINIMAL, &Overrides::default()).unwrap();
        assert_eq!(c.grid_n, 20);
        assert_eq!(c.cfl, 0.8);
        assert_eq!(c.snapshot_dt, 0.05);
        assert_eq!(c.controller.kind, ControllerKind::None);
        assert!(c.observer.is_none() && c.input.is_none() && c.plots);
        assert_eq!(c.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn missing_grid_n_is_named() {
        let e = err(&MINIMAL.replace("N = 20", ""));
        assert_eq!(e.key.as_deref(), Some("grid.N"));
        assert!(e.to_string().contains("grid.N"));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert_eq!(
            err(&MINIMAL.replace("N = 20", "N = 20\nM = 3")).key.as_deref(),
            Some("grid.M")
        );
        assert_eq!(err(&format!("{MINIMAL}\n[extra]\na = 1")).key.as_deref(), Some("extra"));
    }

    #[test]
    fn overrides_replace_file_values() {
        let ov = Overrides {
            grid_n: Some(8),
            t_end: Some(3.0),
            no_plots: true,
            out_dir: Some("elsewhere".into()),
        };
        let c = parse(&MINIMAL.replace("N = 20", ""), &ov).unwrap();
        assert_eq!((c.grid_n, c.t_end, c.plots), (8, 3.0, false));
        assert_eq!(c.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn kinked_preset_needs_even_n() {
        let text = MINIMAL
            .replace("preset = \"zero\"\n[initial]", "preset = \"paper-sec5\"\n[initial]")
            .replace("N = 20", "N = 21");
        let e = err(&text);
        assert_eq!(e.key.as_deref(), Some("grid.N"));
    }

    #[test]
    fn bad_expression_is_reported_at_its_key() {
        let text = MINIMAL.replace(
            "[initial]\npreset = \"zero\"",
            "[initial]\nu0 = \"sin(y)\"\nv0 = \"0\"\nX0 = [0.0]",
        );
        let e = err(&text);
        assert_eq!(e.key.as_deref(), Some("initial.u0"));
        assert!(e.message.contains("unknown name `y`"), "{e}");
    }

    #[test]
    fn inline_model_matches_the_preset() {
        let text = r#"
[model]
preset = "inline"
kind = "quasilinear"
lambda_u = "piecewise(x < 0.5, 0.5, x)"
lambda_v = "1 + 0.5*(abs(u) + abs(v))"
f_u = "sin(u + v)"
f_v = "sin(v - u)"
f0 = ["X*abs(X) + v0"]
g0 = "X + v0"
K = "-X*abs(X) - X"
[initial]
preset = "paper-sec5"
[grid]
N = 10
[time]
t_end = 1.0
"#;
        let c = parse(text, &Overrides::default()).unwrap();
        let p = presets::paper_sec5(Law::Stabilize);
        for &(x, u, v) in &[(0.1, 0.3, -0.2), (0.7, -1.0, 2.0)] {
            assert_eq!(c.model.lambda_u(x, u, v), p.lambda_u(x, u, v));
            assert_eq!(c.model.lambda_v(x, u, v), p.lambda_v(x, u, v));
            assert_eq!(c.model.f_u(x, u, v), p.f_u(x, u, v));
            assert_eq!(c.model.f_v(x, u, v), p.f_v(x, u, v));
        }
        let (mut a, mut b) = ([0.0], [0.0]);
        c.model.f0(&[-0.7], 0.2, 0.0, &mut a);
        p.f0(&[-0.7], 0.2, 0.0, &mut b);
        assert_eq!(a, b);
        assert_eq!(c.model.g0(&[0.4], 0.1, 0.0), p.g0(&[0.4], 0.1, 0.0));
        assert_eq!(c.model.feedback(&[0.4], 0.0), p.feedback(&[0.4], 0.0));
    }

    #[test]
    fn tracking_law_needs_a_reference_inline() {
        let text = MINIMAL.replace(
            "preset = \"zero\"\n[initial]",
            "preset = \"inline\"\nkind = \"semilinear\"\nK = \"Xref - X\"\n[initial]",
        );
        assert_eq!(err(&text).key.as_deref(), Some("model.reference"));
    }

    #[test]
    fn controller_must_fit_the_model() {
        let text = MINIMAL
            .replace("preset = \"zero\"\n[initial]", "preset = \"paper-sec5\"\n[initial]")
            .replace("t_end = 1.0", "t_end = 1.0\n[controller]\nkind = \"semilinear\"");
        assert_eq!(err(&text).key.as_deref(), Some("controller.kind"));
        let text = MINIMAL.replace(
            "t_end = 1.0",
            "t_end = 1.0\n[controller]\nkind = \"quasilinear\"\ntheta = 0.33",
        );
        assert_eq!(err(&text).key.as_deref(), Some("controller.theta"));
    }

    #[test]
    fn output_feedback_needs_an_engage_time() {
        let text = MINIMAL.replace(
            "t_end = 1.0",
            "t_end = 1.0\n[controller]\nkind = \"semilinear\"\n[observer]\nkind = \"semilinear\"",
        );
        assert_eq!(err(&text).key.as_deref(), Some("observer.engage_at"));
    }
}
