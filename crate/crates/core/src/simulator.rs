//! Method-of-lines plant solver and blow-up detection.

use alloc::vec;
use alloc::vec::Vec;

use crate::kernel::{Column, Kernel, RightEdge};
use crate::model::{Grid, InitialData, SystemModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
}

impl PlantState {
    pub fn initial(init: &InitialData, grid: &Grid) -> Self {
        Self {
            t: 0.0,
            u: grid.sample(&*init.u0),
            v: grid.sample(&*init.v0),
            x: init.x0.clone(),
        }
    }

    pub fn zero(grid: &Grid, n: usize) -> Self {
        Self {
            t: 0.0,
            u: vec![0.0; grid.len()],
            v: vec![0.0; grid.len()],
            x: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.u.len() - 1).expect("state has at least 3 nodes")
    }

    /// `max(‖u‖∞, ‖v‖∞)`.
    pub fn norm_w(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, z| m.max(z.abs()))
    }

    pub fn norm_x(&self) -> f64 {
        self.x.iter().fold(0.0, |m, z| m.max(z.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).chain(&self.x).all(|z| z.is_finite())
    }

    pub(crate) fn to_column(&self) -> Column {
        Column {
            s: self.t,
            xb: 1.0,
            u: self.u.clone(),
            v: self.v.clone(),
            x: self.x.clone(),
        }
    }

    pub(crate) fn from_column(col: &Column) -> Self {
        Self {
            t: col.s,
            u: col.u.clone(),
            v: col.v.clone(),
            x: col.x.clone(),
        }
    }
}

/// Piecewise-linear input on `[a, b]` from uniformly spaced samples.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSegment {
    a: f64,
    b: f64,
    samples: Vec<f64>,
}

impl InputSegment {
    pub fn new(a: f64, b: f64, samples: Vec<f64>) -> Result<Self> {
        if !(b > a) || samples.len() < 2 {
            return Err(Error::InvalidArgument(
                "input segment needs b > a and two samples".into(),
            ));
        }
        if let Some(bad) = samples.iter().find(|z| !z.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "input sample {bad} is not finite"
            )));
        }
        Ok(Self { a, b, samples })
    }

    /// Samples `f` at `count + 1` uniform times.
    pub fn from_fn(a: f64, b: f64, count: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let count = count.max(1);
        let samples = (0..=count).map(|k| f(a + (b - a) * k as f64 / count as f64)).collect();
        Self::new(a, b, samples)
    }

    pub fn constant(a: f64, b: f64, value: f64) -> Result<Self> {
        Self::new(a, b, vec![value, value])
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Linear interpolation; constant extrapolation outside `[a, b]`.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.samples.len() - 1;
        let r = (t - self.a) / (self.b - self.a) * n as f64;
        if !(r > 0.0) {
            return self.samples[0];
        }
        if r >= n as f64 {
            return self.samples[n];
        }
        let k = r as usize;
        let w = r - k as f64;
        self.samples[k] + w * (self.samples[k + 1] - self.samples[k])
    }

    /// Slope of the linear piece containing `t`.
    pub fn rate(&self, t: f64) -> f64 {
        let n = self.samples.len() - 1;
        let h = (self.b - self.a) / n as f64;
        let k = (((t - self.a) / h).max(0.0) as usize).min(n - 1);
        (self.samples[k + 1] - self.samples[k]) / h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowupTrigger {
    NonFinite,
    /// State or ODE norm above the threshold.
    Norm,
    /// Finite-difference gradient above the threshold.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupRecord {
    pub t: f64,
    pub trigger: BlowupTrigger,
}

pub const NORM_LIMIT: f64 = 1e3;
pub const GRADIENT_LIMIT: f64 = 1e4;

/// Flags non-finite entries, `max(‖w‖∞, |X|) > 1e3`, or a finite-difference
/// gradient of `u` or `v` above `1e4`.
pub fn detect_blowup(state: &PlantState) -> Option<BlowupRecord> {
    let record = |trigger| Some(BlowupRecord { t: state.t, trigger });
    if !state.is_finite() {
        return record(BlowupTrigger::NonFinite);
    }
    if state.norm_w().max(state.norm_x()) > NORM_LIMIT {
        return record(BlowupTrigger::Norm);
    }
    let dx = 1.0 / (state.u.len() - 1) as f64;
    let steep = |w: &[f64]| w.windows(2).any(|p| ((p[1] - p[0]) / dx).abs() > GRADIENT_LIMIT);
    if steep(&state.u) || steep(&state.v) {
        return record(BlowupTrigger::Gradient);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub cfl: f64,
    pub snapshot_dt: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            cfl: 0.8,
            snapshot_dt: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub snapshots: Vec<PlantState>,
    /// Applied input at each snapshot time.
    pub inputs: Vec<f64>,
    pub blowup: Option<BlowupRecord>,
}

impl Trajectory {
    pub fn last(&self) -> &PlantState {
        self.snapshots.last().expect("trajectory has the initial snapshot")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.snapshots.iter().map(|s| s.t)
    }
}

/// The plant advanced step by step; the closed loop and the observers drive
/// it through [`Plant::advance_to`].
pub struct Plant<'a> {
    model: &'a SystemModel,
    cfl: f64,
    col: Column,
    blowup: Option<BlowupRecord>,
}

impl<'a> Plant<'a> {
    pub fn new(model: &'a SystemModel, state: &PlantState, cfl: f64) -> Result<Self> {
        if state.x.len() != model.n() {
            return Err(Error::InvalidArgument("X has the wrong dimension".into()));
        }
        if state.u.len() != state.v.len() || state.u.len() < 3 {
            return Err(Error::InvalidArgument("state arrays must match a grid".into()));
        }
        Ok(Self {
            model,
            cfl,
            col: state.to_column(),
            blowup: None,
        })
    }

    pub fn t(&self) -> f64 {
        self.col.s
    }

    pub fn state(&self) -> PlantState {
        PlantState::from_column(&self.col)
    }

    pub fn u(&self) -> &[f64] {
        &self.col.u
    }

    pub fn v(&self) -> &[f64] {
        &self.col.v
    }

    pub fn x(&self) -> &[f64] {
        &self.col.x
    }

    pub fn blowup(&self) -> Option<BlowupRecord> {
        self.blowup
    }

    /// Step size the next call would use.
    pub fn stable_dt(&self) -> f64 {
        Kernel::new(self.model, self.cfl, RightEdge::Inflow(&|_| 0.0)).stable_dt(&self.col)
    }

    /// Advances to `t_end` (clipping the last step), stopping early on
    /// blow-up. `on_step` sees the plant after every step.
    pub fn advance_to(
        &mut self,
        t_end: f64,
        input: &dyn Fn(f64) -> f64,
        on_step: &mut dyn FnMut(&Plant<'a>),
    ) -> Option<BlowupRecord> {
        if self.blowup.is_some() {
            return self.blowup;
        }
        let mut kernel = Kernel::new(self.model, self.cfl, RightEdge::Inflow(input));
        let eps = 1e-12 * (1.0 + t_end.abs());
        while self.col.s < t_end - eps {
            let dt = kernel.stable_dt(&self.col).min(t_end - self.col.s);
            kernel.step(&mut self.col, dt);
            if t_end - self.col.s <= eps {
                self.col.s = t_end;
            }
            if let Some(rec) = detect_blowup(&PlantState::from_column(&self.col)) {
                self.blowup = Some(rec);
                return self.blowup;
            }
            on_step(self);
        }
        None
    }
}

/// Open-loop simulation under `input` up to `t_end`.
pub fn simulate(
    model: &SystemModel,
    init: &InitialData,
    grid: &Grid,
    input: &dyn Fn(f64) -> f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    simulate_from(model, &PlantState::initial(init, grid), input, t_end, opts)
}

pub fn simulate_from(
    model: &SystemModel,
    state: &PlantState,
    input: &dyn Fn(f64) -> f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if !(opts.snapshot_dt > 0.0) || !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
        return Err(Error::InvalidArgument("need snapshot_dt > 0 and 0 < cfl <= 1".into()));
    }
    let mut plant = Plant::new(model, state, opts.cfl)?;
    let mut traj = Trajectory::default();
    traj.snapshots.push(state.clone());
    traj.inputs.push(input(state.t));
    let t0 = state.t;
    let mut k = 1usize;
    loop {
        let target = (t0 + k as f64 * opts.snapshot_dt).min(t_end);
        if let Some(rec) = plant.advance_to(target, input, &mut |_| {}) {
            traj.blowup = Some(rec);
            let last = plant.state();
            if last.is_finite() {
                traj.inputs.push(input(last.t));
                traj.snapshots.push(last);
            }
            break;
        }
        traj.inputs.push(input(target));
        traj.snapshots.push(plant.state());
        if target >= t_end {
            break;
        }
        k += 1;
    }
    Ok(traj)
}
