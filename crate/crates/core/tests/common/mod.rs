//! Oracles shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use hyperpred_core::observer::{Observer, ObserverGuess, ObserverState};
use hyperpred_core::predictor::{predict_determinate, PredictOptions};
use hyperpred_core::presets::CompatibleData;
use hyperpred_core::simulator::{Plant, PlantState};
use hyperpred_core::{Grid, SystemModel};

/// Every plant step of a run, for interpolation in space and time.
pub struct History {
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl History {
    pub fn new(state: &PlantState, input: f64) -> Self {
        Self {
            t: vec![state.t],
            u: vec![state.u.clone()],
            v: vec![state.v.clone()],
            x: vec![state.x.clone()],
            input: vec![input],
        }
    }

    pub fn push(&mut self, plant: &Plant, input: f64) {
        self.t.push(plant.t());
        self.u.push(plant.u().to_vec());
        self.v.push(plant.v().to_vec());
        self.x.push(plant.x().to_vec());
        self.input.push(input);
    }

    fn bracket(&self, s: f64) -> (usize, f64) {
        let k = self.t.partition_point(|&a| a <= s).clamp(1, self.t.len() - 1) - 1;
        let w = ((s - self.t[k]) / (self.t[k + 1] - self.t[k])).clamp(0.0, 1.0);
        (k, w)
    }

    fn field(&self, f: &[Vec<f64>], x: f64, s: f64) -> f64 {
        let (k, w) = self.bracket(s);
        let n = f[0].len() - 1;
        let r = (x * n as f64).clamp(0.0, n as f64);
        let i = (r as usize).min(n - 1);
        let a = r - i as f64;
        let g = |row: &Vec<f64>| row[i] + a * (row[i + 1] - row[i]);
        g(&f[k]) + w * (g(&f[k + 1]) - g(&f[k]))
    }

    pub fn u_at(&self, x: f64, s: f64) -> f64 {
        self.field(&self.u, x, s)
    }

    pub fn v_at(&self, x: f64, s: f64) -> f64 {
        self.field(&self.v, x, s)
    }

    pub fn x_at(&self, s: f64) -> Vec<f64> {
        let (k, w) = self.bracket(s);
        self.x[k]
            .iter()
            .zip(&self.x[k + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// Node values at the step closest to `t`.
    pub fn state_near(&self, t: f64) -> PlantState {
        let k = self.t.partition_point(|&a| a < t - 1e-12).min(self.t.len() - 1);
        PlantState {
            t: self.t[k],
            u: self.u[k].clone(),
            v: self.v[k].clone(),
            x: self.x[k].clone(),
        }
    }
}

/// The recorded truth along the measurement characteristic ending at
/// `(1, t)`: `(τ̌ᵘ(t;x_i), u, v)` at the nodes and `X(τ̌ᵘ(t;0))`. `None`
/// while the curve still reaches back before the recorded start.
pub struct CurveTruth {
    pub tau: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
}

pub fn truth_on_measurement_curve(model: &SystemModel, hist: &History, t: f64, n: usize) -> Option<CurveTruth> {
    let dx = 1.0 / n as f64;
    let sub = 8;
    let h = -dx / sub as f64;
    let rate = |x: f64, s: f64| 1.0 / model.lambda_u(x, hist.u_at(x, s), hist.v_at(x, s));
    let mut tau = vec![0.0; n + 1];
    tau[n] = t;
    let mut s = t;
    for i in (0..n).rev() {
        for m in 0..sub {
            let x = (i + 1) as f64 * dx + m as f64 * h;
            let k1 = rate(x, s);
            let k2 = rate(x + 0.5 * h, s + 0.5 * h * k1);
            let k3 = rate(x + 0.5 * h, s + 0.5 * h * k2);
            let k4 = rate(x + h, s + h * k3);
            s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        tau[i] = s;
    }
    if tau[0] < hist.t[0] {
        return None;
    }
    let u = (0..=n).map(|i| hist.u_at(i as f64 * dx, tau[i])).collect();
    let v = (0..=n).map(|i| hist.v_at(i as f64 * dx, tau[i])).collect();
    let x = hist.x_at(tau[0]);
    Some(CurveTruth { tau, u, v, x })
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Combined errors of the curve estimates and of the current-state estimate.
#[derive(Debug, Clone, Copy)]
pub struct ObserverError {
    pub t: f64,
    pub curve: f64,
    pub current: f64,
}

pub fn observer_error(
    model: &SystemModel,
    observer: &Observer,
    hist: &History,
    obs: &ObserverState,
) -> Option<ObserverError> {
    let n = obs.u.len() - 1;
    let truth = truth_on_measurement_curve(model, hist, obs.t, n)?;
    let curve = sup_diff(&obs.u, &truth.u).max(sup_diff(&obs.v, &truth.v)) + sup_diff(&obs.x, &truth.x);
    let est = observer.estimate_current(obs).ok()?;
    let now = hist.state_near(obs.t);
    let current = sup_diff(&est.u, &now.u).max(sup_diff(&est.v, &now.v)) + sup_diff(&est.x, &now.x);
    Some(ObserverError {
        t: obs.t,
        curve,
        current,
    })
}

/// Runs the plant under `input` while feeding the observer with
/// `(Y, U)` after every step. Returns the history and the observer states.
pub fn observe_run(
    model: &SystemModel,
    observer: &Observer,
    state: &PlantState,
    guess: &ObserverGuess,
    input: &dyn Fn(f64) -> f64,
    t_end: f64,
) -> (History, Vec<ObserverState>) {
    let n = state.u.len() - 1;
    let mut hist = History::new(state, input(state.t));
    let mut obs = observer.init(state.t, guess, state.u[n], input(state.t)).unwrap();
    let mut states = vec![obs.clone()];
    let mut plant = Plant::new(model, state, 0.8).unwrap();
    plant.advance_to(t_end, input, &mut |p| {
        let u = input(p.t());
        hist.push(p, u);
        obs = observer.step(&obs, *p.u().last().unwrap(), u, p.t() - obs.t).unwrap();
        states.push(obs.clone());
    });
    assert!(plant.blowup().is_none(), "truth blew up");
    (hist, states)
}

/// Forward simulation sampled where it crosses a leftward characteristic:
/// `u`, `v` at `(x_i, tau[i])` for the coarse nodes and `X(tau0)`. `state`
/// lives on a grid `r` times finer than `tau`.
pub fn forward_on_curve(
    model: &SystemModel,
    state: &PlantState,
    r: usize,
    tau: &[f64],
    tau0: f64,
    input: &dyn Fn(f64) -> f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = tau.len() - 1;
    let mut hit_u = vec![f64::NAN; n + 1];
    let mut hit_v = vec![f64::NAN; n + 1];
    let mut hit_x = f64::NAN;
    let mut prev = state.clone();
    let mut plant = Plant::new(model, state, 0.8).unwrap();
    plant.advance_to(tau0 + 0.01, input, &mut |p| {
        let t1 = p.t();
        for i in 0..=n {
            if prev.t < tau[i] && t1 >= tau[i] {
                let w = (tau[i] - prev.t) / (t1 - prev.t);
                hit_u[i] = prev.u[i * r] + w * (p.u()[i * r] - prev.u[i * r]);
                hit_v[i] = prev.v[i * r] + w * (p.v()[i * r] - prev.v[i * r]);
            }
        }
        if prev.t < tau0 && t1 >= tau0 {
            let w = (tau0 - prev.t) / (t1 - prev.t);
            hit_x = prev.x[0] + w * (p.x()[0] - prev.x[0]);
        }
        prev = p.state();
    });
    assert!(plant.blowup().is_none(), "forward run blew up");
    // the node at x = 1 sits on the initial time line
    hit_u[n] = state.u[n * r];
    hit_v[n] = state.v[n * r];
    (hit_u, hit_v, hit_x)
}

/// Prediction errors on the characteristic `x ↦ τᵛ(0;x)` against a forward
/// simulation on a refined grid whose nodes contain the coarse ones:
/// `(max |ū - u|, max |v̄ - v|, |X̄(τ₀) - X(τ₀)|)`.
pub fn prediction_error(model: &SystemModel, data: &CompatibleData, n: usize, n_ref: usize) -> (f64, f64, f64) {
    assert_eq!(n_ref % n, 0);
    let grid = Grid::new(n).unwrap();
    let state = PlantState::initial(&data.init, &grid);
    let pred = predict_determinate(model, &state, &PredictOptions::default()).unwrap();
    let fine = PlantState::initial(&data.init, &Grid::new(n_ref).unwrap());
    let input = |s: f64| data.input(s);
    let (hu, hv, hx) = forward_on_curve(model, &fine, n_ref / n, pred.curve.s(), pred.tau0(), &input);
    (
        sup_diff(&hu, &pred.u_bar),
        sup_diff(&hv, &pred.v_bar),
        (hx - pred.x_foot()[0]).abs(),
    )
}

/// Max error of the open-loop solver against the closed form for unit-speed
/// advection with `u₀ = sin²(πx)`, `v₀ = cos(πx)`, `U(t) = -cos(πt)`.
pub fn advection_error(n: usize, t_end: f64) -> f64 {
    use std::f64::consts::PI;
    let model = hyperpred_core::presets::advection();
    let grid = Grid::new(n).unwrap();
    let init = hyperpred_core::InitialData::new(|x| (PI * x).sin().powi(2), |x| (PI * x).cos(), vec![0.0]);
    let traj =
        hyperpred_core::simulator::simulate(&model, &init, &grid, &|t| -(PI * t).cos(), t_end, &Default::default())
            .unwrap();
    let s = traj.last();
    let u_exact = |y: f64| if y <= 0.0 { 0.0 } else { (PI * y).sin().powi(2) };
    (0..=n)
        .map(|i| {
            let x = grid.x(i);
            (s.u[i] - u_exact(x - s.t))
                .abs()
                .max((s.v[i] - (PI * (x + s.t)).cos()).abs())
        })
        .fold(0.0, f64::max)
}
