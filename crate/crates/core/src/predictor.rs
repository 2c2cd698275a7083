//! Solutions over determinate sets.
//!
//! [`predict_determinate`] marches the plant forward from a state at time `t`
//! on the shrinking interval `[0, x_b(s)]` whose right edge rides the leftward
//! characteristic leaving `x = 1` at `t`. Nothing in that region depends on the
//! input applied after `t`, so no boundary data is needed at the edge.
//!
//! [`predict_interval`] does the opposite sweep for the observer: starting at
//! the foot of a measurement characteristic it marches on an expanding
//! interval whose edge follows that characteristic up to `x = 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::exp;

use crate::characteristics::{CharCurve, Family};
use crate::kernel::{Column, Kernel, RightEdge};
use crate::model::{ModelKind, SystemModel};
use crate::simulator::{PlantState, NORM_LIMIT};
use crate::xode::lerp_nodes;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub cfl: f64,
    /// Record `u_t`, `v_t` and `∂_t τᵛ` on the curve. Defaults to on for
    /// quasilinear models.
    pub derivatives: Option<bool>,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            cfl: 0.8,
            derivatives: None,
        }
    }
}

/// Time derivatives on the curve and the sensitivity of the curve to its
/// base time.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveDerivatives {
    /// `u_t` on the curve.
    pub p: Vec<f64>,
    /// `v_t` on the curve.
    pub q: Vec<f64>,
    /// `∂_t τᵛ(t; x)`.
    pub tau_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub t: f64,
    /// `x ↦ τᵛ(t; x)` on the grid nodes.
    pub curve: CharCurve,
    /// `ū(x, τᵛ(t;x))` on the grid nodes.
    pub u_bar: Vec<f64>,
    /// `v̄(x, τᵛ(t;x))` on the grid nodes.
    pub v_bar: Vec<f64>,
    /// Solver times on `[t, τᵛ(t;0)]` with the left traces recorded there.
    pub s_trace: Vec<f64>,
    pub v0_trace: Vec<f64>,
    pub x_trace: Vec<Vec<f64>>,
    pub derivatives: Option<CurveDerivatives>,
}

impl Prediction {
    /// `τᵛ(t; 0)`.
    pub fn tau0(&self) -> f64 {
        self.curve.at_left()
    }

    /// `X̄(τᵛ(t;0))`.
    pub fn x_foot(&self) -> &[f64] {
        self.x_trace.last().unwrap()
    }

    /// `v̄(0, τᵛ(t;0))`.
    pub fn v_foot(&self) -> f64 {
        *self.v0_trace.last().unwrap()
    }

    fn bracket(&self, s: f64) -> (usize, f64) {
        let n = self.s_trace.len();
        if s <= self.s_trace[0] {
            return (0, 0.0);
        }
        if s >= self.s_trace[n - 1] {
            return (n - 2, 1.0);
        }
        let k = self.s_trace.partition_point(|&a| a <= s) - 1;
        (k, (s - self.s_trace[k]) / (self.s_trace[k + 1] - self.s_trace[k]))
    }

    /// `X̄(s)` by linear interpolation, clamped to `[t, τᵛ(t;0)]`.
    pub fn x_at(&self, s: f64) -> Vec<f64> {
        let (k, w) = self.bracket(s);
        self.x_trace[k]
            .iter()
            .zip(&self.x_trace[k + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// `v̄(0, s)`.
    pub fn v0_at(&self, s: f64) -> f64 {
        let (k, w) = self.bracket(s);
        self.v0_trace[k] + w * (self.v0_trace[k + 1] - self.v0_trace[k])
    }

    /// `ū` on the curve at position `x`.
    pub fn u_bar_at(&self, x: f64) -> f64 {
        lerp_nodes(self.curve.x(), &self.u_bar, x)
    }
}

struct EdgeSample {
    s: f64,
    xb: f64,
    u: f64,
    v: f64,
    p: f64,
    q: f64,
}

/// `(u_t, v_t)` at the right edge of the column from the PDE, with
/// one-sided differences pointing into the column.
fn edge_rates(model: &SystemModel, col: &Column) -> (f64, f64) {
    let m = col.cells();
    let h = col.h();
    let (u, v) = (&col.u, &col.v);
    let x = col.xb;
    let ux = (u[m] - u[m - 1]) / h;
    let vx = (v[m] - v[m - 1]) / h;
    let p = -model.lambda_u(x, u[m], v[m]) * ux + model.f_u(x, u[m], v[m]);
    let q = model.lambda_v(x, u[m], v[m]) * vx + model.f_v(x, u[m], v[m]);
    (p, q)
}

fn sample(model: &SystemModel, col: &Column, derivatives: bool) -> EdgeSample {
    let m = col.cells();
    let (p, q) = if derivatives {
        edge_rates(model, col)
    } else {
        (0.0, 0.0)
    };
    EdgeSample {
        s: col.s,
        xb: col.xb,
        u: col.u[m],
        v: col.v[m],
        p,
        q,
    }
}

fn check_column(col: &Column) -> Result<()> {
    if !col.is_finite() {
        return Err(Error::Prediction(format!("non-finite solution at s = {}", col.s)));
    }
    let norm = col
        .u
        .iter()
        .chain(&col.v)
        .chain(&col.x)
        .fold(0.0f64, |m, z| m.max(z.abs()));
    if norm > NORM_LIMIT {
        return Err(Error::Prediction(format!(
            "solution exceeds {NORM_LIMIT} at s = {}",
            col.s
        )));
    }
    Ok(())
}

/// Smallest integer not below `z`, for positive `z`.
fn ceil_pos(z: f64) -> usize {
    let k = z as usize;
    if (k as f64) < z {
        k + 1
    } else {
        k
    }
}

/// Solves the plant over the determinate set `D(t)` of `state`.
pub fn predict_determinate(model: &SystemModel, state: &PlantState, opts: &PredictOptions) -> Result<Prediction> {
    let n_cells = state.u.len() - 1;
    if n_cells < 2 || state.v.len() != n_cells + 1 || state.x.len() != model.n() {
        return Err(Error::InvalidArgument("state does not match the model".into()));
    }
    let derivatives = opts.derivatives.unwrap_or(model.kind() == ModelKind::Quasilinear);
    let dx = 1.0 / n_cells as f64;
    let mut col = state.to_column();
    check_column(&col)?;
    let mut kernel = Kernel::new(model, opts.cfl, RightEdge::Characteristic);

    let mut edge = vec![sample(model, &col, derivatives)];
    let mut s_trace = vec![col.s];
    let mut v0_trace = vec![col.v[0]];
    let mut x_trace = vec![col.x.clone()];

    let stop = 1e-3 * dx;
    while col.xb > stop {
        let dt = kernel.stable_dt(&col);
        kernel.step(&mut col, dt);
        check_column(&col)?;
        if !(col.xb > 0.0) {
            // Overshoot past x = 0 cannot happen for a CFL-limited step, but
            // guard against degenerate speeds.
            return Err(Error::Prediction(format!("edge left the domain at s = {}", col.s)));
        }
        edge.push(sample(model, &col, derivatives));
        s_trace.push(col.s);
        v0_trace.push(col.v[0]);
        x_trace.push(col.x.clone());
        let m = col.cells();
        if m > 2 && col.h() <= 0.5 * dx {
            col.remesh(ceil_pos(col.xb / dx).max(2));
        }
    }
    // Close the remaining sliver with one Euler step along the edge.
    let m = col.cells();
    let lv = model.lambda_v(0.0, col.u[0], col.v[0]);
    let ds = col.xb / lv;
    let mut rhs = vec![0.0; model.n()];
    model.f0(&col.x, col.v[0], col.s, &mut rhs);
    let s_end = col.s + ds;
    let x_end: Vec<f64> = col.x.iter().zip(&rhs).map(|(a, r)| a + ds * r).collect();
    let v_end = col.v[m] + ds * model.f_v(col.xb, col.u[m], col.v[m]);
    let last = edge.last().unwrap();
    let (p_end, q_end) = (last.p, last.q);
    edge.push(EdgeSample {
        s: s_end,
        xb: 0.0,
        u: model.g0(&x_end, v_end, s_end),
        v: v_end,
        p: p_end,
        q: q_end,
    });
    s_trace.push(s_end);
    v0_trace.push(v_end);
    x_trace.push(x_end);

    // Resample the edge trace at the grid nodes; x_b decreases along it.
    let len = n_cells + 1;
    let mut tau = vec![0.0; len];
    let mut u_bar = vec![0.0; len];
    let mut v_bar = vec![0.0; len];
    let mut p_bar = vec![0.0; len];
    let mut q_bar = vec![0.0; len];
    let mut k = 0usize;
    for i in (0..len).rev() {
        let xi = i as f64 * dx;
        while k + 1 < edge.len() - 1 && edge[k + 1].xb > xi {
            k += 1;
        }
        let (a, b) = (&edge[k], &edge[k + 1]);
        let w = if a.xb > b.xb {
            ((a.xb - xi) / (a.xb - b.xb)).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let mix = |fa: f64, fb: f64| fa + w * (fb - fa);
        tau[i] = mix(a.s, b.s);
        u_bar[i] = mix(a.u, b.u);
        v_bar[i] = mix(a.v, b.v);
        p_bar[i] = mix(a.p, b.p);
        q_bar[i] = mix(a.q, b.q);
    }
    tau[n_cells] = state.t;
    let nodes: Vec<f64> = (0..len).map(|i| i as f64 * dx).collect();
    let curve = CharCurve::from_values(state.t, Family::V, nodes.clone(), tau)?;

    let derivatives = derivatives.then(|| {
        // ∂_x ∂_tτ = κ ∂_tτ with κ = (λᵛ_u u_t + λᵛ_v v_t)/λᵛ², ∂_tτ(1) = 1.
        let kappa: Vec<f64> = (0..len)
            .map(|i| {
                let (a, b) = model.dlambda_v(nodes[i], u_bar[i], v_bar[i]);
                let lv = model.lambda_v(nodes[i], u_bar[i], v_bar[i]);
                (a * p_bar[i] + b * q_bar[i]) / (lv * lv)
            })
            .collect();
        let mut tau_t = vec![1.0; len];
        let mut integral = 0.0;
        for i in (0..n_cells).rev() {
            integral += 0.5 * dx * (kappa[i] + kappa[i + 1]);
            tau_t[i] = exp(-integral);
        }
        CurveDerivatives {
            p: p_bar,
            q: q_bar,
            tau_t,
        }
    });

    Ok(Prediction {
        t: state.t,
        curve,
        u_bar,
        v_bar,
        s_trace,
        v0_trace,
        x_trace,
        derivatives,
    })
}

/// Data on a measurement characteristic ending at `(1, t_now)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveData {
    /// `UBackward` curve; `s(1) = t_now`.
    pub curve: CharCurve,
    /// `u` and `v` at the curve nodes.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `X` at the foot `s(0)`.
    pub x_foot: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalOptions {
    pub cfl: f64,
    /// Do not use the data at `x = 1`; the last node copies its neighbour.
    pub exclude_right_edge: bool,
}

impl Default for IntervalOptions {
    fn default() -> Self {
        Self {
            cfl: 0.8,
            exclude_right_edge: false,
        }
    }
}

/// Marches forward over the region between a measurement characteristic and
/// the line `s = t_now`, returning the state at `t_now` on the curve's nodes.
pub fn predict_interval(model: &SystemModel, data: &CurveData, opts: &IntervalOptions) -> Result<PlantState> {
    let curve = &data.curve;
    if curve.family != Family::UBackward {
        return Err(Error::InvalidArgument(
            "interval prediction needs a measurement curve".into(),
        ));
    }
    let xs = curve.x();
    let n_cells = xs.len() - 1;
    if data.u.len() != xs.len() || data.v.len() != xs.len() || data.x_foot.len() != model.n() {
        return Err(Error::InvalidArgument("curve data does not match the curve".into()));
    }
    let t_now = curve.at_right();
    let dx = 1.0 / n_cells as f64;
    let x_cut = xs[n_cells - 1];
    let exclude = opts.exclude_right_edge;
    let edge_data = |x: f64| -> (f64, f64) {
        let u = lerp_nodes(xs, &data.u, x);
        let v = if exclude && x > x_cut {
            data.v[n_cells - 1]
        } else {
            lerp_nodes(xs, &data.v, x)
        };
        (u, v)
    };

    // Mesh levels N, N/2, N/4, ... while the halving is exact.
    let mut levels = vec![n_cells];
    while levels.last().unwrap() % 2 == 0 && levels.last().unwrap() / 2 >= 2 {
        levels.push(levels.last().unwrap() / 2);
    }
    let mut level = levels.len() - 1;

    // Start on a sliver next to x = 0 with the foot data.
    let x_start = 1e-3 * dx;
    let s_foot = curve.at_left();
    let s_start = curve.eval(x_start);
    let mut x0 = data.x_foot.clone();
    let mut rhs = vec![0.0; model.n()];
    model.f0(&x0, data.v[0], s_foot, &mut rhs);
    for (a, r) in x0.iter_mut().zip(&rhs) {
        *a += (s_start - s_foot) * r;
    }
    let m0 = levels[level];
    let (ue, ve) = edge_data(x_start);
    let mut col = Column {
        s: s_start,
        xb: x_start,
        u: vec![ue; m0 + 1],
        v: vec![ve; m0 + 1],
        x: x0,
    };
    col.u[0] = model.g0(&col.x, col.v[0], col.s);
    check_column(&col)?;

    let mut kernel = Kernel::new(
        model,
        opts.cfl,
        RightEdge::Curve {
            curve,
            data: &edge_data,
        },
    );
    let eps = 1e-12 * (1.0 + t_now.abs());
    while col.s < t_now - eps {
        let dt = kernel.stable_dt(&col).min(t_now - col.s);
        kernel.step(&mut col, dt);
        check_column(&col)?;
        if level > 0 && col.xb > levels[level] as f64 * dx {
            level -= 1;
            col.remesh(levels[level]);
        }
    }
    while level > 0 {
        level -= 1;
        col.remesh(levels[level]);
    }
    col.s = t_now;
    col.xb = 1.0;
    if exclude {
        col.v[n_cells] = col.v[n_cells - 1];
    }
    Ok(PlantState::from_column(&col))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::frozen_transit;
    use crate::model::{Grid, InitialData};
    use crate::presets;

    #[test]
    fn zero_state_prediction() {
        let model = presets::paper_sec5(presets::Law::Stabilize);
        let grid = Grid::new(40).unwrap();
        let mut state = PlantState::zero(&grid, 1);
        state.t = 2.0;
        let pred = predict_determinate(&model, &state, &PredictOptions::default()).unwrap();
        for (x, s) in pred.curve.x().iter().zip(pred.curve.s()) {
            assert!((s - (2.0 + 1.0 - x)).abs() < 1e-9, "{x} {s}");
        }
        assert!(pred.u_bar.iter().all(|&u| u == 0.0));
        assert!(pred.x_trace.iter().all(|x| x[0] == 0.0));
        let d = pred.derivatives.unwrap();
        assert!(d.tau_t.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn unit_speed_shift() {
        // λ = 1, F = 0, g⁰ = 0: ū(x, t+1-x) = u(2x-1, t) for x ≥ 1/2, else 0.
        let model = presets::advection();
        let n = 200;
        let grid = Grid::new(n).unwrap();
        let u0 = |x: f64| libm::sin(3.0 * x);
        let state = PlantState {
            t: 0.0,
            u: grid.sample(&u0),
            v: vec![0.0; n + 1],
            x: vec![0.0],
        };
        let pred = predict_determinate(&model, &state, &PredictOptions::default()).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=n {
            let x = grid.x(i);
            let exact = if x >= 0.5 { u0(2.0 * x - 1.0) } else { 0.0 };
            // the kink at x = 1/2 is smeared over a few cells
            if (x - 0.5).abs() > 0.05 {
                worst = worst.max((pred.u_bar[i] - exact).abs());
            }
        }
        assert!(worst < 5.0 / n as f64, "{worst}");
    }

    #[test]
    fn interval_prediction_of_zero_data() {
        let model = presets::paper_sec5(presets::Law::Stabilize);
        let grid = Grid::new(20).unwrap();
        let curve = frozen_transit(&model, &grid, 3.0, Family::UBackward, None).unwrap();
        let data = CurveData {
            curve,
            u: vec![0.0; 21],
            v: vec![0.0; 21],
            x_foot: vec![0.0],
        };
        let est = predict_interval(&model, &data, &IntervalOptions::default()).unwrap();
        assert_eq!(est.t, 3.0);
        assert!(est.norm_w() == 0.0 && est.norm_x() == 0.0);
    }

    #[test]
    fn interval_prediction_transports_curve_data() {
        // Unit speeds, no sources, g⁰ = 0: u(x, t) is the curve value at the
        // same x (u is constant along the curve's own characteristic) and
        // v(x, t) = v on the curve at (1 + x)/2.
        let model = presets::advection();
        let n = 200;
        let grid = Grid::new(n).unwrap();
        let curve = frozen_transit(&model, &grid, 1.0, Family::UBackward, None).unwrap();
        let f = |x: f64| libm::cos(2.0 * x);
        let data = CurveData {
            curve,
            u: vec![0.7; n + 1],
            v: grid.sample(&f),
            x_foot: vec![0.0],
        };
        let est = predict_interval(&model, &data, &IntervalOptions::default()).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=n {
            let x = grid.x(i);
            worst = worst.max((est.v[i] - f(0.5 * (1.0 + x))).abs());
        }
        assert!(worst < 5.0 / n as f64, "{worst}");
        // u = g⁰ = 0 reaches every x < 1 except a smeared layer near the edge.
        assert!(est.u[n / 2].abs() < 1e-9);
    }

    #[test]
    fn initial_data_prediction_is_finite_for_reference_model() {
        let model = presets::paper_sec5(presets::Law::Stabilize);
        let grid = Grid::new(50).unwrap();
        let state = PlantState::initial(&presets::paper_sec5_initial(), &grid);
        let pred = predict_determinate(&model, &state, &PredictOptions::default()).unwrap();
        assert!(pred.tau0() > 0.3 && pred.tau0() < 1.0, "{}", pred.tau0());
        assert!(pred.derivatives.is_some());
        let _ = InitialData::zero(1);
    }
}
