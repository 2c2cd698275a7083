//! Boundary observers driven by `Y(t) = u(1,t)` and the applied input.
//!
//! The estimates live on the measurement characteristic `x ↦ τ̌ᵘ(t;x)`, the
//! rightward characteristic that reaches `x = 1` at time `t`. Along it
//!
//! ```text
//! ∂_x û = fᵘ/λᵘ                     û(1,t) = Y(t)
//! ∂_t v̂ = τ_t (μ̂ ∂_x v̂ + ν̂ fᵛ)      v̂(1,t) = U(t)
//! ```
//!
//! with `μ̂ = λᵘλᵛ/(λᵘ+λᵛ)`, `ν̂ = λᵘ/(λᵘ+λᵛ)` and `τ_t = ∂_t τ̌ᵘ` (one for
//! semilinear plants). Quasilinear plants add the time derivatives
//!
//! ```text
//! ∂_x p̂ = G_p/λᵘ                    p̂(1,t) = Y'(t)
//! ∂_t q̂ = τ_t (μ̂ ∂_x q̂ + ν̂ G_q)      q̂(1,t) = U'(t)
//! τ_t(x) = exp(∫ₓ¹ (λᵘ_u p̂ + λᵘ_v q̂)/λᵘ² dξ)
//! ```
//!
//! The ODE estimate `X̂` of `X(τ̌ᵘ(t;0))` is driven by the boundary estimates
//! and never feeds back into them.

use alloc::boxed::Box;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use libm::exp;

use crate::characteristics::{transit_from_speeds, CharCurve, Family};
use crate::model::{Grid, ModelKind, SystemModel, TransportCoefficients};
use crate::predictor::{predict_interval, CurveData, IntervalOptions};
use crate::simulator::{PlantState, NORM_LIMIT};
use crate::xode::{lerp_uniform, rk4_sweep};
use crate::{Error, Result};

/// `(X̂, û(0), v̂(0), s, out)`: rate of `X̂` with respect to the time `s` on
/// the curve foot.
pub type OdeUpdateFn = Arc<dyn Fn(&[f64], f64, f64, f64, &mut [f64]) + Send + Sync>;

/// Estimator of `X` at the foot of the measurement characteristic.
#[derive(Clone)]
pub enum OdeObserver {
    /// `dX̂/ds = h(X̂, û(0), v̂(0), s)`. `horizon` is the declared
    /// convergence time; `None` for asymptotic observers.
    Dynamic { h: OdeUpdateFn, horizon: Option<f64> },
    /// Deadbeat inversion of `g⁰(X̂, v̂(0), s) = û(0)` for `n = 1`.
    Algebraic(Box<SystemModel>),
}

impl fmt::Debug for OdeObserver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdeObserver::Dynamic { horizon, .. } => f
                .debug_struct("Dynamic")
                .field("horizon", horizon)
                .finish_non_exhaustive(),
            OdeObserver::Algebraic(_) => f.write_str("Algebraic"),
        }
    }
}

impl OdeObserver {
    pub fn dynamic(
        h: impl Fn(&[f64], f64, f64, f64, &mut [f64]) + Send + Sync + 'static,
        horizon: Option<f64>,
    ) -> Self {
        OdeObserver::Dynamic {
            h: Arc::new(h),
            horizon,
        }
    }

    /// Zero for the deadbeat observer.
    pub fn horizon(&self) -> Option<f64> {
        match self {
            OdeObserver::Dynamic { horizon, .. } => *horizon,
            OdeObserver::Algebraic(_) => Some(0.0),
        }
    }
}

/// Half-width of the `X` interval on which invertibility of `g⁰` is checked.
const INVERSION_BOX: f64 = 10.0;
const ROOT_TOL: f64 = 1e-12;

/// Deadbeat ODE observer for models whose `g⁰` is strictly monotone in a
/// scalar `X`.
pub fn algebraic_ode_observer(model: &SystemModel) -> Result<OdeObserver> {
    if model.n() != 1 {
        return Err(Error::UnsupportedModel(format!(
            "algebraic ODE observer needs n = 1, model has n = {}",
            model.n()
        )));
    }
    let samples = 81;
    for &v0 in &[-2.0, -1.0, 0.0, 1.0, 2.0] {
        for &s in &[0.0, 1.0, 5.0] {
            let mut dir = 0.0;
            let mut prev = model.g0(&[-INVERSION_BOX], v0, s);
            for k in 1..samples {
                let x = -INVERSION_BOX + 2.0 * INVERSION_BOX * k as f64 / (samples - 1) as f64;
                let g = model.g0(&[x], v0, s);
                let d = g - prev;
                if !(d.is_finite()) || d == 0.0 || (dir != 0.0 && d.signum() != dir) {
                    return Err(Error::UnsupportedModel(format!(
                        "g0 is not strictly monotone in X near X = {x}, v0 = {v0}, t = {s}"
                    )));
                }
                dir = d.signum();
                prev = g;
            }
        }
    }
    Ok(OdeObserver::Algebraic(Box::new(model.clone())))
}

/// Solves `g⁰(X, v0, s) = target` for scalar `X`, starting from `guess`.
pub fn invert_boundary(model: &SystemModel, target: f64, v0: f64, s: f64, guess: f64) -> Result<f64> {
    let f = |x: f64| model.g0(&[x], v0, s) - target;
    let mut lo = guess;
    let mut hi = guess;
    let mut flo = f(lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    // expand a bracket around the guess
    let mut width = 1.0;
    let mut fhi = flo;
    let mut found = false;
    for _ in 0..80 {
        lo = guess - width;
        hi = guess + width;
        flo = f(lo);
        fhi = f(hi);
        if flo.signum() != fhi.signum() || flo == 0.0 || fhi == 0.0 {
            found = true;
            break;
        }
        width *= 2.0;
    }
    if !found || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Observer(format!("cannot invert g0 for target {target}")));
    }
    // Newton steps safeguarded by bisection.
    let mut x = guess.clamp(lo, hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        let h = 1e-7 * (1.0 + x.abs());
        let slope = (f(x + h) - f(x - h)) / (2.0 * h);
        let newton = x - fx / slope;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= ROOT_TOL * (1.0 + x.abs()) || hi - lo <= ROOT_TOL * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Backward differences of uniformly sampled data, optionally followed by a
/// trailing three-point average. The first sample reuses the first
/// difference.
pub fn differentiate_measurement(samples: &[f64], dt: f64, smooth: bool) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("sample spacing must be positive".into()));
    }
    let mut d: Vec<f64> = Vec::with_capacity(samples.len());
    d.push((samples[1] - samples[0]) / dt);
    for k in 1..samples.len() {
        d.push((samples[k] - samples[k - 1]) / dt);
    }
    if smooth {
        let raw = d.clone();
        for k in 0..raw.len() {
            let lo = k.saturating_sub(2);
            let w = &raw[lo..=k];
            d[k] = w.iter().sum::<f64>() / w.len() as f64;
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub t: f64,
    /// `û` on the grid nodes.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `û_∂t`, `v̂_∂t` (quasilinear only).
    pub p: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    /// Estimated measurement characteristic `τ̂ᵘ(t;·)`.
    pub curve: CharCurve,
    /// `∂_t τ̂ᵘ(t;·)`.
    pub tau_t: Vec<f64>,
    /// Estimate of `X(τ̂ᵘ(t;0))`.
    pub x: Vec<f64>,
    /// Last measurement and input with their rates.
    pub y: f64,
    pub y_rate: f64,
    pub input: f64,
    pub input_rate: f64,
    /// Time since start; the convergence horizon is compared against it.
    pub elapsed: f64,
}

impl ObserverState {
    /// Whether the declared convergence horizon has passed.
    pub fn converged(&self, ode: &OdeObserver) -> bool {
        let transit = self.t - self.curve.at_left();
        match ode.horizon() {
            Some(h) => self.elapsed >= transit + h,
            None => false,
        }
    }

    /// `(û, v̂)` as a plant-shaped state at the curve nodes, with `X̂`.
    pub fn as_curve_data(&self) -> CurveData {
        CurveData {
            curve: self.curve.clone(),
            u: self.u.clone(),
            v: self.v.clone(),
            x_foot: self.x.clone(),
        }
    }
}

/// Observer configuration and the stepping logic.
#[derive(Debug, Clone)]
pub struct Observer {
    model: SystemModel,
    pub ode: OdeObserver,
    pub cfl: f64,
}

/// Initial guesses. Defaults are zero fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGuess {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub x: Vec<f64>,
}

impl ObserverGuess {
    pub fn zero(grid: &Grid, n: usize) -> Self {
        Self {
            v: vec![0.0; grid.len()],
            q: vec![0.0; grid.len()],
            x: vec![0.0; n],
        }
    }

    pub fn constant(grid: &Grid, v: f64, x: &[f64]) -> Self {
        Self {
            v: vec![v; grid.len()],
            q: vec![0.0; grid.len()],
            x: x.to_vec(),
        }
    }
}

struct Sweep {
    u: Vec<f64>,
    p: Option<Vec<f64>>,
    curve: CharCurve,
    tau_t: Vec<f64>,
}

impl Observer {
    pub fn new(model: SystemModel, ode: OdeObserver) -> Self {
        Self { model, ode, cfl: 0.8 }
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    fn quasilinear(&self) -> bool {
        self.model.kind() == ModelKind::Quasilinear
    }

    /// Sweeps `û` (and `p̂`) down from `x = 1` and rebuilds the curve.
    fn sweep(&self, t: f64, v: &[f64], q: Option<&[f64]>, y: f64, y_rate: f64) -> Result<Sweep> {
        let m = &self.model;
        let n = v.len() - 1;
        let nodes: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let back: Vec<f64> = nodes.iter().rev().copied().collect();
        let (u, p) = match q {
            None => {
                let ys = rk4_sweep(&back, [y], |x, s| {
                    let vv = lerp_uniform(v, x);
                    [m.f_u(x, s[0], vv) / m.lambda_u(x, s[0], vv)]
                });
                let mut u: Vec<f64> = ys.iter().map(|s| s[0]).collect();
                u.reverse();
                (u, None)
            }
            Some(q) => {
                let ys = rk4_sweep(&back, [y, y_rate], |x, s| {
                    let vv = lerp_uniform(v, x);
                    let qq = lerp_uniform(q, x);
                    let c = TransportCoefficients::at(m, x, s[0], vv);
                    [m.f_u(x, s[0], vv) / c.lambda_u, c.source_p(s[1], qq) / c.lambda_u]
                });
                let mut u: Vec<f64> = ys.iter().map(|s| s[0]).collect();
                let mut p: Vec<f64> = ys.iter().map(|s| s[1]).collect();
                u.reverse();
                p.reverse();
                (u, Some(p))
            }
        };
        if u.iter()
            .chain(p.iter().flatten())
            .any(|z| !z.is_finite() || z.abs() > NORM_LIMIT)
        {
            return Err(Error::Observer(format!("estimate diverged at t = {t}")));
        }
        let speed: Vec<f64> = (0..=n).map(|i| m.lambda_u(nodes[i], u[i], v[i])).collect();
        let mid: Vec<f64> = (0..n)
            .map(|i| {
                m.lambda_u(
                    0.5 * (nodes[i] + nodes[i + 1]),
                    0.5 * (u[i] + u[i + 1]),
                    0.5 * (v[i] + v[i + 1]),
                )
            })
            .collect();
        let curve = transit_from_speeds(t, Family::UBackward, &nodes, &speed, &mid)?;
        let tau_t = match (&p, q) {
            (Some(p), Some(q)) => {
                let kappa: Vec<f64> = (0..=n)
                    .map(|i| {
                        let (a, b) = m.dlambda_u(nodes[i], u[i], v[i]);
                        (a * p[i] + b * q[i]) / (speed[i] * speed[i])
                    })
                    .collect();
                let dx = 1.0 / n as f64;
                let mut tt = vec![1.0; n + 1];
                let mut integral = 0.0;
                for i in (0..n).rev() {
                    integral += 0.5 * dx * (kappa[i] + kappa[i + 1]);
                    tt[i] = exp(integral);
                }
                tt
            }
            _ => vec![1.0; n + 1],
        };
        Ok(Sweep { u, p, curve, tau_t })
    }

    /// Rates of `v̂` (and `q̂`) from the leftward transport.
    fn rates(&self, v: &[f64], q: Option<&[f64]>, sw: &Sweep, dv: &mut [f64], dq: &mut [f64]) {
        let m = &self.model;
        let n = v.len() - 1;
        let h = 1.0 / n as f64;
        for i in 0..n {
            let x = i as f64 * h;
            let c = TransportCoefficients::at(m, x, sw.u[i], v[i]);
            let sum = c.lambda_u + c.lambda_v;
            let mu = c.lambda_u * c.lambda_v / sum;
            let nu = c.lambda_u / sum;
            let tt = sw.tau_t[i];
            dv[i] = tt * (mu * (v[i + 1] - v[i]) / h + nu * m.f_v(x, sw.u[i], v[i]));
            if let (Some(q), Some(p)) = (q, &sw.p) {
                dq[i] = tt * (mu * (q[i + 1] - q[i]) / h + nu * c.source_q(p[i], q[i]));
            }
        }
        dv[n] = 0.0;
        dq[n] = 0.0;
    }

    fn advance_x(&self, x: &[f64], sw: &Sweep, v0: f64, ds: f64) -> Result<Vec<f64>> {
        let s = sw.curve.at_left();
        match &self.ode {
            OdeObserver::Algebraic(model) => {
                let xr = invert_boundary(model, sw.u[0], v0, s, x[0])?;
                Ok(vec![xr])
            }
            OdeObserver::Dynamic { h, .. } => {
                let mut rate = vec![0.0; x.len()];
                h(x, sw.u[0], v0, s, &mut rate);
                Ok(x.iter().zip(&rate).map(|(a, r)| a + ds * r).collect())
            }
        }
    }

    /// Initial observer state at `t0` from guesses and the first samples.
    pub fn init(&self, t0: f64, guess: &ObserverGuess, y: f64, input: f64) -> Result<ObserverState> {
        if guess.x.len() != self.model.n() || guess.v.len() < 3 || guess.q.len() != guess.v.len() {
            return Err(Error::InvalidArgument("observer guess has the wrong shape".into()));
        }
        let mut v = guess.v.clone();
        let n = v.len() - 1;
        v[n] = input;
        let q = self.quasilinear().then(|| {
            let mut q = guess.q.clone();
            q[n] = 0.0;
            q
        });
        let sw = self.sweep(t0, &v, q.as_deref(), y, 0.0)?;
        let x = match &self.ode {
            OdeObserver::Algebraic(model) => {
                vec![invert_boundary(model, sw.u[0], v[0], sw.curve.at_left(), guess.x[0])?]
            }
            OdeObserver::Dynamic { .. } => guess.x.clone(),
        };
        Ok(ObserverState {
            t: t0,
            u: sw.u,
            v,
            p: sw.p,
            q,
            curve: sw.curve,
            tau_t: sw.tau_t,
            x,
            y,
            y_rate: 0.0,
            input,
            input_rate: 0.0,
            elapsed: 0.0,
        })
    }

    /// Largest stable step for the transport of `v̂`.
    pub fn stable_dt(&self, obs: &ObserverState) -> f64 {
        let m = &self.model;
        let n = obs.v.len() - 1;
        let mut amax = 0.0f64;
        for i in 0..=n {
            let x = i as f64 / n as f64;
            let lu = m.lambda_u(x, obs.u[i], obs.v[i]);
            let lv = m.lambda_v(x, obs.u[i], obs.v[i]);
            amax = amax.max(obs.tau_t[i] * lu * lv / (lu + lv));
        }
        if amax > 0.0 {
            self.cfl / (n as f64 * amax)
        } else {
            f64::INFINITY
        }
    }

    /// Advances the observer by `dt` to the new samples `y = Y(t+dt)`,
    /// `input = U(t+dt)`. Rates of `Y` and `U` are backward differences.
    /// Substeps internally when `dt` exceeds the transport limit.
    pub fn step(&self, obs: &ObserverState, y: f64, input: f64, dt: f64) -> Result<ObserverState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("observer step must be positive".into()));
        }
        let y_rate = (y - obs.y) / dt;
        let input_rate = (input - obs.input) / dt;
        let substeps = ceil_pos(dt / self.stable_dt(obs)).max(1);
        let h = dt / substeps as f64;
        let mut cur = obs.clone();
        for k in 1..=substeps {
            let w = k as f64 / substeps as f64;
            let y_k = obs.y + w * (y - obs.y);
            let in_k = obs.input + w * (input - obs.input);
            cur = self.substep(&cur, y_k, y_rate, in_k, input_rate, h)?;
        }
        Ok(cur)
    }

    fn substep(
        &self,
        obs: &ObserverState,
        y: f64,
        y_rate: f64,
        input: f64,
        input_rate: f64,
        dt: f64,
    ) -> Result<ObserverState> {
        let n = obs.v.len() - 1;
        let t1 = obs.t + dt;
        let sw0 = Sweep {
            u: obs.u.clone(),
            p: obs.p.clone(),
            curve: obs.curve.clone(),
            tau_t: obs.tau_t.clone(),
        };
        let mut dv = vec![0.0; n + 1];
        let mut dq = vec![0.0; n + 1];

        // stage 1
        self.rates(&obs.v, obs.q.as_deref(), &sw0, &mut dv, &mut dq);
        let mut v1: Vec<f64> = obs.v.iter().zip(&dv).map(|(a, d)| a + dt * d).collect();
        let mut q1 = obs
            .q
            .as_ref()
            .map(|q| q.iter().zip(&dq).map(|(a, d)| a + dt * d).collect::<Vec<_>>());
        v1[n] = input;
        if let Some(q1) = q1.as_mut() {
            q1[n] = input_rate;
        }
        let sw1 = self.sweep(t1, &v1, q1.as_deref(), y, y_rate)?;

        // stage 2
        self.rates(&v1, q1.as_deref(), &sw1, &mut dv, &mut dq);
        let mut v: Vec<f64> = (0..=n).map(|i| 0.5 * obs.v[i] + 0.5 * (v1[i] + dt * dv[i])).collect();
        let mut q = obs.q.as_ref().map(|q0| {
            let q1 = q1.as_ref().unwrap();
            (0..=n)
                .map(|i| 0.5 * q0[i] + 0.5 * (q1[i] + dt * dq[i]))
                .collect::<Vec<_>>()
        });
        v[n] = input;
        if let Some(q) = q.as_mut() {
            q[n] = input_rate;
        }
        if v.iter()
            .chain(q.iter().flatten())
            .any(|z| !z.is_finite() || z.abs() > NORM_LIMIT)
        {
            return Err(Error::Observer(format!("estimate diverged at t = {t1}")));
        }
        let sw = self.sweep(t1, &v, q.as_deref(), y, y_rate)?;

        // ODE estimate on the foot time scale: ds = τ_t(0) dt
        let ds = dt * 0.5 * (sw0.tau_t[0] + sw.tau_t[0]);
        let x = self.advance_x(&obs.x, &sw, v[0], ds)?;
        if x.iter().any(|z| !z.is_finite()) {
            return Err(Error::Observer(format!("ODE estimate diverged at t = {t1}")));
        }
        Ok(ObserverState {
            t: t1,
            u: sw.u,
            v,
            p: sw.p,
            q,
            curve: sw.curve,
            tau_t: sw.tau_t,
            x,
            y,
            y_rate,
            input,
            input_rate,
            elapsed: obs.elapsed + dt,
        })
    }

    /// Forward prediction from the curve estimates to the current time.
    pub fn estimate_current(&self, obs: &ObserverState) -> Result<PlantState> {
        let opts = IntervalOptions {
            exclude_right_edge: !self.quasilinear(),
            ..IntervalOptions::default()
        };
        self.estimate_current_with(obs, &opts)
    }

    pub fn estimate_current_with(&self, obs: &ObserverState, opts: &IntervalOptions) -> Result<PlantState> {
        predict_interval(&self.model, &obs.as_curve_data(), opts)
    }
}

fn ceil_pos(z: f64) -> usize {
    let k = z as usize;
    if (k as f64) < z {
        k + 1
    } else {
        k
    }
}
