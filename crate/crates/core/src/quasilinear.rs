//! Sampled predictive controller for quasilinear plants.
//!
//! At `t_k = kθ` the controller predicts over `D(t_k)` (with time
//! derivatives), designs a virtual input `U*` for the left trace of `v` that
//! ramps at rate `δ` from the predicted value toward the feedback law and
//! then follows it, and solves the target system along the moving
//! characteristic `x ↦ τᵛ(t;x)` for `t ∈ [t_k, t_{k+1}]`. The input over that
//! interval is the right end of the target profile.
//!
//! With `p = u_t`, `q = v_t` and `ū*(x,t) = u(x, τᵛ(t;x))` (same for the
//! others), the target system is
//!
//! ```text
//! ∂_t ū* = τ_t p̄*
//! ∂_t p̄* = τ_t ( -μ ∂_x p̄* + (μ/λᵘ) G_p )        p̄*(0,t) = d/ds g⁰(X(s), U*(s), s)
//! ∂_x v̄* = -fᵛ/λᵛ                                  v̄*(0,t) = U*(s₀)
//! ∂_x q̄* = -G_q/λᵛ                                 q̄*(0,t) = U*'(s₀)
//! τ_t(x) = exp(-∫ₓ¹ (λᵛ_u p̄* + λᵛ_v q̄*)/λᵛ² dξ)    ds₀/dt = τ_t(0)
//! ```
//!
//! with `μ = λᵘλᵛ/(λᵘ+λᵛ)`, `s₀ = τᵛ(t;0)`, `ū*(0,t) = g⁰(X(s₀), U*(s₀), s₀)` and
//! `G_p`, `G_q` from [`TransportCoefficients`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::exp;

use crate::model::{SystemModel, TransportCoefficients};
use crate::predictor::{predict_determinate, PredictOptions, Prediction};
use crate::presets::sign;
use crate::simulator::{InputSegment, PlantState};
use crate::xode::{lerp_nodes, rk4_sweep};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Ramp,
    Feedback,
}

/// The virtual input `U*(s)` for `s ≥ τ_k` together with the ODE trajectory
/// it generates.
#[derive(Debug, Clone)]
pub struct VirtualInputPlan {
    model: SystemModel,
    pub tau_k: f64,
    /// `v̄(0, τ_k)`.
    pub anchor: f64,
    /// `K(X̄(τ_k), τ_k) - v̄(0, τ_k)`.
    pub error: f64,
    pub delta: f64,
    /// First time the ramp meets the feedback law, if it has within the
    /// horizon integrated so far.
    pub switch_time: Option<f64>,
    step: f64,
    s: Vec<f64>,
    x: Vec<Vec<f64>>,
}

const SWITCH_TOL: f64 = 1e-10;

impl VirtualInputPlan {
    fn ramp(&self, s: f64) -> f64 {
        self.anchor + self.delta * sign(self.error) * (s - self.tau_k)
    }

    fn branch_at(&self, s: f64) -> Branch {
        match self.switch_time {
            Some(ts) if s >= ts => Branch::Feedback,
            _ => Branch::Ramp,
        }
    }

    fn input(&self, branch: Branch, x: &[f64], s: f64) -> f64 {
        match branch {
            Branch::Ramp => self.ramp(s),
            Branch::Feedback => self.model.feedback(x, s),
        }
    }

    fn rk4(&self, branch: Branch, x: &[f64], s: f64, h: f64) -> Vec<f64> {
        let n = x.len();
        let m = &self.model;
        let eval = |xs: &[f64], ss: f64, out: &mut [f64]| m.f0(xs, self.input(branch, xs, ss), ss, out);
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        eval(x, s, &mut k1);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        eval(&tmp, s + 0.5 * h, &mut k2);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        eval(&tmp, s + 0.5 * h, &mut k3);
        for j in 0..n {
            tmp[j] = x[j] + h * k3[j];
        }
        eval(&tmp, s + h, &mut k4);
        (0..n)
            .map(|j| x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect()
    }

    /// Gap between the feedback law and the ramp.
    fn gap(&self, x: &[f64], s: f64) -> f64 {
        self.model.feedback(x, s) - self.ramp(s)
    }

    /// Integrates the plan up to at least `s_max`.
    pub fn ensure(&mut self, s_max: f64) -> Result<()> {
        while *self.s.last().unwrap() < s_max {
            let s = *self.s.last().unwrap();
            let x = self.x.last().unwrap().clone();
            let branch = self.branch_at(s);
            let next = self.rk4(branch, &x, s, self.step);
            if next.iter().any(|z| !z.is_finite()) {
                return Err(Error::Control(format!("virtual-input ODE diverged at s = {s}")));
            }
            if branch == Branch::Ramp {
                let g1 = self.gap(&next, s + self.step);
                let side = sign(self.error);
                if sign(g1) != side {
                    // bisection on the sub-step length
                    let (mut lo, mut hi) = (0.0, self.step);
                    while hi - lo > SWITCH_TOL {
                        let mid = 0.5 * (lo + hi);
                        let xm = self.rk4(branch, &x, s, mid);
                        if sign(self.gap(&xm, s + mid)) == side {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let ts = s + hi;
                    let xs = self.rk4(branch, &x, s, hi);
                    self.switch_time = Some(ts);
                    if hi > 0.0 {
                        self.s.push(ts);
                        self.x.push(xs);
                    }
                    continue;
                }
            }
            self.s.push(s + self.step);
            self.x.push(next);
        }
        Ok(())
    }

    /// Plan horizon integrated so far.
    pub fn horizon(&self) -> f64 {
        *self.s.last().unwrap()
    }

    /// `X̄*(s)` by linear interpolation between plan nodes.
    pub fn x_at(&self, s: f64) -> Vec<f64> {
        let n = self.s.len();
        if s <= self.s[0] {
            return self.x[0].clone();
        }
        if s >= self.s[n - 1] {
            return self.x[n - 1].clone();
        }
        let k = self.s.partition_point(|&a| a <= s) - 1;
        let w = (s - self.s[k]) / (self.s[k + 1] - self.s[k]);
        self.x[k]
            .iter()
            .zip(&self.x[k + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    pub fn u_star(&self, s: f64) -> f64 {
        match self.branch_at(s) {
            Branch::Ramp => self.ramp(s),
            Branch::Feedback => self.model.feedback(&self.x_at(s), s),
        }
    }

    /// `dU*/ds`: `±δ` on the ramp, `K_X f⁰ + K_t` afterwards.
    pub fn u_star_rate(&self, s: f64) -> f64 {
        match self.branch_at(s) {
            Branch::Ramp => self.delta * sign(self.error),
            Branch::Feedback => {
                let x = self.x_at(s);
                let u = self.model.feedback(&x, s);
                self.model.feedback_rate(&x, u, s)
            }
        }
    }

    /// Whether `s` lies on the ramp branch.
    pub fn on_ramp(&self, s: f64) -> bool {
        self.branch_at(s) == Branch::Ramp
    }
}

/// Builds the virtual-input plan anchored at the prediction's foot and
/// integrates it to `horizon`.
pub fn design_virtual_input(
    model: &SystemModel,
    pred: &Prediction,
    delta: f64,
    horizon: f64,
) -> Result<VirtualInputPlan> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("ramp rate must be positive".into()));
    }
    let tau_k = pred.tau0();
    let x_k = pred.x_foot().to_vec();
    let anchor = pred.v_foot();
    let error = model.feedback(&x_k, tau_k) - anchor;
    if !error.is_finite() {
        return Err(Error::Control(format!("K is not finite at s = {tau_k}")));
    }
    let mut plan = VirtualInputPlan {
        model: model.clone(),
        tau_k,
        anchor,
        error,
        delta,
        switch_time: (sign(error) == 0.0).then_some(tau_k),
        step: 1e-3,
        s: vec![tau_k],
        x: vec![x_k],
    };
    plan.ensure(horizon)?;
    Ok(plan)
}

/// Target system solution on `[t_k, t_k + θ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSolution {
    /// Uniform march times.
    pub times: Vec<f64>,
    /// `v̄*(1, t)`, the input to apply.
    pub input: Vec<f64>,
    /// `τᵛ(t; 0)` at each time.
    pub foot: Vec<f64>,
    /// Final target state at `t_k + θ` on the grid nodes.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub tau_t: Vec<f64>,
}

struct Sweep {
    v: Vec<f64>,
    q: Vec<f64>,
    tau_t: Vec<f64>,
}

fn sweep(
    model: &SystemModel,
    xs: &[f64],
    u: &mut [f64],
    p: &mut [f64],
    s0: f64,
    plan: &VirtualInputPlan,
) -> Result<Sweep> {
    let n = xs.len() - 1;
    let dx = xs[1] - xs[0];
    let x_star = plan.x_at(s0);
    let u_star = plan.u_star(s0);
    let u_star_rate = plan.u_star_rate(s0);
    let mut x_dot = vec![0.0; model.n()];
    model.f0(&x_star, u_star, s0, &mut x_dot);
    u[0] = model.g0(&x_star, u_star, s0);
    p[0] = model.boundary_rate(&x_star, &x_dot, u_star, u_star_rate, s0);

    let u_ref: &[f64] = u;
    let p_ref: &[f64] = p;
    let ys = rk4_sweep(xs, [u_star, u_star_rate], |x, y| {
        let uu = lerp_nodes(xs, u_ref, x);
        let pp = lerp_nodes(xs, p_ref, x);
        let c = TransportCoefficients::at(model, x, uu, y[0]);
        [-model.f_v(x, uu, y[0]) / c.lambda_v, -c.source_q(pp, y[1]) / c.lambda_v]
    });
    let v: Vec<f64> = ys.iter().map(|y| y[0]).collect();
    let q: Vec<f64> = ys.iter().map(|y| y[1]).collect();
    if v.iter().chain(&q).any(|z| !z.is_finite()) {
        return Err(Error::Control(format!("target blow-up at s0 = {s0}")));
    }
    let kappa: Vec<f64> = (0..=n)
        .map(|i| {
            let lv = model.lambda_v(xs[i], u[i], v[i]);
            let (a, b) = model.dlambda_v(xs[i], u[i], v[i]);
            (a * p[i] + b * q[i]) / (lv * lv)
        })
        .collect();
    let mut tau_t = vec![1.0; n + 1];
    let mut integral = 0.0;
    for i in (0..n).rev() {
        integral += 0.5 * dx * (kappa[i] + kappa[i + 1]);
        tau_t[i] = exp(-integral);
    }
    Ok(Sweep { v, q, tau_t })
}

/// Largest `τ_t μ` over the nodes.
fn max_speed(model: &SystemModel, xs: &[f64], u: &[f64], sw: &Sweep) -> f64 {
    (0..xs.len())
        .map(|i| {
            let lu = model.lambda_u(xs[i], u[i], sw.v[i]);
            let lv = model.lambda_v(xs[i], u[i], sw.v[i]);
            sw.tau_t[i] * lu * lv / (lu + lv)
        })
        .fold(0.0, f64::max)
}

fn rates(model: &SystemModel, xs: &[f64], u: &[f64], p: &[f64], sw: &Sweep, du: &mut [f64], dp: &mut [f64]) {
    let dx = xs[1] - xs[0];
    du[0] = 0.0;
    dp[0] = 0.0;
    for i in 1..xs.len() {
        let c = TransportCoefficients::at(model, xs[i], u[i], sw.v[i]);
        let mu = c.lambda_u * c.lambda_v / (c.lambda_u + c.lambda_v);
        let tt = sw.tau_t[i];
        du[i] = tt * p[i];
        dp[i] = tt * (-mu * (p[i] - p[i - 1]) / dx + mu / c.lambda_u * c.source_p(p[i], sw.q[i]));
    }
}

/// Marches the target system over `[t_k, t_k + θ]` with uniform steps.
pub fn solve_target_system(
    model: &SystemModel,
    pred: &Prediction,
    plan: &mut VirtualInputPlan,
    theta: f64,
    cfl: f64,
) -> Result<TargetSolution> {
    let derivs = pred
        .derivatives
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("prediction lacks time derivatives".into()))?;
    let xs = pred.curve.x().to_vec();
    let n = xs.len() - 1;
    let dx = xs[1] - xs[0];
    let mut u = pred.u_bar.clone();
    let mut p = derivs.p.clone();
    let mut s0 = pred.tau0();

    let sw = sweep(model, &xs, &mut u, &mut p, s0, plan)?;
    let speed = max_speed(model, &xs, &u, &sw).max(1e-12);
    let steps = ceil_pos(theta * speed / (cfl * dx)).max(1);
    let dt = theta / steps as f64;

    let mut times = Vec::with_capacity(steps + 1);
    let mut input = Vec::with_capacity(steps + 1);
    let mut foot = Vec::with_capacity(steps + 1);
    let mut du = vec![0.0; n + 1];
    let mut dp = vec![0.0; n + 1];
    let mut current = sw;
    for k in 0..steps {
        let t = pred.t + k as f64 * dt;
        times.push(t);
        input.push(current.v[n]);
        foot.push(s0);
        plan.ensure(s0 + 4.0 * dt * current.tau_t[0].max(1.0))?;

        rates(model, &xs, &u, &p, &current, &mut du, &mut dp);
        let mut u1: Vec<f64> = u.iter().zip(&du).map(|(a, d)| a + dt * d).collect();
        let mut p1: Vec<f64> = p.iter().zip(&dp).map(|(a, d)| a + dt * d).collect();
        let s01 = s0 + dt * current.tau_t[0];
        plan.ensure(s01)?;
        let sw1 = sweep(model, &xs, &mut u1, &mut p1, s01, plan)?;
        rates(model, &xs, &u1, &p1, &sw1, &mut du, &mut dp);
        for i in 0..=n {
            u[i] = 0.5 * u[i] + 0.5 * (u1[i] + dt * du[i]);
            p[i] = 0.5 * p[i] + 0.5 * (p1[i] + dt * dp[i]);
        }
        s0 = 0.5 * s0 + 0.5 * (s01 + dt * sw1.tau_t[0]);
        plan.ensure(s0)?;
        if u.iter().chain(&p).any(|z| !z.is_finite()) || !s0.is_finite() {
            return Err(Error::Control(format!("target blow-up at t = {}", t + dt)));
        }
        current = sweep(model, &xs, &mut u, &mut p, s0, plan)?;
    }
    times.push(pred.t + theta);
    input.push(current.v[n]);
    foot.push(s0);
    Ok(TargetSolution {
        times,
        input,
        foot,
        u,
        v: current.v,
        p,
        q: current.q,
        tau_t: current.tau_t,
    })
}

fn ceil_pos(z: f64) -> usize {
    let k = z as usize;
    if (k as f64) < z {
        k + 1
    } else {
        k
    }
}

/// Everything produced for one sampling interval.
#[derive(Debug, Clone)]
pub struct IntervalControl {
    pub segment: InputSegment,
    pub prediction: Prediction,
    pub plan: VirtualInputPlan,
    pub target: TargetSolution,
}

#[derive(Debug, Clone)]
pub struct QuasilinearController {
    model: SystemModel,
    pub theta: f64,
    pub delta: f64,
    pub predict: PredictOptions,
    /// CFL number of the target-system march.
    pub cfl: f64,
}

impl QuasilinearController {
    pub fn new(model: SystemModel, theta: f64, delta: f64) -> Result<Self> {
        if !(theta > 0.0) || !(delta > 0.0) {
            return Err(Error::InvalidArgument("need θ > 0 and δ > 0".into()));
        }
        Ok(Self {
            model,
            theta,
            delta,
            predict: PredictOptions {
                derivatives: Some(true),
                ..PredictOptions::default()
            },
            cfl: 0.5,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    /// Input segment on `[t_k, t_k + θ]` for the state at `t_k`.
    pub fn control_interval(&self, state: &PlantState) -> Result<InputSegment> {
        Ok(self.control_interval_detail(state)?.segment)
    }

    pub fn control_interval_detail(&self, state: &PlantState) -> Result<IntervalControl> {
        let prediction = predict_determinate(&self.model, state, &self.predict)?;
        let horizon = prediction.tau0() + self.theta;
        let mut plan = design_virtual_input(&self.model, &prediction, self.delta, horizon)?;
        let target = solve_target_system(&self.model, &prediction, &mut plan, self.theta, self.cfl)?;
        let segment = InputSegment::new(state.t, state.t + self.theta, target.input.clone())?;
        Ok(IntervalControl {
            segment,
            prediction,
            plan,
            target,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Grid, ModelKind};
    use crate::presets;

    #[test]
    fn zero_state_gives_zero_segment() {
        let c = QuasilinearController::new(presets::paper_sec5(presets::Law::Stabilize), 0.5, 1.0).unwrap();
        let grid = Grid::new(20).unwrap();
        let seg = c.control_interval(&PlantState::zero(&grid, 1)).unwrap();
        assert!(seg.samples().iter().all(|&u| u == 0.0));
        assert_eq!(seg.end(), 0.5);
    }

    fn static_target_prediction() -> (SystemModel, Prediction) {
        let model = SystemModel::builder(ModelKind::Quasilinear, 1)
            .feedback(|_, _| 0.5)
            .build();
        let grid = Grid::new(10).unwrap();
        let pred = predict_determinate(&model, &PlantState::zero(&grid, 1), &PredictOptions::default()).unwrap();
        (model, pred)
    }

    #[test]
    fn ramp_meets_constant_target() {
        let (model, pred) = static_target_prediction();
        let plan = design_virtual_input(&model, &pred, 1.0, 3.0).unwrap();
        let tau = pred.tau0();
        assert!((plan.switch_time.unwrap() - (tau + 0.5)).abs() < 1e-9);
        for k in 0..30 {
            let s = tau + 0.1 * k as f64;
            let expected = (s - tau).min(0.5);
            assert!((plan.u_star(s) - expected).abs() < 1e-9, "{s}");
        }
        assert_eq!(plan.u_star_rate(tau + 0.2), 1.0);
        assert_eq!(plan.u_star_rate(tau + 0.7), 0.0);
    }

    #[test]
    fn zero_error_switches_immediately() {
        let model = SystemModel::builder(ModelKind::Quasilinear, 1).build();
        let grid = Grid::new(10).unwrap();
        let pred = predict_determinate(&model, &PlantState::zero(&grid, 1), &PredictOptions::default()).unwrap();
        let plan = design_virtual_input(&model, &pred, 1.0, 2.0).unwrap();
        assert_eq!(plan.switch_time, Some(pred.tau0()));
        assert!(!plan.on_ramp(pred.tau0()));
    }

    #[test]
    fn preset_plan_switches_with_bounded_rate() {
        let model = presets::paper_sec5(presets::Law::Stabilize);
        let grid = Grid::new(50).unwrap();
        let state = PlantState::initial(&presets::paper_sec5_initial(), &grid);
        let pred = predict_determinate(&model, &state, &PredictOptions::default()).unwrap();
        let plan = design_virtual_input(&model, &pred, 1.0, pred.tau0() + 10.0).unwrap();
        let ts = plan.switch_time.expect("switch within horizon");
        assert!(ts > pred.tau0());
        // continuity at the switch
        let gap = plan.u_star(ts) - plan.u_star(ts - 1e-9);
        assert!(gap.abs() < 1e-6, "{gap}");
        let mut s = pred.tau0();
        while s < ts {
            assert!(plan.u_star_rate(s).abs() <= 1.0);
            s += 0.01;
        }
    }
}
