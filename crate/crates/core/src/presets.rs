//! Named models used by the examples, the CLI and the tests.

use alloc::sync::Arc;
use alloc::vec;
use libm::{cos, sin};

use crate::model::{InitialData, ModelKind, Partials, ProfileFn, SystemModel};

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Virtual-input law for the ODE `X' = X|X| + v0`.
#[derive(Clone)]
pub enum Law {
    /// `K = -X|X| - X`.
    Stabilize,
    /// `K = -X|X| + 2 (X_ref(t) - X)`.
    Track(ProfileFn),
}

/// Default tracking reference `X_ref(t) = 0.3 sin(0.5 t)`.
pub fn default_reference(t: f64) -> f64 {
    0.3 * sin(0.5 * t)
}

fn kinked_lambda_u(x: f64) -> f64 {
    if x < 0.5 {
        0.5
    } else {
        x
    }
}

/// The quasilinear benchmark: `n = 1`,
/// `λᵘ = 0.5` on `x < 0.5` and `x` otherwise, `λᵛ = 1 + 0.5(|u| + |v|)`,
/// `fᵘ = sin(u + v)`, `fᵛ = sin(v - u)`, `f⁰ = X|X| + v0`, `g⁰ = X + v0`.
pub fn paper_sec5(law: Law) -> SystemModel {
    let mut partials = Partials {
        lambda_u: Some(Arc::new(|_, _, _| (0.0, 0.0))),
        lambda_v: Some(Arc::new(|_, u, v| (0.5 * sign(u), 0.5 * sign(v)))),
        f_u: Some(Arc::new(|_, u, v| {
            let c = cos(u + v);
            (c, c)
        })),
        f_v: Some(Arc::new(|_, u, v| {
            let c = cos(v - u);
            (-c, c)
        })),
        g0_x: Some(Arc::new(|_, _, _, out: &mut [f64]| out[0] = 1.0)),
        g0_v: Some(Arc::new(|_, _, _| 1.0)),
        g0_t: Some(Arc::new(|_, _, _| 0.0)),
        k_x: None,
        k_t: None,
    };
    let builder = SystemModel::builder(ModelKind::Quasilinear, 1)
        .lambda_u(|x, _, _| kinked_lambda_u(x))
        .lambda_v(|_, u, v| 1.0 + 0.5 * (u.abs() + v.abs()))
        .f_u(|_, u, v| sin(u + v))
        .f_v(|_, u, v| sin(v - u))
        .f0(|x, v0, _, out| out[0] = x[0] * x[0].abs() + v0)
        .g0(|x, v0, _| x[0] + v0);
    let builder = match law {
        Law::Stabilize => {
            partials.k_x = Some(Arc::new(|x, _, out: &mut [f64]| out[0] = -2.0 * x[0].abs() - 1.0));
            partials.k_t = Some(Arc::new(|_, _| 0.0));
            builder.feedback(|x, _| -x[0] * x[0].abs() - x[0])
        }
        Law::Track(reference) => {
            partials.k_x = Some(Arc::new(|x, _, out: &mut [f64]| out[0] = -2.0 * x[0].abs() - 2.0));
            builder.feedback(move |x, t| -x[0] * x[0].abs() + 2.0 * (reference(t) - x[0]))
        }
    };
    builder.partials(partials).build()
}

/// The benchmark with the `v` speed frozen at its zero-state value, which
/// makes it semilinear.
pub fn paper_sec5_semilinear(law: Law) -> SystemModel {
    let q = paper_sec5(law);
    let mut partials = q.partials.clone();
    partials.lambda_v = Some(Arc::new(|_, _, _| (0.0, 0.0)));
    let f0 = q.clone();
    SystemModel::builder(ModelKind::Semilinear, 1)
        .lambda_u(|x, _, _| kinked_lambda_u(x))
        .lambda_v(|_, _, _| 1.0)
        .f_u(|_, u, v| sin(u + v))
        .f_v(|_, u, v| sin(v - u))
        .f0(move |x, v0, t, out| f0.f0(x, v0, t, out))
        .g0(|x, v0, _| x[0] + v0)
        .feedback(move |x, t| q.feedback(x, t))
        .partials(partials)
        .build()
}

/// `u0 = -0.5`, `v0 = 0.5 (1 + x)`, `X0 = -1`.
pub fn paper_sec5_initial() -> InitialData {
    InitialData::new(|_| -0.5, |x| 0.5 * (1.0 + x), vec![-1.0])
}

/// The benchmark data scaled by `factor`. Stays compatible at `x = 0`
/// because `g⁰` is linear.
pub fn paper_sec5_initial_scaled(factor: f64) -> InitialData {
    InitialData::new(move |_| -0.5 * factor, move |x| 0.5 * factor * (1.0 + x), vec![-factor])
}

/// Linear initial data that satisfies the zeroth- and first-order
/// compatibility conditions at `x = 0` for a scalar ODE, together with the
/// input `U(t) = v(1,0) + t v_t(1,0)` that keeps `x = 1` compatible too.
#[derive(Clone)]
pub struct CompatibleData {
    pub init: InitialData,
    pub v_right: f64,
    pub v_right_rate: f64,
}

impl CompatibleData {
    pub fn input(&self, t: f64) -> f64 {
        self.v_right + t * self.v_right_rate
    }
}

/// `v₀(x) = v_left + v_slope·x`, `X₀ = x0`, and `u₀` linear with
/// `u₀(0) = g⁰` and the slope that matches `d/dt g⁰` at the corner.
pub fn compatible_initial(model: &SystemModel, x0: f64, v_left: f64, v_slope: f64) -> CompatibleData {
    let xs = [x0];
    let u_left = model.g0(&xs, v_left, 0.0);
    let vt_left = model.lambda_v(0.0, u_left, v_left) * v_slope + model.f_v(0.0, u_left, v_left);
    let mut f = [0.0];
    model.f0(&xs, v_left, 0.0, &mut f);
    let mut gx = [0.0];
    model.dg0_x(&xs, v_left, 0.0, &mut gx);
    let ut_left = gx[0] * f[0] + model.dg0_v(&xs, v_left, 0.0) * vt_left + model.dg0_t(&xs, v_left, 0.0);
    let slope = (model.f_u(0.0, u_left, v_left) - ut_left) / model.lambda_u(0.0, u_left, v_left);
    let (u1, v1) = (u_left + slope, v_left + v_slope);
    let v_right_rate = model.lambda_v(1.0, u1, v1) * v_slope + model.f_v(1.0, u1, v1);
    CompatibleData {
        init: InitialData::new(move |x| u_left + slope * x, move |x| v_left + v_slope * x, vec![x0]),
        v_right: v1,
        v_right_rate,
    }
}

/// Small compatible data for the section 5 model, used by the convergence
/// checks.
pub fn paper_sec5_small_initial() -> CompatibleData {
    compatible_initial(&paper_sec5(Law::Stabilize), -0.2, 0.1, 0.1)
}

/// Unit speeds and every other function zero.
pub fn zero() -> SystemModel {
    SystemModel::builder(ModelKind::Semilinear, 1)
        .partials(Partials {
            lambda_u: Some(Arc::new(|_, _, _| (0.0, 0.0))),
            lambda_v: Some(Arc::new(|_, _, _| (0.0, 0.0))),
            f_u: Some(Arc::new(|_, _, _| (0.0, 0.0))),
            f_v: Some(Arc::new(|_, _, _| (0.0, 0.0))),
            g0_x: Some(Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0))),
            g0_v: Some(Arc::new(|_, _, _| 0.0)),
            g0_t: Some(Arc::new(|_, _, _| 0.0)),
            k_x: Some(Arc::new(|_, _, out: &mut [f64]| out.fill(0.0))),
            k_t: Some(Arc::new(|_, _| 0.0)),
        })
        .build()
}

/// Pure transport at unit speed with homogeneous coupling; the same
/// functions as [`zero`], kept as a separate name for the transport tests.
pub fn advection() -> SystemModel {
    zero()
}

pub fn by_name(name: &str) -> Option<SystemModel> {
    match name {
        "paper-sec5" => Some(paper_sec5(Law::Stabilize)),
        "zero" => Some(zero()),
        "advection" => Some(advection()),
        _ => None,
    }
}

impl SystemModel {
    /// The same model with every analytic partial removed.
    pub fn without_partials(&self) -> Self {
        let mut out = self.clone();
        out.partials = Partials::default();
        out
    }
}
