//! Plant description: coefficient functions, boundary couplings, the ODE
//! feedback law, initial data, the spatial grid, and validation of the
//! standing assumptions on a bounded state box.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// `(x, u, v) -> scalar`: speeds and source terms.
pub type FieldFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// `(x, u, v) -> (∂/∂u, ∂/∂v)`.
pub type FieldGradFn = Arc<dyn Fn(f64, f64, f64) -> (f64, f64) + Send + Sync>;
/// `(X, v0, t, out)`: ODE right-hand side `f⁰`, written into `out`.
pub type OdeFn = Arc<dyn Fn(&[f64], f64, f64, &mut [f64]) + Send + Sync>;
/// `(X, v0, t) -> scalar`: inflow boundary value `g⁰` and its partials.
pub type BoundaryFn = Arc<dyn Fn(&[f64], f64, f64) -> f64 + Send + Sync>;
/// `(X, v0, t, out)`: gradient of `g⁰` with respect to `X`.
pub type BoundaryGradFn = Arc<dyn Fn(&[f64], f64, f64, &mut [f64]) + Send + Sync>;
/// `(X, t) -> scalar`: the virtual-input law `K`.
pub type FeedbackFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
/// `(X, t, out)`: gradient of `K` with respect to `X`.
pub type FeedbackGradFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
/// Scalar profile on `[0, 1]`.
pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Speeds depend on `x` only.
    Semilinear,
    /// Speeds depend on the state.
    Quasilinear,
}

/// Whether the origin is supposed to be an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Stabilization,
    Tracking,
}

/// Optional analytic partial derivatives. Missing entries are replaced by
/// central differences on use.
#[derive(Clone, Default)]
pub struct Partials {
    pub lambda_u: Option<FieldGradFn>,
    pub lambda_v: Option<FieldGradFn>,
    pub f_u: Option<FieldGradFn>,
    pub f_v: Option<FieldGradFn>,
    pub g0_x: Option<BoundaryGradFn>,
    pub g0_v: Option<BoundaryFn>,
    pub g0_t: Option<BoundaryFn>,
    pub k_x: Option<FeedbackGradFn>,
    pub k_t: Option<FeedbackFn>,
}

impl Partials {
    fn is_complete(&self) -> bool {
        self.lambda_u.is_some()
            && self.lambda_v.is_some()
            && self.f_u.is_some()
            && self.f_v.is_some()
            && self.g0_x.is_some()
            && self.g0_v.is_some()
            && self.g0_t.is_some()
            && self.k_x.is_some()
            && self.k_t.is_some()
    }
}

#[derive(Clone)]
pub struct SystemModel {
    kind: ModelKind,
    n: usize,
    lambda_u: FieldFn,
    lambda_v: FieldFn,
    f_u: FieldFn,
    f_v: FieldFn,
    f0: OdeFn,
    g0: BoundaryFn,
    k: FeedbackFn,
    pub partials: Partials,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("kind", &self.kind)
            .field("n", &self.n)
            .field("analytic_partials", &self.partials.is_complete())
            .finish_non_exhaustive()
    }
}

/// Builder for [`SystemModel`]. Unset functions default to zero, speeds
/// default to one.
pub struct ModelBuilder {
    kind: ModelKind,
    n: usize,
    lambda_u: FieldFn,
    lambda_v: FieldFn,
    f_u: FieldFn,
    f_v: FieldFn,
    f0: OdeFn,
    g0: BoundaryFn,
    k: FeedbackFn,
    partials: Partials,
}

impl ModelBuilder {
    pub fn lambda_u(mut self, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.lambda_u = Arc::new(f);
        self
    }

    pub fn lambda_v(mut self, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.lambda_v = Arc::new(f);
        self
    }

    pub fn f_u(mut self, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f_u = Arc::new(f);
        self
    }

    pub fn f_v(mut self, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f_v = Arc::new(f);
        self
    }

    pub fn f0(mut self, f: impl Fn(&[f64], f64, f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.f0 = Arc::new(f);
        self
    }

    pub fn g0(mut self, f: impl Fn(&[f64], f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.g0 = Arc::new(f);
        self
    }

    pub fn feedback(mut self, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.k = Arc::new(f);
        self
    }

    pub fn partials(mut self, partials: Partials) -> Self {
        self.partials = partials;
        self
    }

    pub fn build(self) -> SystemModel {
        SystemModel {
            kind: self.kind,
            n: self.n,
            lambda_u: self.lambda_u,
            lambda_v: self.lambda_v,
            f_u: self.f_u,
            f_v: self.f_v,
            f0: self.f0,
            g0: self.g0,
            k: self.k,
            partials: self.partials,
        }
    }
}

/// Relative step for central differences, about the cube root of machine epsilon.
const FD_STEP: f64 = 6.0e-6;

fn fd_step(z: f64) -> f64 {
    FD_STEP * z.abs().max(1.0)
}

fn central_field(f: &FieldFn, x: f64, u: f64, v: f64) -> (f64, f64) {
    let hu = fd_step(u);
    let hv = fd_step(v);
    (
        (f(x, u + hu, v) - f(x, u - hu, v)) / (2.0 * hu),
        (f(x, u, v + hv) - f(x, u, v - hv)) / (2.0 * hv),
    )
}

impl SystemModel {
    pub fn builder(kind: ModelKind, n: usize) -> ModelBuilder {
        ModelBuilder {
            kind,
            n,
            lambda_u: Arc::new(|_, _, _| 1.0),
            lambda_v: Arc::new(|_, _, _| 1.0),
            f_u: Arc::new(|_, _, _| 0.0),
            f_v: Arc::new(|_, _, _| 0.0),
            f0: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            g0: Arc::new(|_, _, _| 0.0),
            k: Arc::new(|_, _| 0.0),
            partials: Partials::default(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Dimension of the ODE state `X`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Replaces the virtual-input law, dropping any analytic partials of the old one.
    pub fn with_feedback(&self, k: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        let mut out = self.clone();
        out.k = Arc::new(k);
        out.partials.k_x = None;
        out.partials.k_t = None;
        out
    }

    #[inline]
    pub fn lambda_u(&self, x: f64, u: f64, v: f64) -> f64 {
        (self.lambda_u)(x, u, v)
    }

    #[inline]
    pub fn lambda_v(&self, x: f64, u: f64, v: f64) -> f64 {
        (self.lambda_v)(x, u, v)
    }

    #[inline]
    pub fn f_u(&self, x: f64, u: f64, v: f64) -> f64 {
        (self.f_u)(x, u, v)
    }

    #[inline]
    pub fn f_v(&self, x: f64, u: f64, v: f64) -> f64 {
        (self.f_v)(x, u, v)
    }

    #[inline]
    pub fn f0(&self, x: &[f64], v0: f64, t: f64, out: &mut [f64]) {
        (self.f0)(x, v0, t, out)
    }

    #[inline]
    pub fn g0(&self, x: &[f64], v0: f64, t: f64) -> f64 {
        (self.g0)(x, v0, t)
    }

    #[inline]
    pub fn feedback(&self, x: &[f64], t: f64) -> f64 {
        (self.k)(x, t)
    }

    pub fn dlambda_u(&self, x: f64, u: f64, v: f64) -> (f64, f64) {
        match &self.partials.lambda_u {
            Some(d) => d(x, u, v),
            None => central_field(&self.lambda_u, x, u, v),
        }
    }

    pub fn dlambda_v(&self, x: f64, u: f64, v: f64) -> (f64, f64) {
        match &self.partials.lambda_v {
            Some(d) => d(x, u, v),
            None => central_field(&self.lambda_v, x, u, v),
        }
    }

    pub fn df_u(&self, x: f64, u: f64, v: f64) -> (f64, f64) {
        match &self.partials.f_u {
            Some(d) => d(x, u, v),
            None => central_field(&self.f_u, x, u, v),
        }
    }

    pub fn df_v(&self, x: f64, u: f64, v: f64) -> (f64, f64) {
        match &self.partials.f_v {
            Some(d) => d(x, u, v),
            None => central_field(&self.f_v, x, u, v),
        }
    }

    pub fn dg0_x(&self, x: &[f64], v0: f64, t: f64, out: &mut [f64]) {
        match &self.partials.g0_x {
            Some(d) => d(x, v0, t, out),
            None => {
                let mut probe = x.to_vec();
                for (i, o) in out.iter_mut().enumerate() {
                    let h = fd_step(x[i]);
                    probe[i] = x[i] + h;
                    let hi = self.g0(&probe, v0, t);
                    probe[i] = x[i] - h;
                    let lo = self.g0(&probe, v0, t);
                    probe[i] = x[i];
                    *o = (hi - lo) / (2.0 * h);
                }
            }
        }
    }

    pub fn dg0_v(&self, x: &[f64], v0: f64, t: f64) -> f64 {
        match &self.partials.g0_v {
            Some(d) => d(x, v0, t),
            None => {
                let h = fd_step(v0);
                (self.g0(x, v0 + h, t) - self.g0(x, v0 - h, t)) / (2.0 * h)
            }
        }
    }

    pub fn dg0_t(&self, x: &[f64], v0: f64, t: f64) -> f64 {
        match &self.partials.g0_t {
            Some(d) => d(x, v0, t),
            None => {
                let h = fd_step(t);
                (self.g0(x, v0, t + h) - self.g0(x, v0, t - h)) / (2.0 * h)
            }
        }
    }

    pub fn dk_x(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match &self.partials.k_x {
            Some(d) => d(x, t, out),
            None => {
                let mut probe = x.to_vec();
                for (i, o) in out.iter_mut().enumerate() {
                    let h = fd_step(x[i]);
                    probe[i] = x[i] + h;
                    let hi = self.feedback(&probe, t);
                    probe[i] = x[i] - h;
                    let lo = self.feedback(&probe, t);
                    probe[i] = x[i];
                    *o = (hi - lo) / (2.0 * h);
                }
            }
        }
    }

    pub fn dk_t(&self, x: &[f64], t: f64) -> f64 {
        match &self.partials.k_t {
            Some(d) => d(x, t),
            None => {
                let h = fd_step(t);
                (self.feedback(x, t + h) - self.feedback(x, t - h)) / (2.0 * h)
            }
        }
    }

    /// Total time derivative of `K(X(s), s)` along `X' = f⁰(X, v0, s)`.
    pub fn feedback_rate(&self, x: &[f64], v0: f64, t: f64) -> f64 {
        let n = self.n;
        let mut grad = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        self.dk_x(x, t, &mut grad);
        self.f0(x, v0, t, &mut rhs);
        grad.iter().zip(&rhs).map(|(g, r)| g * r).sum::<f64>() + self.dk_t(x, t)
    }

    /// Time derivative of `g⁰(X(s), v0(s), s)` given `X'` and `v0'`.
    pub fn boundary_rate(&self, x: &[f64], x_dot: &[f64], v0: f64, v0_dot: f64, t: f64) -> f64 {
        let mut grad = vec![0.0; self.n];
        self.dg0_x(x, v0, t, &mut grad);
        grad.iter().zip(x_dot).map(|(g, r)| g * r).sum::<f64>() + self.dg0_v(x, v0, t) * v0_dot + self.dg0_t(x, v0, t)
    }

    /// Coefficients of the equations satisfied by `(u_t, v_t)` at a point.
    pub fn transport_coefficients(&self, x: f64, u: f64, v: f64) -> TransportCoefficients {
        TransportCoefficients::at(self, x, u, v)
    }
}

/// Fills every missing partial with a central-difference approximation.
/// Analytic partials already present are kept.
pub fn numeric_partials(model: &SystemModel) -> SystemModel {
    let mut out = model.clone();
    let p = &mut out.partials;
    if p.lambda_u.is_none() {
        let f = model.lambda_u.clone();
        p.lambda_u = Some(Arc::new(move |x, u, v| central_field(&f, x, u, v)));
    }
    if p.lambda_v.is_none() {
        let f = model.lambda_v.clone();
        p.lambda_v = Some(Arc::new(move |x, u, v| central_field(&f, x, u, v)));
    }
    if p.f_u.is_none() {
        let f = model.f_u.clone();
        p.f_u = Some(Arc::new(move |x, u, v| central_field(&f, x, u, v)));
    }
    if p.f_v.is_none() {
        let f = model.f_v.clone();
        p.f_v = Some(Arc::new(move |x, u, v| central_field(&f, x, u, v)));
    }
    // The scalar/vector fallbacks in the accessors already are central
    // differences; capture a partial-free copy so they are used verbatim.
    let base = SystemModel {
        partials: Partials::default(),
        ..model.clone()
    };
    if p.g0_x.is_none() {
        let m = base.clone();
        p.g0_x = Some(Arc::new(move |x, v0, t, out| m.dg0_x(x, v0, t, out)));
    }
    if p.g0_v.is_none() {
        let m = base.clone();
        p.g0_v = Some(Arc::new(move |x, v0, t| m.dg0_v(x, v0, t)));
    }
    if p.g0_t.is_none() {
        let m = base.clone();
        p.g0_t = Some(Arc::new(move |x, v0, t| m.dg0_t(x, v0, t)));
    }
    if p.k_x.is_none() {
        let m = base.clone();
        p.k_x = Some(Arc::new(move |x, t, out| m.dk_x(x, t, out)));
    }
    if p.k_t.is_none() {
        let m = base;
        p.k_t = Some(Arc::new(move |x, t| m.dk_t(x, t)));
    }
    out
}

/// Coefficients of the quadratic equations satisfied by the time derivatives
/// `p = u_t`, `q = v_t`. Differentiating the PDE in time and eliminating
/// `u_x`, `v_x` through the PDE itself gives
///
/// ```text
/// p_t + λᵘ p_x = c1 p² + c2 p q + c3 p + c4 q
/// q_t - λᵛ q_x = c5 p q + c6 q² + c7 p + c8 q
/// ```
///
/// with all coefficients evaluated at `(x, u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportCoefficients {
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub c: [f64; 8],
}

impl TransportCoefficients {
    pub fn at(model: &SystemModel, x: f64, u: f64, v: f64) -> Self {
        let lu = model.lambda_u(x, u, v);
        let lv = model.lambda_v(x, u, v);
        let (lu_u, lu_v) = model.dlambda_u(x, u, v);
        let (lv_u, lv_v) = model.dlambda_v(x, u, v);
        let fu = model.f_u(x, u, v);
        let fv = model.f_v(x, u, v);
        let (fu_u, fu_v) = model.df_u(x, u, v);
        let (fv_u, fv_v) = model.df_v(x, u, v);
        Self {
            lambda_u: lu,
            lambda_v: lv,
            c: [
                lu_u / lu,
                lu_v / lu,
                fu_u - fu * lu_u / lu,
                fu_v - fu * lu_v / lu,
                lv_u / lv,
                lv_v / lv,
                fv_u - fv * lv_u / lv,
                fv_v - fv * lv_v / lv,
            ],
        }
    }

    /// Right-hand side of the `p` equation along the `u` characteristic.
    #[inline]
    pub fn source_p(&self, p: f64, q: f64) -> f64 {
        let c = &self.c;
        c[0] * p * p + c[1] * p * q + c[2] * p + c[3] * q
    }

    /// Right-hand side of the `q` equation along the `v` characteristic.
    #[inline]
    pub fn source_q(&self, p: f64, q: f64) -> f64 {
        let c = &self.c;
        c[4] * p * q + c[5] * q * q + c[6] * p + c[7] * q
    }
}

#[derive(Clone)]
pub struct InitialData {
    pub u0: ProfileFn,
    pub v0: ProfileFn,
    pub x0: Vec<f64>,
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialData")
            .field("x0", &self.x0)
            .finish_non_exhaustive()
    }
}

impl InitialData {
    pub fn new(
        u0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        v0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        x0: Vec<f64>,
    ) -> Self {
        Self {
            u0: Arc::new(u0),
            v0: Arc::new(v0),
            x0,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(|_| 0.0, |_| 0.0, vec![0.0; n])
    }
}

/// Uniform partition of `[0, 1]` into `cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    cells: usize,
}

impl Grid {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 cells, got {cells}"
            )));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.cells as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.x(i)).collect()
    }

    pub fn sample(&self, f: &dyn Fn(f64) -> f64) -> Vec<f64> {
        (0..=self.cells).map(|i| f(self.x(i))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Point at which the check failed, or the reason it was skipped.
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Half-width of the state box that was sampled.
    pub state_box: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "skip",
            };
            write!(f, "{tag:4}  {}", c.name)?;
            if let Some(w) = &c.witness {
                write!(f, "  ({w})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub const CHECK_SPEED: &str = "speed positivity";
pub const CHECK_SEMILINEAR: &str = "state-independent speeds";
pub const CHECK_EQUILIBRIUM: &str = "origin is an equilibrium";
pub const CHECK_LIPSCHITZ: &str = "initial data Lipschitz";
pub const CHECK_COMPATIBILITY: &str = "compatibility u0(0) = g0(X0, v0(0), 0)";

const LATTICE: usize = 9;
const EQUILIBRIUM_TOL: f64 = 1e-12;
const COMPATIBILITY_TOL: f64 = 1e-9;

fn finite(function: &'static str, value: f64, point: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Evaluation {
            function,
            point: point(),
        })
    }
}

fn lattice(half_width: f64) -> [f64; LATTICE] {
    let mut pts = [0.0; LATTICE];
    let step = 2.0 * half_width / (LATTICE - 1) as f64;
    for (k, p) in pts.iter_mut().enumerate() {
        *p = -half_width + step * k as f64;
    }
    pts[LATTICE / 2] = 0.0;
    pts
}

/// Checks the standing assumptions on the hypercube
/// `‖(u, v, X)‖∞ ≤ 2 max(‖w0‖∞, ‖X0‖∞, 1)`, sampled on a 9-point lattice per
/// axis and at every grid node.
pub fn validate_model(
    model: &SystemModel,
    init: &InitialData,
    grid: &Grid,
    scenario: Scenario,
) -> Result<ValidationReport> {
    if init.x0.len() != model.n() {
        return Err(Error::InvalidArgument(format!(
            "X0 has {} components, model expects {}",
            init.x0.len(),
            model.n()
        )));
    }
    let nodes = grid.nodes();
    let u0 = grid.sample(&*init.u0);
    let v0 = grid.sample(&*init.v0);
    for (i, (&a, &b)) in u0.iter().zip(&v0).enumerate() {
        finite("u0", a, || format!("x = {}", nodes[i]))?;
        finite("v0", b, || format!("x = {}", nodes[i]))?;
    }
    let w_norm = u0.iter().chain(&v0).fold(0.0f64, |m, z| m.max(z.abs()));
    let x_norm = init.x0.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let half = 2.0 * w_norm.max(x_norm).max(1.0);
    let pts = lattice(half);
    let mut checks = Vec::new();

    // Speeds.
    let mut speed_fail = None;
    let mut semi_fail = None;
    'outer: for &x in &nodes {
        let lu_ref = finite("lambda_u", model.lambda_u(x, 0.0, 0.0), || {
            format!("x = {x}, u = 0, v = 0")
        })?;
        let lv_ref = finite("lambda_v", model.lambda_v(x, 0.0, 0.0), || {
            format!("x = {x}, u = 0, v = 0")
        })?;
        for &u in &pts {
            for &v in &pts {
                let lu = finite("lambda_u", model.lambda_u(x, u, v), || {
                    format!("x = {x}, u = {u}, v = {v}")
                })?;
                let lv = finite("lambda_v", model.lambda_v(x, u, v), || {
                    format!("x = {x}, u = {u}, v = {v}")
                })?;
                if speed_fail.is_none() && (lu <= 0.0 || lv <= 0.0) {
                    let which = if lu <= 0.0 { "lambda_u" } else { "lambda_v" };
                    speed_fail = Some(format!("{which} <= 0 at x = {x}, u = {u}, v = {v}"));
                }
                if model.kind() == ModelKind::Semilinear && semi_fail.is_none() && (lu != lu_ref || lv != lv_ref) {
                    semi_fail = Some(format!("speed varies with state at x = {x}, u = {u}, v = {v}"));
                }
                if speed_fail.is_some() && (semi_fail.is_some() || model.kind() == ModelKind::Quasilinear) {
                    break 'outer;
                }
            }
        }
    }
    checks.push(Check {
        name: CHECK_SPEED,
        status: if speed_fail.is_some() {
            CheckStatus::Fail
        } else {
            CheckStatus::Pass
        },
        witness: speed_fail,
    });
    match model.kind() {
        ModelKind::Semilinear => checks.push(Check {
            name: CHECK_SEMILINEAR,
            status: if semi_fail.is_some() {
                CheckStatus::Fail
            } else {
                CheckStatus::Pass
            },
            witness: semi_fail,
        }),
        ModelKind::Quasilinear => checks.push(Check {
            name: CHECK_SEMILINEAR,
            status: CheckStatus::Skipped,
            witness: Some("quasilinear model".into()),
        }),
    }

    // Equilibrium identities.
    match scenario {
        Scenario::Stabilization => {
            let mut fail = None;
            let zero = vec![0.0; model.n()];
            let mut rhs = vec![0.0; model.n()];
            for &x in &nodes {
                let fu = finite("f_u", model.f_u(x, 0.0, 0.0), || format!("x = {x}"))?;
                let fv = finite("f_v", model.f_v(x, 0.0, 0.0), || format!("x = {x}"))?;
                if fail.is_none() && (fu.abs() > EQUILIBRIUM_TOL || fv.abs() > EQUILIBRIUM_TOL) {
                    fail = Some(format!("F(x, 0) != 0 at x = {x}"));
                }
            }
            for k in 0..=10 {
                let t = k as f64;
                model.f0(&zero, 0.0, t, &mut rhs);
                for &r in &rhs {
                    finite("f0", r, || format!("X = 0, v0 = 0, t = {t}"))?;
                }
                let g = finite("g0", model.g0(&zero, 0.0, t), || format!("X = 0, v0 = 0, t = {t}"))?;
                let kk = finite("K", model.feedback(&zero, t), || format!("X = 0, t = {t}"))?;
                if fail.is_none() {
                    if rhs.iter().any(|r| r.abs() > EQUILIBRIUM_TOL) {
                        fail = Some(format!("f0(0, 0, t) != 0 at t = {t}"));
                    } else if g.abs() > EQUILIBRIUM_TOL {
                        fail = Some(format!("g0(0, 0, t) != 0 at t = {t}"));
                    } else if kk.abs() > EQUILIBRIUM_TOL {
                        fail = Some(format!("K(0, t) != 0 at t = {t}"));
                    }
                }
            }
            checks.push(Check {
                name: CHECK_EQUILIBRIUM,
                status: if fail.is_some() {
                    CheckStatus::Fail
                } else {
                    CheckStatus::Pass
                },
                witness: fail,
            });
        }
        Scenario::Tracking => checks.push(Check {
            name: CHECK_EQUILIBRIUM,
            status: CheckStatus::Skipped,
            witness: Some("tracking scenario".into()),
        }),
    }

    // Regularity and compatibility of the initial data (quasilinear only).
    match model.kind() {
        ModelKind::Quasilinear => {
            let fine = Grid::new(2 * grid.cells())?;
            let slope = |g: &Grid, f: &dyn Fn(f64) -> f64| -> (f64, f64) {
                let dx = g.dx();
                let mut worst = (0.0, 0.0);
                for i in 0..g.cells() {
                    let s = (f(g.x(i + 1)) - f(g.x(i))).abs() / dx;
                    if !(s <= worst.0) {
                        worst = (s, g.x(i));
                    }
                }
                worst
            };
            let mut fail = None;
            for (name, f) in [("u0", &init.u0), ("v0", &init.v0)] {
                let (coarse, _) = slope(grid, &**f);
                let (finer, at) = slope(&fine, &**f);
                // A jump doubles the difference quotient under refinement.
                if fail.is_none() && !(finer <= 1.5 * coarse + 1e-9) {
                    fail = Some(format!("{name} slope grows under refinement near x = {at}"));
                }
            }
            checks.push(Check {
                name: CHECK_LIPSCHITZ,
                status: if fail.is_some() {
                    CheckStatus::Fail
                } else {
                    CheckStatus::Pass
                },
                witness: fail,
            });

            let ua = (init.u0)(0.0);
            let va = (init.v0)(0.0);
            let g = finite("g0", model.g0(&init.x0, va, 0.0), || {
                format!("X = X0, v0 = {va}, t = 0")
            })?;
            let gap = (ua - g).abs();
            let ok = gap <= COMPATIBILITY_TOL * (1.0 + ua.abs());
            checks.push(Check {
                name: CHECK_COMPATIBILITY,
                status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                witness: (!ok).then(|| format!("u0(0) = {ua}, g0 = {g}")),
            });
        }
        ModelKind::Semilinear => {
            for name in [CHECK_LIPSCHITZ, CHECK_COMPATIBILITY] {
                checks.push(Check {
                    name,
                    status: CheckStatus::Skipped,
                    witness: Some("semilinear model".into()),
                });
            }
        }
    }

    Ok(ValidationReport {
        checks,
        state_box: half,
    })
}
