//! Shared transport kernel: first-order upwind differences on a uniform mesh
//! of `[0, x_b]` whose right edge may move, advanced by two-stage SSP
//! Runge-Kutta. Nodes move with the mesh, `x_i(s) = (i/M) x_b(s)`, so the
//! nodal equations pick up the term `x_i' w_x`.

use alloc::vec;
use alloc::vec::Vec;

use crate::characteristics::{invert_curve, CharCurve};
use crate::model::SystemModel;

/// Right-edge behaviour of the mesh.
pub(crate) enum RightEdge<'a> {
    /// Fixed edge at `x_b = 1` with `v(1, s) = U(s)`.
    Inflow(&'a dyn Fn(f64) -> f64),
    /// Edge moving left along the `v` characteristic; no boundary data.
    Characteristic,
    /// Edge following `x_b(s) = curve⁻¹(s)`; `(u, v)` at the edge given by
    /// `data(x_b)`.
    Curve {
        curve: &'a CharCurve,
        data: &'a dyn Fn(f64) -> (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Column {
    pub s: f64,
    pub xb: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
}

impl Column {
    pub fn cells(&self) -> usize {
        self.u.len() - 1
    }

    pub fn h(&self) -> f64 {
        self.xb / self.cells() as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.xb * i as f64 / self.cells() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).chain(&self.x).all(|z| z.is_finite()) && self.xb.is_finite()
    }

    /// Linear interpolation of the column onto `m` cells over the same
    /// interval. Exact when the new nodes are a subset of the old ones.
    pub fn remesh(&mut self, m: usize) {
        let old_m = self.cells();
        let interp = |w: &[f64]| -> Vec<f64> {
            (0..=m)
                .map(|j| {
                    if j == m {
                        return w[old_m];
                    }
                    // position in old index units, computed in exact integer ratio first
                    let num = j * old_m;
                    let k = num / m;
                    let rem = num % m;
                    if rem == 0 {
                        w[k]
                    } else {
                        let frac = rem as f64 / m as f64;
                        w[k] + frac * (w[k + 1] - w[k])
                    }
                })
                .collect()
        };
        self.u = interp(&self.u);
        self.v = interp(&self.v);
    }
}

pub(crate) struct Kernel<'a> {
    pub model: &'a SystemModel,
    pub cfl: f64,
    pub edge: RightEdge<'a>,
    du: Vec<f64>,
    dv: Vec<f64>,
    dx: Vec<f64>,
    stage: Column,
}

impl<'a> Kernel<'a> {
    pub fn new(model: &'a SystemModel, cfl: f64, edge: RightEdge<'a>) -> Self {
        Self {
            model,
            cfl,
            edge,
            du: Vec::new(),
            dv: Vec::new(),
            dx: vec![0.0; model.n()],
            stage: Column {
                s: 0.0,
                xb: 0.0,
                u: Vec::new(),
                v: Vec::new(),
                x: Vec::new(),
            },
        }
    }

    /// Velocity of the right edge.
    fn edge_velocity(&self, col: &Column) -> f64 {
        match &self.edge {
            RightEdge::Inflow(_) => 0.0,
            RightEdge::Characteristic => {
                let m = col.cells();
                -self.model.lambda_v(col.xb, col.u[m], col.v[m])
            }
            RightEdge::Curve { curve, .. } => 1.0 / curve.slope(col.xb),
        }
    }

    /// Largest step allowed by the CFL condition on the current column.
    pub fn stable_dt(&self, col: &Column) -> f64 {
        let m = col.cells();
        let xb_dot = self.edge_velocity(col);
        let mut cmax = 0.0f64;
        for i in 0..=m {
            let xi = col.node(i);
            let g = xb_dot * i as f64 / m as f64;
            let cu = -self.model.lambda_u(xi, col.u[i], col.v[i]) + g;
            let cv = self.model.lambda_v(xi, col.u[i], col.v[i]) + g;
            cmax = cmax.max(cu.abs()).max(cv.abs());
        }
        if cmax > 0.0 {
            self.cfl * col.h() / cmax
        } else {
            f64::INFINITY
        }
    }

    /// Time derivatives of the nodal values and of `X`.
    fn rhs(&mut self, col: &Column) {
        let m = col.cells();
        let h = col.h();
        let xb_dot = self.edge_velocity(col);
        self.du.resize(m + 1, 0.0);
        self.dv.resize(m + 1, 0.0);
        let (u, v) = (&col.u, &col.v);
        for i in 0..=m {
            let xi = col.node(i);
            let g = xb_dot * i as f64 / m as f64;
            let lu = self.model.lambda_u(xi, u[i], v[i]);
            let lv = self.model.lambda_v(xi, u[i], v[i]);
            let cu = -lu + g;
            let cv = lv + g;
            self.du[i] = upwind(cu, u, i, h) + self.model.f_u(xi, u[i], v[i]);
            self.dv[i] = upwind(cv, v, i, h) + self.model.f_v(xi, u[i], v[i]);
        }
        self.model.f0(&col.x, v[0], col.s, &mut self.dx);
    }

    /// Imposes the algebraic boundary rows at the column's time.
    fn apply_boundary(&self, col: &mut Column) {
        let m = col.cells();
        match &self.edge {
            RightEdge::Inflow(input) => col.v[m] = input(col.s),
            RightEdge::Characteristic => {}
            RightEdge::Curve { data, .. } => {
                let (ue, ve) = data(col.xb);
                col.u[m] = ue;
                col.v[m] = ve;
            }
        }
        col.u[0] = self.model.g0(&col.x, col.v[0], col.s);
    }

    fn edge_position(&self, col: &Column, s: f64, xb_dot: f64, dt: f64) -> f64 {
        match &self.edge {
            RightEdge::Inflow(_) => col.xb,
            RightEdge::Characteristic => col.xb + dt * xb_dot,
            RightEdge::Curve { curve, .. } => invert_curve(curve, s).unwrap_or(col.xb + dt * xb_dot),
        }
    }

    /// One SSP-RK2 step of size `dt`.
    pub fn step(&mut self, col: &mut Column, dt: f64) {
        let s1 = col.s + dt;
        // stage 1
        let xb_dot = self.edge_velocity(col);
        self.rhs(col);
        let mut st = core::mem::replace(
            &mut self.stage,
            Column {
                s: 0.0,
                xb: 0.0,
                u: Vec::new(),
                v: Vec::new(),
                x: Vec::new(),
            },
        );
        st.s = s1;
        st.xb = self.edge_position(col, s1, xb_dot, dt);
        st.u.clear();
        st.v.clear();
        st.x.clear();
        st.u.extend(col.u.iter().zip(&self.du).map(|(a, d)| a + dt * d));
        st.v.extend(col.v.iter().zip(&self.dv).map(|(a, d)| a + dt * d));
        st.x.extend(col.x.iter().zip(&self.dx).map(|(a, d)| a + dt * d));
        self.apply_boundary(&mut st);

        // stage 2
        let xb_dot2 = self.edge_velocity(&st);
        self.rhs(&st);
        for i in 0..col.u.len() {
            col.u[i] = 0.5 * col.u[i] + 0.5 * (st.u[i] + dt * self.du[i]);
            col.v[i] = 0.5 * col.v[i] + 0.5 * (st.v[i] + dt * self.dv[i]);
        }
        for k in 0..col.x.len() {
            col.x[k] = 0.5 * col.x[k] + 0.5 * (st.x[k] + dt * self.dx[k]);
        }
        col.xb = match &self.edge {
            RightEdge::Characteristic => 0.5 * col.xb + 0.5 * (st.xb + dt * xb_dot2),
            _ => st.xb,
        };
        col.s = s1;
        self.apply_boundary(col);
        self.stage = st;
    }
}

/// Upwind approximation of `c w_x` at node `i`; one-sided at the ends.
#[inline]
pub(crate) fn upwind(c: f64, w: &[f64], i: usize, h: f64) -> f64 {
    let last = w.len() - 1;
    if c < 0.0 {
        if i > 0 {
            c * (w[i] - w[i - 1]) / h
        } else {
            c * (w[1] - w[0]) / h
        }
    } else if c > 0.0 {
        if i < last {
            c * (w[i + 1] - w[i]) / h
        } else {
            c * (w[i] - w[i - 1]) / h
        }
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn remesh_to_half_keeps_even_nodes() {
        let mut col = Column {
            s: 0.0,
            xb: 0.4,
            u: (0..=8).map(|i| i as f64 * 0.3).collect(),
            v: (0..=8).map(|i| (i * i) as f64).collect(),
            x: vec![0.0],
        };
        let old = col.clone();
        col.remesh(4);
        for j in 0..=4 {
            assert_eq!(col.u[j], old.u[2 * j]);
            assert_eq!(col.v[j], old.v[2 * j]);
        }
    }

    #[test]
    fn remesh_interpolates_linear_data_exactly() {
        let mut col = Column {
            s: 0.0,
            xb: 1.0,
            u: (0..=9).map(|i| 2.0 * i as f64 / 9.0).collect(),
            v: vec![1.0; 10],
            x: vec![],
        };
        col.remesh(4);
        for j in 0..=4 {
            assert!((col.u[j] - 2.0 * j as f64 / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn shrinking_edge_follows_unit_characteristic() {
        let model = presets::zero();
        let mut k = Kernel::new(&model, 0.8, RightEdge::Characteristic);
        let mut col = Column {
            s: 0.0,
            xb: 1.0,
            u: vec![0.0; 11],
            v: vec![0.0; 11],
            x: vec![0.0],
        };
        for _ in 0..5 {
            let dt = k.stable_dt(&col);
            k.step(&mut col, dt);
        }
        assert!((col.xb - (1.0 - col.s)).abs() < 1e-14);
    }

    #[test]
    fn upwind_sides() {
        let w = [0.0, 1.0, 4.0];
        assert_eq!(upwind(-1.0, &w, 1, 1.0), -1.0);
        assert_eq!(upwind(1.0, &w, 1, 1.0), 3.0);
        assert_eq!(upwind(1.0, &w, 2, 1.0), 3.0);
        assert_eq!(upwind(0.0, &w, 2, 1.0), 0.0);
    }
}
