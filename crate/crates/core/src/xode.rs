//! Classical RK4 across `x` for the boundary-value sweeps of the controllers
//! and observers.

use alloc::vec::Vec;

/// Integrates `y' = f(x, y)` through the given nodes (increasing or
/// decreasing), one RK4 step per interval. Returns `y` at every node.
pub(crate) fn rk4_sweep<const K: usize>(
    nodes: &[f64],
    y0: [f64; K],
    mut f: impl FnMut(f64, &[f64; K]) -> [f64; K],
) -> Vec<[f64; K]> {
    let mut out = Vec::with_capacity(nodes.len());
    out.push(y0);
    let mut y = y0;
    for w in nodes.windows(2) {
        let (x, h) = (w[0], w[1] - w[0]);
        let k1 = f(x, &y);
        let k2 = f(x + 0.5 * h, &axpy(&y, 0.5 * h, &k1));
        let k3 = f(x + 0.5 * h, &axpy(&y, 0.5 * h, &k2));
        let k4 = f(x + h, &axpy(&y, h, &k3));
        for j in 0..K {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        out.push(y);
    }
    out
}

#[inline]
fn axpy<const K: usize>(y: &[f64; K], a: f64, k: &[f64; K]) -> [f64; K] {
    let mut r = *y;
    for j in 0..K {
        r[j] += a * k[j];
    }
    r
}

/// Piecewise-linear interpolation of nodal values on a uniform grid of `[0, 1]`.
#[inline]
pub(crate) fn lerp_uniform(values: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let r = (x * n as f64).clamp(0.0, n as f64);
    let k = (r as usize).min(n - 1);
    let w = r - k as f64;
    values[k] + w * (values[k + 1] - values[k])
}

/// Piecewise-linear interpolation on increasing nodes, clamped at the ends.
pub(crate) fn lerp_nodes(xs: &[f64], values: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return values[0];
    }
    if x >= xs[n - 1] {
        return values[n - 1];
    }
    let k = xs.partition_point(|&a| a <= x) - 1;
    let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
    values[k] + w * (values[k + 1] - values[k])
}
