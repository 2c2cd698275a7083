//! Characteristic transit times and determinate-set geometry.
//!
//! A curve stores `s(x)` on a set of increasing nodes. For the `v` family
//! `s(x) = t + ∫ₓ¹ dξ/λᵛ` (the time the leftward characteristic leaving
//! `x = 1` at `t` reaches `x`); for the `u` family `s(x) = t + ∫₀ˣ dξ/λᵘ`;
//! the measurement family runs the `u` characteristic backwards from
//! `x = 1`, `s(x) = t - ∫ₓ¹ dξ/λᵘ`.

use alloc::vec::Vec;

use crate::model::{Grid, SystemModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Rightward characteristic starting at `x = 0`; `s` increases with `x`.
    U,
    /// Leftward characteristic starting at `x = 1`; `s` decreases with `x`.
    V,
    /// Rightward characteristic arriving at `x = 1`; `s` increases with `x`.
    UBackward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharCurve {
    pub t: f64,
    pub family: Family,
    x: Vec<f64>,
    s: Vec<f64>,
}

impl CharCurve {
    /// Builds a curve from node values. `s` must be strictly monotone in the
    /// direction implied by `family`.
    pub fn from_values(t: f64, family: Family, x: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if x.len() != s.len() || x.len() < 2 {
            return Err(Error::InvalidArgument(
                "curve needs matching node and time arrays".into(),
            ));
        }
        let increasing = family != Family::V;
        for k in 1..x.len() {
            let ok_x = x[k] > x[k - 1];
            let ok_s = if increasing { s[k] > s[k - 1] } else { s[k] < s[k - 1] };
            if !ok_x || !ok_s {
                return Err(Error::InvalidArgument(alloc::format!(
                    "curve is not strictly monotone near x = {}",
                    x[k]
                )));
            }
        }
        Ok(Self { t, family, x, s })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// `s(0)` for the `v` family, the foot of the characteristic.
    pub fn at_left(&self) -> f64 {
        self.s[0]
    }

    pub fn at_right(&self) -> f64 {
        *self.s.last().unwrap()
    }

    /// Range of `s` values covered by the curve.
    pub fn s_range(&self) -> (f64, f64) {
        let (a, b) = (self.s[0], self.at_right());
        (a.min(b), a.max(b))
    }

    /// Linear interpolation of `s` at `x`, clamped to the node range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.s[0];
        }
        if x >= self.x[n - 1] {
            return self.s[n - 1];
        }
        let k = self.x.partition_point(|&xi| xi <= x) - 1;
        let w = (x - self.x[k]) / (self.x[k + 1] - self.x[k]);
        self.s[k] + w * (self.s[k + 1] - self.s[k])
    }

    /// Slope `ds/dx` on the cell containing `x`.
    pub fn slope(&self, x: f64) -> f64 {
        let n = self.x.len();
        let k = self.x.partition_point(|&xi| xi <= x).clamp(1, n - 1) - 1;
        (self.s[k + 1] - self.s[k]) / (self.x[k + 1] - self.x[k])
    }
}

/// Returns `x` with `s(x) = s` by linear interpolation between nodes.
pub fn invert_curve(curve: &CharCurve, s: f64) -> Result<f64> {
    let (lo, hi) = curve.s_range();
    let slack = 1e-12 * (1.0 + s.abs());
    if !(s >= lo - slack && s <= hi + slack) {
        return Err(Error::Range { s, lo, hi });
    }
    let s = s.clamp(lo, hi);
    let xs = &curve.x;
    let ss = &curve.s;
    let n = xs.len();
    // Index of the first node past `s` in the direction of increasing s.
    let k = match curve.family {
        Family::V => ss.partition_point(|&si| si > s),
        _ => ss.partition_point(|&si| si < s),
    };
    if k < n && ss[k] == s {
        return Ok(xs[k]);
    }
    if k == 0 {
        return Ok(xs[0]);
    }
    if k >= n {
        return Ok(xs[n - 1]);
    }
    let w = (s - ss[k - 1]) / (ss[k] - ss[k - 1]);
    Ok(xs[k - 1] + w * (xs[k] - xs[k - 1]))
}

/// Cumulative `∫₀^{x_i} 1/λ` over nodes, Simpson's rule per cell with the
/// speed at the cell midpoint supplied separately.
pub(crate) fn cumulative_slowness(x: &[f64], speed: &[f64], speed_mid: &[f64]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(x.len());
    acc.push(0.0);
    let mut total = 0.0;
    for i in 0..x.len() - 1 {
        let h = x[i + 1] - x[i];
        total += h / 6.0 * (1.0 / speed[i] + 4.0 / speed_mid[i] + 1.0 / speed[i + 1]);
        acc.push(total);
    }
    acc
}

/// Builds a curve of the given family from speeds at nodes and midpoints.
pub fn transit_from_speeds(t: f64, family: Family, x: &[f64], speed: &[f64], speed_mid: &[f64]) -> Result<CharCurve> {
    for (i, &l) in speed.iter().enumerate() {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Characteristic { x: x[i] });
        }
    }
    for (i, &l) in speed_mid.iter().enumerate() {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Characteristic {
                x: 0.5 * (x[i] + x[i + 1]),
            });
        }
    }
    let acc = cumulative_slowness(x, speed, speed_mid);
    let total = *acc.last().unwrap();
    let s = match family {
        Family::U => acc.iter().map(|a| t + a).collect(),
        Family::V => acc.iter().map(|a| t + (total - a)).collect(),
        Family::UBackward => acc.iter().map(|a| t - (total - a)).collect(),
    };
    Ok(CharCurve {
        t,
        family,
        x: x.to_vec(),
        s,
    })
}

/// Transit times with the speeds frozen at a state field `(u, v)` on the grid
/// (zero field if `None`). Exact up to quadrature for semilinear models.
pub fn frozen_transit(
    model: &SystemModel,
    grid: &Grid,
    t: f64,
    family: Family,
    field: Option<(&[f64], &[f64])>,
) -> Result<CharCurve> {
    let nodes = grid.nodes();
    let n = nodes.len();
    let zeros = alloc::vec![0.0; n];
    let (u, v) = field.unwrap_or((&zeros, &zeros));
    if u.len() != n || v.len() != n {
        return Err(Error::InvalidArgument("field length does not match the grid".into()));
    }
    let speed_fn = |x: f64, a: f64, b: f64| match family {
        Family::V => model.lambda_v(x, a, b),
        _ => model.lambda_u(x, a, b),
    };
    let speed: Vec<f64> = (0..n).map(|i| speed_fn(nodes[i], u[i], v[i])).collect();
    let mid: Vec<f64> = (0..n - 1)
        .map(|i| {
            speed_fn(
                0.5 * (nodes[i] + nodes[i + 1]),
                0.5 * (u[i] + u[i + 1]),
                0.5 * (v[i] + v[i + 1]),
            )
        })
        .collect();
    transit_from_speeds(t, family, &nodes, &speed, &mid)
}

/// Space-time region bounded by a characteristic curve and the line `s = t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterminateSet {
    pub curve: CharCurve,
    /// Excludes the curve itself.
    pub half_open: bool,
}

impl DeterminateSet {
    pub fn new(curve: CharCurve, half_open: bool) -> Self {
        Self { curve, half_open }
    }

    /// `D(t)`: `t ≤ s ≤ τᵛ(t;x)` for the `v` family; `B(t)`:
    /// `τ̂ᵘ(t;x) ≤ s ≤ t` for the measurement family.
    pub fn contains(&self, x: f64, s: f64) -> bool {
        if !(0.0..=1.0).contains(&x) {
            return false;
        }
        let t = self.curve.t;
        let edge = self.curve.eval(x);
        match self.curve.family {
            Family::UBackward => (if self.half_open { s > edge } else { s >= edge }) && s <= t,
            _ => s >= t && (if self.half_open { s < edge } else { s <= edge }),
        }
    }
}
