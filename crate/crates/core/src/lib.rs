//! Numerical core for predictive boundary control of 2x2 hyperbolic PDEs
//! coupled to a nonlinear ODE at the uncontrolled boundary.
//!
//! The plant is
//!
//! ```text
//! u_t = -λᵘ(x,u,v) u_x + fᵘ(x,u,v)        u(0,t) = g⁰(X, v(0,t), t)
//! v_t =  λᵛ(x,u,v) v_x + fᵛ(x,u,v)        v(1,t) = U(t)
//! X'  =  f⁰(X, v(0,t), t)
//! ```
//!
//! on `x ∈ [0,1]`. The crate provides a method-of-lines simulator, predictors
//! over the determinate sets of the system, the semilinear (continuous-time)
//! and quasilinear (sampled, ramped virtual input) controllers, and boundary
//! observers that reconstruct `(u, v, X)` from `Y(t) = u(1,t)`.
//!
//! Everything here is `no_std` with `alloc`; file formats, configuration and
//! the command line live in the `hyperpred` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod characteristics;
pub mod closed_loop;
mod error;
mod kernel;
pub mod model;
pub mod observer;
pub mod predictor;
pub mod presets;
pub mod quasilinear;
pub mod semilinear;
pub mod simulator;
mod xode;

pub use error::{Error, Result};
pub use model::{Grid, InitialData, ModelKind, Scenario, SystemModel};
pub use simulator::{InputSegment, PlantState, Trajectory};
