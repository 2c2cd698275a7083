//! Continuous-time predictive controller for semilinear plants.
//!
//! From the state at `t`, predict over `D(t)`, set the virtual input
//! `U* = K(X̄(τ), τ)` at the foot `τ = τᵛ(t;0)` of the characteristic, and
//! carry it back to `x = 1` along that characteristic by solving
//! `dv/dx = -fᵛ(x, ū, v)/λᵛ` with `ū` taken from the prediction.

use alloc::vec::Vec;

use crate::model::{ModelKind, SystemModel};
use crate::predictor::{predict_determinate, PredictOptions, Prediction};
use crate::simulator::PlantState;
use crate::xode::{lerp_nodes, rk4_sweep};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SemilinearOutput {
    /// Input to apply at the state's time.
    pub u: f64,
    /// Virtual input `U*(τᵛ(t;0))`.
    pub u_star: f64,
    /// `τᵛ(t;0)`.
    pub tau0: f64,
    /// `v̄*` along the characteristic, at the grid nodes.
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SemilinearController {
    model: SystemModel,
    pub predict: PredictOptions,
}

impl SemilinearController {
    pub fn new(model: SystemModel) -> Result<Self> {
        if model.kind() != ModelKind::Semilinear {
            return Err(Error::UnsupportedModel(
                "the continuous-time controller needs state-independent speeds".into(),
            ));
        }
        Ok(Self {
            model,
            predict: PredictOptions {
                derivatives: Some(false),
                ..PredictOptions::default()
            },
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn control(&self, state: &PlantState) -> Result<f64> {
        Ok(self.control_detail(state)?.u)
    }

    pub fn control_detail(&self, state: &PlantState) -> Result<SemilinearOutput> {
        let pred = predict_determinate(&self.model, state, &self.predict)?;
        let tau0 = pred.tau0();
        let u_star = self.model.feedback(pred.x_foot(), tau0);
        if !u_star.is_finite() {
            return Err(Error::Control(alloc::format!("K is not finite at s = {tau0}")));
        }
        let profile = target_profile(&self.model, &pred, u_star)?;
        Ok(SemilinearOutput {
            u: *profile.last().unwrap(),
            u_star,
            tau0,
            profile,
        })
    }
}

/// Integrates `dv/dx = -fᵛ/λᵛ` along the predicted characteristic from
/// `v(0) = v_left` to `x = 1`.
pub fn target_profile(model: &SystemModel, pred: &Prediction, v_left: f64) -> Result<Vec<f64>> {
    let xs = pred.curve.x();
    let ys = rk4_sweep(xs, [v_left], |x, y| {
        let u = lerp_nodes(xs, &pred.u_bar, x);
        [-model.f_v(x, u, y[0]) / model.lambda_v(x, u, y[0])]
    });
    let out: Vec<f64> = ys.into_iter().map(|y| y[0]).collect();
    if out.iter().any(|z| !z.is_finite()) {
        return Err(Error::Control("target profile is not finite".into()));
    }
    Ok(out)
}

/// The same ODE integrated from `x = 1` down to `x = 0`; returns `v(0)`.
pub fn target_foot(model: &SystemModel, pred: &Prediction, v_right: f64) -> f64 {
    let xs = pred.curve.x();
    let back: Vec<f64> = xs.iter().rev().copied().collect();
    let ys = rk4_sweep(&back, [v_right], |x, y| {
        let u = lerp_nodes(xs, &pred.u_bar, x);
        [-model.f_v(x, u, y[0]) / model.lambda_v(x, u, y[0])]
    });
    ys.last().unwrap()[0]
}
