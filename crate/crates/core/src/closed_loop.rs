//! Closed-loop runs: the plant driven by a predictive controller, from the
//! true state or from observer estimates.

use alloc::boxed::Box;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::model::SystemModel;
use crate::observer::{Observer, ObserverGuess, ObserverState};
use crate::quasilinear::{QuasilinearController, VirtualInputPlan};
use crate::semilinear::SemilinearController;
use crate::simulator::{InputSegment, Plant, PlantState, SimOptions, Trajectory};
use crate::{Error, Result};

/// How the input is chosen.
#[derive(Clone)]
pub enum Feedback {
    OpenLoop(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Re-evaluated at every plant step and held over it.
    Semilinear(SemilinearController),
    /// One segment per sampling interval.
    Quasilinear(QuasilinearController),
}

impl core::fmt::Debug for Feedback {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Feedback::OpenLoop(_) => f.write_str("OpenLoop"),
            Feedback::Semilinear(_) => f.write_str("Semilinear"),
            Feedback::Quasilinear(c) => write!(f, "Quasilinear(θ = {})", c.theta),
        }
    }
}

/// Output-feedback setup. Until `engage_at` the input is held at the value
/// of `v(1)` in the initial state while the observer converges.
#[derive(Debug, Clone)]
pub struct OutputFeedback {
    pub observer: Observer,
    pub guess: ObserverGuess,
    pub engage_at: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LoopOptions {
    pub sim: SimOptions,
    pub output: Option<OutputFeedback>,
}

/// Values after every plant step.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSample {
    pub t: f64,
    pub input: f64,
    /// `v(0,t)`.
    pub v0: f64,
    /// `Y(t) = u(1,t)`.
    pub y: f64,
    pub x: Vec<f64>,
}

/// A sampling interval of the quasilinear controller.
#[derive(Debug, Clone)]
pub struct PlanRecord {
    pub t_k: f64,
    /// Predicted times `[τᵛ(t_k;0), τᵛ(t_{k+1};0)]` at which the segment
    /// reaches `x = 0`.
    pub window: (f64, f64),
    pub plan: VirtualInputPlan,
    pub segment: InputSegment,
}

#[derive(Debug, Clone, Default)]
pub struct LoopRecord {
    pub trajectory: Trajectory,
    pub trace: Vec<LoopSample>,
    pub plans: Vec<PlanRecord>,
    /// Observer state and the current-state estimate at each snapshot.
    pub observer: Vec<ObserverState>,
    pub estimates: Vec<PlantState>,
    /// Controller or observer failure that ended the run early.
    pub failure: Option<Error>,
}

impl LoopRecord {
    /// `max |v(0,s) - U*(s)|` over recorded steps with `s ≥ from` that lie
    /// inside a planned window.
    pub fn virtual_input_residual(&self, from: f64) -> Option<f64> {
        let mut worst: Option<f64> = None;
        let mut k = 0;
        for smp in self.trace.iter().filter(|s| s.t >= from) {
            while k < self.plans.len() && self.plans[k].window.1 < smp.t {
                k += 1;
            }
            if k == self.plans.len() {
                break;
            }
            let p = &self.plans[k];
            if smp.t < p.window.0 {
                continue;
            }
            let r = (smp.v0 - p.plan.u_star(smp.t)).abs();
            worst = Some(worst.map_or(r, |w: f64| w.max(r)));
        }
        worst
    }

    /// `max(‖w‖∞, |X|)` at each snapshot.
    pub fn norms(&self) -> Vec<(f64, f64)> {
        self.trajectory
            .snapshots
            .iter()
            .map(|s| (s.t, s.norm_w().max(s.norm_x())))
            .collect()
    }
}

struct Estimator<'o> {
    cfg: &'o OutputFeedback,
    state: ObserverState,
}

/// Runs the loop from `state` to `t_end`.
pub fn run_closed_loop(
    model: &SystemModel,
    state: &PlantState,
    feedback: &Feedback,
    t_end: f64,
    opts: &LoopOptions,
) -> Result<LoopRecord> {
    let sim = &opts.sim;
    if !(sim.snapshot_dt > 0.0) || !(sim.cfl > 0.0 && sim.cfl <= 1.0) {
        return Err(Error::InvalidArgument("need snapshot_dt > 0 and 0 < cfl <= 1".into()));
    }
    if let Feedback::Quasilinear(c) = feedback {
        let ratio = c.theta / sim.snapshot_dt;
        if (ratio - libm::round(ratio)).abs() > 1e-9 || ratio < 0.5 {
            return Err(Error::InvalidArgument(
                "θ must be a multiple of the snapshot spacing".into(),
            ));
        }
    }
    let mut plant = Plant::new(model, state, sim.cfl)?;
    let n = state.u.len() - 1;
    let hold = state.v[n];
    let mut rec = LoopRecord::default();

    let mut est = match &opts.output {
        Some(cfg) => {
            let st = cfg.observer.init(state.t, &cfg.guess, state.u[n], hold)?;
            Some(Estimator { cfg, state: st })
        }
        None => None,
    };

    let t0 = state.t;
    let mut segment: Option<InputSegment> = None;
    let mut next_sample = t0;
    let mut snap_k = 0usize;
    let eps = 1e-12 * (1.0 + t_end.abs());

    let record_snapshot = |rec: &mut LoopRecord, plant: &Plant, input: f64, est: &Option<Estimator>| -> Result<()> {
        rec.trajectory.snapshots.push(plant.state());
        rec.trajectory.inputs.push(input);
        if let Some(e) = est {
            rec.observer.push(e.state.clone());
            rec.estimates.push(e.cfg.observer.estimate_current(&e.state)?);
        }
        Ok(())
    };
    if let Err(e) = record_snapshot(&mut rec, &plant, hold, &est) {
        rec.failure = Some(e);
        return Ok(rec);
    }

    let engaged = |t: f64, est: &Option<Estimator>| match est {
        Some(e) => t >= e.cfg.engage_at - eps,
        None => true,
    };
    // state handed to the controller: the plant's or the estimate
    let control_state = |plant: &Plant, est: &Option<Estimator>| -> Result<PlantState> {
        match est {
            Some(e) => {
                let mut s = e.cfg.observer.estimate_current(&e.state)?;
                s.t = plant.t();
                Ok(s)
            }
            None => Ok(plant.state()),
        }
    };

    'outer: while plant.t() < t_end - eps {
        let t = plant.t();
        let next_snap = t0 + (snap_k + 1) as f64 * sim.snapshot_dt;
        let mut stop = next_snap.min(t_end);

        // choose the input law for the next stretch
        let law: Box<dyn Fn(f64) -> f64> = if !engaged(t, &est) {
            if let Some(e) = &est {
                stop = stop.min(e.cfg.engage_at);
            }
            Box::new(move |_| hold)
        } else {
            match feedback {
                Feedback::OpenLoop(f) => {
                    let f = f.clone();
                    Box::new(move |s| f(s))
                }
                Feedback::Semilinear(c) => {
                    let u = match control_state(&plant, &est).and_then(|s| c.control(&s)) {
                        Ok(u) => u,
                        Err(e) => {
                            rec.failure = Some(e);
                            break 'outer;
                        }
                    };
                    stop = stop.min(t + plant.stable_dt());
                    Box::new(move |_| u)
                }
                Feedback::Quasilinear(c) => {
                    if segment.is_none() || t >= next_sample - eps {
                        let detail = control_state(&plant, &est).and_then(|s| c.control_interval_detail(&s));
                        let d = match detail {
                            Ok(d) => d,
                            Err(e) => {
                                rec.failure = Some(Error::Control(format!("at t = {t}: {e}")));
                                break 'outer;
                            }
                        };
                        rec.plans.push(PlanRecord {
                            t_k: t,
                            window: (d.target.foot[0], *d.target.foot.last().unwrap()),
                            plan: d.plan,
                            segment: d.segment.clone(),
                        });
                        segment = Some(d.segment);
                        next_sample = t + c.theta;
                    }
                    stop = stop.min(next_sample);
                    let seg = segment.clone().unwrap();
                    Box::new(move |s| seg.eval(s))
                }
            }
        };

        let mut obs_err: Option<Error> = None;
        let trace = &mut rec.trace;
        let est_ref = &mut est;
        let blowup = plant.advance_to(stop, &*law, &mut |p| {
            let tp = p.t();
            let input = law(tp);
            let y = *p.u().last().unwrap();
            trace.push(LoopSample {
                t: tp,
                input,
                v0: p.v()[0],
                y,
                x: p.x().to_vec(),
            });
            if let Some(e) = est_ref.as_mut() {
                if obs_err.is_none() {
                    let dt = tp - e.state.t;
                    match e.cfg.observer.step(&e.state, y, input, dt) {
                        Ok(s) => e.state = s,
                        Err(err) => obs_err = Some(err),
                    }
                }
            }
        });
        let current_input = law(plant.t());
        if let Some(b) = blowup {
            rec.trajectory.blowup = Some(b);
            let last = plant.state();
            if last.is_finite() {
                rec.trajectory.snapshots.push(last);
                rec.trajectory.inputs.push(current_input);
            }
            break;
        }
        if let Some(e) = obs_err {
            rec.failure = Some(e);
            break;
        }
        if plant.t() >= next_snap.min(t_end) - eps {
            snap_k += 1;
            if let Err(e) = record_snapshot(&mut rec, &plant, current_input, &est) {
                rec.failure = Some(e);
                break;
            }
        }
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Grid;
    use crate::observer::algebraic_ode_observer;
    use crate::presets;

    #[test]
    fn open_loop_matches_simulator() {
        let model = presets::paper_sec5(presets::Law::Stabilize);
        let grid = Grid::new(40).unwrap();
        let state = PlantState::initial(&presets::paper_sec5_initial(), &grid);
        let fb = Feedback::OpenLoop(Arc::new(|_| 1.0));
        let rec = run_closed_loop(&model, &state, &fb, 1.0, &LoopOptions::default()).unwrap();
        let sim = crate::simulator::simulate_from(&model, &state, &|_| 1.0, 1.0, &SimOptions::default()).unwrap();
        assert_eq!(rec.trajectory.snapshots.len(), sim.snapshots.len());
        assert_eq!(rec.trajectory.last(), sim.last());
    }

    #[test]
    fn zero_state_stays_zero_under_both_controllers() {
        let grid = Grid::new(20).unwrap();
        let state = PlantState::zero(&grid, 1);
        let q = QuasilinearController::new(presets::paper_sec5(presets::Law::Stabilize), 0.5, 1.0).unwrap();
        let s = SemilinearController::new(presets::paper_sec5_semilinear(presets::Law::Stabilize)).unwrap();
        for (model, fb) in [
            (presets::paper_sec5(presets::Law::Stabilize), Feedback::Quasilinear(q)),
            (
                presets::paper_sec5_semilinear(presets::Law::Stabilize),
                Feedback::Semilinear(s),
            ),
        ] {
            let rec = run_closed_loop(&model, &state, &fb, 1.0, &LoopOptions::default()).unwrap();
            assert!(rec.failure.is_none());
            assert!(rec.norms().iter().all(|&(_, n)| n == 0.0));
        }
    }

    #[test]
    fn theta_must_align_with_snapshots() {
        let grid = Grid::new(20).unwrap();
        let q = QuasilinearController::new(presets::paper_sec5(presets::Law::Stabilize), 0.33, 1.0).unwrap();
        let err = run_closed_loop(
            &presets::paper_sec5(presets::Law::Stabilize),
            &PlantState::zero(&grid, 1),
            &Feedback::Quasilinear(q),
            1.0,
            &LoopOptions::default(),
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn output_feedback_records_estimates() {
        let model = presets::paper_sec5(presets::Law::Stabilize);
        let grid = Grid::new(20).unwrap();
        let observer = Observer::new(model.clone(), algebraic_ode_observer(&model).unwrap());
        let opts = LoopOptions {
            output: Some(OutputFeedback {
                observer,
                guess: ObserverGuess::zero(&grid, 1),
                engage_at: 0.5,
            }),
            ..LoopOptions::default()
        };
        let q = QuasilinearController::new(model.clone(), 0.5, 1.0).unwrap();
        let state = PlantState::zero(&grid, 1);
        let rec = run_closed_loop(&model, &state, &Feedback::Quasilinear(q), 1.0, &opts).unwrap();
        assert!(rec.failure.is_none());
        assert_eq!(rec.estimates.len(), rec.trajectory.snapshots.len());
        assert_eq!(rec.plans.len(), 1);
        assert_eq!(rec.plans[0].t_k, 0.5);
    }
}
