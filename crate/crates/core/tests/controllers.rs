use hyperpred_core::closed_loop::{run_closed_loop, Feedback, LoopOptions};
use hyperpred_core::presets::{self, Law};
use hyperpred_core::quasilinear::QuasilinearController;
use hyperpred_core::semilinear::SemilinearController;
use hyperpred_core::{Grid, PlantState};

// The reference data start with U(0) ≠ v(1,0); the jump reaches x = 0 at s = 1
// and its smeared front has passed by s = 1.2.
const AFTER_FRONT: f64 = 1.2;

fn semilinear_residual(n: usize) -> f64 {
    let model = presets::paper_sec5_semilinear(Law::Stabilize);
    let state = PlantState::initial(&presets::paper_sec5_initial(), &Grid::new(n).unwrap());
    let ctl = Feedback::Semilinear(SemilinearController::new(model.clone()).unwrap());
    let rec = run_closed_loop(&model, &state, &ctl, 4.0, &LoopOptions::default()).unwrap();
    assert!(rec.failure.is_none() && rec.trajectory.blowup.is_none());
    rec.trace
        .iter()
        .filter(|s| s.t >= AFTER_FRONT)
        .map(|s| (s.v0 - model.feedback(&s.x, s.t)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn semilinear_loop_realizes_the_feedback_law_at_the_boundary() {
    let (a, b) = (semilinear_residual(50), semilinear_residual(100));
    assert!(a < 4.0 / 50.0, "{a}");
    assert!(b < 4.0 / 100.0, "{b}");
    let r = b / a;
    assert!((0.4..=0.6).contains(&r), "ratio {r}");
}

fn reduction_gap(n: usize) -> f64 {
    let model = presets::paper_sec5_semilinear(Law::Stabilize);
    let state = PlantState::initial(&presets::paper_sec5_initial(), &Grid::new(n).unwrap());
    // a steep ramp makes the sampled law follow K almost at once
    let q = QuasilinearController::new(model.clone(), 0.5, 100.0).unwrap();
    let s = SemilinearController::new(model.clone()).unwrap();
    let rec = run_closed_loop(&model, &state, &Feedback::Quasilinear(q), 3.0, &LoopOptions::default()).unwrap();
    assert!(rec.failure.is_none() && rec.trajectory.blowup.is_none());
    rec.trajectory
        .snapshots
        .iter()
        .zip(&rec.trajectory.inputs)
        .filter(|(snap, _)| snap.t >= 1.0)
        .map(|(snap, u)| (s.control(snap).unwrap() - u).abs())
        .fold(0.0, f64::max)
}

#[test]
fn sampled_law_reduces_to_the_continuous_one_for_fixed_speeds() {
    let (a, b) = (reduction_gap(50), reduction_gap(100));
    assert!(a < 10.0 / 50.0, "{a}");
    assert!(b < 10.0 / 100.0, "{b}");
    let r = b / a;
    assert!((0.375..=0.625).contains(&r), "ratio {r}");
}

#[test]
fn reference_plans_switch_in_finite_time() {
    let model = presets::paper_sec5(Law::Stabilize);
    let state = PlantState::initial(&presets::paper_sec5_initial(), &Grid::new(50).unwrap());
    let delta = 1.0;
    let q = QuasilinearController::new(model.clone(), 0.5, delta).unwrap();
    let rec = run_closed_loop(&model, &state, &Feedback::Quasilinear(q), 8.0, &LoopOptions::default()).unwrap();
    assert!(rec.failure.is_none() && rec.trajectory.blowup.is_none());
    assert_eq!(rec.plans.len(), 16);
    for p in &rec.plans {
        let plan = &p.plan;
        let ts = plan.switch_time.expect("ramp meets K within the interval");
        assert!(ts >= plan.tau_k);
        // exact ramp slope before the switch, continuity across it
        let mut s = plan.tau_k;
        while s < ts {
            assert_eq!(plan.u_star_rate(s), delta * plan.error.signum());
            s += 0.01;
        }
        let jump = (plan.u_star(ts - 1e-9) - plan.u_star(ts)).abs();
        assert!(jump < 1e-6, "jump {jump} at {ts}");
        // once transients settle, only a sliver of each window is on the ramp
        if p.t_k >= 2.0 {
            assert!(
                ts - p.window.0 < 0.05 * 0.5,
                "t_k = {}: {} .. {}",
                p.t_k,
                p.window.0,
                ts
            );
        }
    }
}
