use std::f64::consts::PI;

use hyperpred_core::presets::{self, Law};
use hyperpred_core::simulator::{simulate, BlowupTrigger, Plant, SimOptions};
use hyperpred_core::{Grid, InitialData, PlantState};
use proptest::prelude::*;

fn one_step(plant: &mut Plant, input: &dyn Fn(f64) -> f64) {
    let t = plant.t() + plant.stable_dt();
    plant.advance_to(t, input, &mut |_| {});
}

#[test]
fn input_reaches_only_the_numerical_domain_of_dependence() {
    // Each of the two Runge-Kutta stages moves information one cell, so after
    // k steps the input can only have touched the last 2k nodes. State
    // independent speeds keep both runs on the same step sizes.
    let model = presets::paper_sec5_semilinear(Law::Stabilize);
    let n = 100;
    let state = PlantState::initial(&presets::paper_sec5_initial(), &Grid::new(n).unwrap());
    let low = |_: f64| 1.0;
    let high = |t: f64| -1.0 + (3.0 * t).sin();
    let mut a = Plant::new(&model, &state, 0.8).unwrap();
    let mut b = Plant::new(&model, &state, 0.8).unwrap();
    for k in 1..=n / 2 {
        one_step(&mut a, &low);
        one_step(&mut b, &high);
        assert_eq!(a.t(), b.t());
        let untouched = n + 1 - 2 * k;
        assert_eq!(a.u()[..untouched], b.u()[..untouched], "step {k}");
        assert_eq!(a.v()[..untouched], b.v()[..untouched], "step {k}");
        assert_eq!(a.x(), b.x(), "step {k}");
        assert_ne!(a.v()[n - 1], b.v()[n - 1]);
    }
}

#[test]
fn runs_are_bit_identical() {
    let model = presets::paper_sec5(Law::Stabilize);
    let grid = Grid::new(40).unwrap();
    let init = presets::paper_sec5_initial();
    let opts = SimOptions::default();
    let a = simulate(&model, &init, &grid, &|t| 0.5 * t.cos(), 2.0, &opts).unwrap();
    let b = simulate(&model, &init, &grid, &|t| 0.5 * t.cos(), 2.0, &opts).unwrap();
    assert_eq!(a, b);
}

/// Unit-speed transport without sources: `d/dt ∫u = u(0) - u(1)` and
/// `d/dt ∫v = v(1) - v(0)`; the discrete mass follows the boundary fluxes.
fn flux_gap(n: usize) -> f64 {
    let model = presets::advection();
    let grid = Grid::new(n).unwrap();
    let init = InitialData::new(|x| (PI * x).sin().powi(2), |x| (PI * x).cos(), vec![0.0]);
    let state = PlantState::initial(&init, &grid);
    let mass = |u: &[f64]| {
        let dx = 1.0 / n as f64;
        dx * (u.iter().sum::<f64>() - 0.5 * (u[0] + u[n]))
    };
    let input = |t: f64| -(PI * t).cos();
    let mut plant = Plant::new(&model, &state, 0.8).unwrap();
    let (mut flux_u, mut flux_v) = (0.0, 0.0);
    let mut prev = state.clone();
    plant.advance_to(2.0, &input, &mut |p| {
        let dt = p.t() - prev.t;
        flux_u += 0.5 * dt * ((prev.u[0] - prev.u[n]) + (p.u()[0] - p.u()[n]));
        flux_v += 0.5 * dt * ((prev.v[n] - prev.v[0]) + (p.v()[n] - p.v()[0]));
        prev = p.state();
    });
    let du = mass(plant.u()) - mass(&state.u) - flux_u;
    let dv = mass(plant.v()) - mass(&state.v) - flux_v;
    du.abs().max(dv.abs())
}

#[test]
fn mass_changes_by_boundary_fluxes() {
    let (a, b) = (flux_gap(50), flux_gap(100));
    assert!(a < 1.0 / 50.0, "{a}");
    assert!(b < 1.0 / 100.0, "{b}");
    assert!(b < 0.75 * a, "{a} -> {b}");
}

#[test]
fn open_loop_escape_is_flagged() {
    let model = presets::paper_sec5(Law::Stabilize);
    let grid = Grid::new(50).unwrap();
    let traj = simulate(
        &model,
        &presets::paper_sec5_initial(),
        &grid,
        &|_| 1.0,
        6.0,
        &SimOptions::default(),
    )
    .unwrap();
    let rec = traj.blowup.expect("open loop escapes");
    assert!((3.1..=4.1).contains(&rec.t), "{}", rec.t);
    assert!(matches!(rec.trigger, BlowupTrigger::Gradient | BlowupTrigger::Norm));
    // partial trajectory up to the escape
    assert!(traj.last().t <= rec.t + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The transport model is linear, so scaling the data and the input
    /// scales the solution.
    #[test]
    fn transport_is_linear(scale in -3.0f64..3.0, phase in 0.0f64..6.0) {
        let model = presets::advection();
        let grid = Grid::new(30).unwrap();
        let opts = SimOptions::default();
        let base = InitialData::new(move |x| (x + phase).sin(), move |x| (2.0 * x - phase).cos(), vec![0.0]);
        let scaled = InitialData::new(move |x| scale * (x + phase).sin(), move |x| scale * (2.0 * x - phase).cos(), vec![0.0]);
        let a = simulate(&model, &base, &grid, &|t| t.sin(), 1.5, &opts).unwrap();
        let b = simulate(&model, &scaled, &grid, &|t| scale * t.sin(), 1.5, &opts).unwrap();
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            prop_assert_eq!(sa.t, sb.t);
            for (p, q) in sa.u.iter().chain(&sa.v).zip(sb.u.iter().chain(&sb.v)) {
                prop_assert!((scale * p - q).abs() <= 1e-12 * (1.0 + q.abs()));
            }
        }
    }

    /// Snapshots are regular and strictly increasing for any cadence.
    #[test]
    fn snapshot_times_increase(dt in 0.01f64..0.7, t_end in 0.1f64..2.0) {
        let grid = Grid::new(10).unwrap();
        let opts = SimOptions { snapshot_dt: dt, ..SimOptions::default() };
        let traj = simulate(&presets::zero(), &InitialData::zero(1), &grid, &|_| 0.0, t_end, &opts).unwrap();
        for w in traj.snapshots.windows(2) {
            prop_assert!(w[1].t > w[0].t);
        }
        prop_assert!((traj.last().t - t_end).abs() < 1e-12);
        prop_assert_eq!(traj.inputs.len(), traj.snapshots.len());
    }
}
