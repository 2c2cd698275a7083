//! The three simulation-study scenarios and their pass/fail criteria.

use std::fmt::Write as _;
use std::path::Path;
use std::thread;

use hyperpred_core::presets;

use crate::config::{self, Overrides};
use crate::run::{self, RunReport};

pub const OPEN_LOOP: &str = include_str!("../configs/paper-sec5-openloop.toml");
pub const STABILIZATION: &str = include_str!("../configs/paper-sec5-stabilization.toml");
pub const TRACKING: &str = include_str!("../configs/paper-sec5-tracking.toml");

/// Window in which the open-loop solution must escape.
pub const BLOWUP_WINDOW: (f64, f64) = (3.1, 4.1);
/// Final `max(‖w‖∞, |X|)` bound, absolute and relative to the peak.
pub const STABILIZATION_BOUND: f64 = 0.05;
pub const TRACKING_FROM: f64 = 10.0;
pub const TRACKING_BOUND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Criterion {
    BlowupWindow,
    Decay,
    Tracking,
}

const SCENARIOS: [(&str, &str, Criterion); 3] = [
    ("paper-sec5-openloop", OPEN_LOOP, Criterion::BlowupWindow),
    ("paper-sec5-stabilization", STABILIZATION, Criterion::Decay),
    ("paper-sec5-tracking", TRACKING, Criterion::Tracking),
];

#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: &'static str,
    pub criterion: &'static str,
    pub passed: bool,
    pub detail: String,
    pub summary: String,
}

fn judge(criterion: Criterion, rep: &RunReport) -> (bool, String) {
    if let Some(f) = &rep.failure {
        return (false, format!("numerical failure: {f}"));
    }
    match criterion {
        Criterion::BlowupWindow => match rep.blowup {
            Some(b) => {
                let (lo, hi) = BLOWUP_WINDOW;
                (
                    (lo..=hi).contains(&b.t),
                    format!("blow-up at t = {:.4} ({:?}), window [{lo}, {hi}]", b.t, b.trigger),
                )
            }
            None => (false, format!("no blow-up before t = {:.3}", rep.t_reached)),
        },
        Criterion::Decay => {
            if let Some(b) = rep.blowup {
                return (false, format!("blow-up at t = {:.4}", b.t));
            }
            let last = rep.final_norm_w.max(rep.final_norm_x);
            (
                last <= STABILIZATION_BOUND && last <= STABILIZATION_BOUND * rep.peak,
                format!(
                    "max(|w|,|X|) at t = {:.1} is {last:.3e}, peak {:.3e}; bound {STABILIZATION_BOUND} and 5% of peak",
                    rep.t_reached, rep.peak
                ),
            )
        }
        Criterion::Tracking => {
            if let Some(b) = rep.blowup {
                return (false, format!("blow-up at t = {:.4}", b.t));
            }
            match rep.tracking_error_after(&presets::default_reference, TRACKING_FROM) {
                Some(e) => (
                    e <= TRACKING_BOUND,
                    format!("max |X - X_ref| for t >= {TRACKING_FROM} is {e:.4e}; bound {TRACKING_BOUND}"),
                ),
                None => (
                    false,
                    format!("run ends at t = {:.3}, before t = {TRACKING_FROM}", rep.t_reached),
                ),
            }
        }
    }
}

fn label(c: Criterion) -> &'static str {
    match c {
        Criterion::BlowupWindow => "open-loop blow-up time",
        Criterion::Decay => "stabilization",
        Criterion::Tracking => "reference tracking",
    }
}

/// Runs the three scenarios in parallel, each writing into `out/<name>`.
pub fn reproduce(out: &Path, ov: &Overrides) -> Vec<Outcome> {
    thread::scope(|scope| {
        let handles: Vec<_> = SCENARIOS
            .iter()
            .map(|&(name, text, criterion)| {
                let ov = Overrides {
                    out_dir: Some(out.join(name)),
                    ..ov.clone()
                };
                scope.spawn(move || {
                    let fail = |detail: String| Outcome {
                        name,
                        criterion: label(criterion),
                        passed: false,
                        summary: detail.clone(),
                        detail,
                    };
                    let cfg = match config::parse(text, &ov) {
                        Ok(c) => c,
                        Err(e) => return fail(format!("config error: {e}")),
                    };
                    match run::run(&cfg) {
                        Ok(rep) => {
                            let (passed, detail) = judge(criterion, &rep);
                            Outcome {
                                name,
                                criterion: label(criterion),
                                passed,
                                detail,
                                summary: rep.summary_line(),
                            }
                        }
                        Err(e) => fail(e.to_string()),
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

/// Markdown pass/fail table.
pub fn report(outcomes: &[Outcome], ov: &Overrides) -> String {
    let mut s = String::from("# Simulation study\n\n");
    if ov.grid_n.is_some() || ov.t_end.is_some() {
        let _ = writeln!(s, "Overrides: grid N = {:?}, t_end = {:?}.\n", ov.grid_n, ov.t_end);
    }
    s += "| scenario | criterion | result | detail |\n|---|---|---|---|\n";
    for o in outcomes {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            o.name,
            o.criterion,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_configs_parse_with_the_study_settings() {
        for (name, text, _) in SCENARIOS {
            let c = config::parse(text, &Overrides::default()).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(c.grid_n, 100, "{name}");
            assert_eq!(c.model_name, "paper-sec5");
        }
        let s = config::parse(STABILIZATION, &Overrides::default()).unwrap();
        assert_eq!((s.controller.theta, s.controller.delta, s.t_end), (0.5, 1.0, 20.0));
    }

    #[test]
    fn tracking_config_uses_the_default_reference() {
        let c = config::parse(TRACKING, &Overrides::default()).unwrap();
        let r = c.reference.unwrap();
        for t in [0.0, 1.3, 7.9, 19.0] {
            assert!((r(t) - presets::default_reference(t)).abs() < 1e-15);
        }
    }
}
