use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::thresholds::{nearest, poly_at};
use super::{routh_hurwitz_stable, Parameter};
use crate::equilibria::{coexistence_locations, SearchOptions};
use crate::error::{Error, Result};
use crate::model::{eval_jacobian, ModelParams, State};
use crate::ode::{integrate_visit, IntegrateOptions, Scheme};
use crate::parallel::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criticality {
    Supercritical,
    Subcritical,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    /// Relative offset from the threshold; scaled by `max(|threshold|, 1)`.
    pub delta: f64,
    /// Displacement in `c` for the small-kick runs.
    pub displacement: f64,
    /// Displacement in `c` for the large-kick run on the stable side.
    pub large_displacement: f64,
    pub dt: f64,
    pub t_max: f64,
    /// Length of the windows over which peak-to-peak amplitudes are compared.
    pub window: f64,
    /// Peak-to-peak amplitude in `c` counted as escape.
    pub amplitude_cap: f64,
    /// Relative agreement of successive window amplitudes for a settled cycle.
    pub settle_tol: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            delta: 1e-3,
            displacement: 1e-3,
            large_displacement: 0.2,
            dt: 1e-2,
            t_max: 6000.0,
            window: 500.0,
            amplitude_cap: 0.5,
            settle_tol: 0.05,
            exec: Execution::default(),
        }
    }
}

/// What a single probe run did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RunOutcome {
    /// Returned to the equilibrium.
    Decay { amplitude: f64 },
    /// Settled on a bounded oscillation below the amplitude cap.
    SmallCycle { amplitude: f64 },
    /// Reached extinction or exceeded the amplitude cap.
    Escape { time: f64, extinct: bool },
    /// No verdict within the horizon.
    Unsettled { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub verdict: Criticality,
    pub threshold: f64,
    pub stable_value: f64,
    pub unstable_value: f64,
    pub stable_small: RunOutcome,
    pub stable_large: RunOutcome,
    pub unstable_small: RunOutcome,
}

/// `growth` is the linear growth rate at the equilibrium; a cycle only counts
/// as settled once window amplitudes agree far better than linear growth
/// would allow.
fn run(p: &ModelParams, ic: State, growth: f64, opts: &ProbeOptions) -> Result<RunOutcome> {
    let linear = (growth.max(0.0) * opts.window).exp_m1();
    let tol = if linear > 0.0 {
        opts.settle_tol.min(0.2 * linear).max(1e-6)
    } else {
        opts.settle_tol
    };
    let io = IntegrateOptions {
        dt: opts.dt,
        t_end: opts.t_max,
        record_stride: 1,
        scheme: Scheme::Rk4,
        ..Default::default()
    };
    let per_window = (opts.window / opts.dt).round().max(1.0) as usize;
    let mut amps: Vec<f64> = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut k = 0usize;
    let mut outcome = None;
    let events = integrate_visit(p, &ic, &io, |t, s| {
        lo = lo.min(s.c);
        hi = hi.max(s.c);
        if hi - lo >= opts.amplitude_cap {
            outcome = Some(RunOutcome::Escape {
                time: t,
                extinct: false,
            });
            return ControlFlow::Break(());
        }
        if s.c < io.extinction_threshold
            && s.u < io.extinction_threshold
            && s.v < io.extinction_threshold
        {
            outcome = Some(RunOutcome::Escape {
                time: t,
                extinct: true,
            });
            return ControlFlow::Break(());
        }
        k += 1;
        if k % per_window == 0 {
            let a = hi - lo;
            amps.push(a);
            lo = f64::INFINITY;
            hi = f64::NEG_INFINITY;
            if let [.., a0, a1, a2] = amps[..] {
                if a2 < 1e-2 * amps[0] || (a2 < a1 && a1 < a0 && a2 < 1e-6) {
                    outcome = Some(RunOutcome::Decay { amplitude: a2 });
                    return ControlFlow::Break(());
                }
                let close = |x: f64, y: f64| (x - y).abs() <= tol * x.max(y);
                if close(a1, a2) && close(a0, a1) && a2 > 1e-2 * amps[0] {
                    outcome = Some(RunOutcome::SmallCycle { amplitude: a2 });
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = events.first() {
        if e.kind == crate::ode::EventKind::Blowup {
            return Ok(RunOutcome::Escape {
                time: e.time,
                extinct: false,
            });
        }
    }
    Ok(outcome.unwrap_or_else(|| {
        let last = amps.last().copied().unwrap_or(0.0);
        let first = amps.first().copied().unwrap_or(0.0);
        if last < 0.1 * first {
            RunOutcome::Decay { amplitude: last }
        } else {
            RunOutcome::Unsettled { amplitude: last }
        }
    }))
}

pub fn criticality_probe(p: &ModelParams, which: Parameter, threshold: f64) -> Result<Criticality> {
    criticality_probe_with(p, which, threshold, &ProbeOptions::default()).map(|r| r.verdict)
}

/// Simulate on both sides of a Hopf threshold.
///
/// A cycle that settles below `amplitude_cap` on the unstable side, with decay
/// on the stable side, is supercritical. Escape from a small kick on the
/// unstable side, with decay on the stable side, is subcritical: no small
/// stable cycle exists there.
pub fn criticality_probe_with(
    p: &ModelParams,
    which: Parameter,
    threshold: f64,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    if !(opts.delta > 0.0 && opts.dt > 0.0 && opts.window > 0.0 && opts.t_max >= 3.0 * opts.window)
    {
        return Err(Error::config(
            "probe needs delta, dt, window > 0 and t_max >= 3 window",
        ));
    }
    let search = SearchOptions::default();
    let at_threshold = which.set(p, threshold);
    let mut best: Option<(f64, State)> = None;
    for s in coexistence_locations(&at_threshold, &search)? {
        let cp = poly_at(&at_threshold, &s)?;
        let h = cp.hopf_function().abs();
        if cp.p1 > 0.0 && best.map_or(true, |(bh, _)| h < bh) {
            best = Some((h, s));
        }
    }
    let (_, anchor) = best.ok_or_else(|| Error::Branch {
        at: threshold,
        reason: "no coexistence equilibrium at the threshold".into(),
    })?;
    let d = opts.delta * threshold.abs().max(1.0);
    let side = |x: f64| -> Result<(ModelParams, State, bool, f64)> {
        let q = which.set(p, x);
        let s = nearest(&coexistence_locations(&q, &search)?, &anchor, 0.25).ok_or_else(|| {
            Error::Branch {
                at: x,
                reason: "equilibrium branch missing next to the threshold".into(),
            }
        })?;
        let stable = routh_hurwitz_stable(&poly_at(&q, &s)?);
        let growth = eval_jacobian(&q, &s)?.eigenvalues()[0].re;
        Ok((q, s, stable, growth))
    };
    let lower = side(threshold - d)?;
    let upper = side(threshold + d)?;
    let ((qs, ss, _, _), (qu, su, _, gu), xs, xu) = match (lower.2, upper.2) {
        (true, false) => (lower, upper, threshold - d, threshold + d),
        (false, true) => (upper, lower, threshold + d, threshold - d),
        _ => {
            return Err(Error::NotHopf {
                at: threshold,
                p1: poly_at(&at_threshold, &anchor)?.p1,
            })
        }
    };
    let runs = [
        (qs, ss.offset(opts.displacement, 0.0, 0.0), 0.0),
        (qs, ss.offset(opts.large_displacement, 0.0, 0.0), 0.0),
        (qu, su.offset(opts.displacement, 0.0, 0.0), gu),
    ];
    let out = opts.exec.map(&runs, |(q, ic, g)| run(q, *ic, *g, opts));
    let mut out = out.into_iter();
    let stable_small = out.next().unwrap()?;
    let stable_large = out.next().unwrap()?;
    let unstable_small = out.next().unwrap()?;
    let verdict = match (stable_small, unstable_small) {
        (RunOutcome::Decay { .. }, RunOutcome::SmallCycle { .. }) => Criticality::Supercritical,
        (RunOutcome::Decay { .. }, RunOutcome::Escape { .. }) => Criticality::Subcritical,
        _ => Criticality::Indeterminate,
    };
    Ok(ProbeReport {
        verdict,
        threshold,
        stable_value: xs,
        unstable_value: xu,
        stable_small,
        stable_large,
        unstable_small,
    })
}
