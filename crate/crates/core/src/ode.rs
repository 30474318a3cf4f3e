//! Fixed-step explicit integration of the nonspatial system with extinction
//! and blow-up events.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rhs, ModelParams, State};

/// All components below this count as extinct.
pub const EXTINCTION_THRESHOLD: f64 = 1e-6;
/// Any component above this halts integration.
pub const BLOWUP_THRESHOLD: f64 = 1e6;
/// Negative values smaller than this in magnitude are roundoff and clamped.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Record every `record_stride`-th step (the last step is always kept).
    pub record_stride: usize,
    pub scheme: Scheme,
    pub extinction_threshold: f64,
    pub blowup_threshold: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            dt: 1e-3,
            t_end: 100.0,
            record_stride: 100,
            scheme: Scheme::Rk4,
            extinction_threshold: EXTINCTION_THRESHOLD,
            blowup_threshold: BLOWUP_THRESHOLD,
        }
    }
}

impl IntegrateOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        IntegrateOptions {
            dt,
            t_end,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!(
                "dt must be positive and finite, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config(format!(
                "t_end must be positive and finite, got {}",
                self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride must be at least 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Extinction,
    Blowup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }

    pub fn extinction_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::Extinction)
            .map(|e| e.time)
    }

    pub fn blew_up(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::Blowup)
    }
}

/// One explicit step of size `dt`.
#[inline]
pub fn step(p: &ModelParams, x: [f64; 3], dt: f64, scheme: Scheme) -> [f64; 3] {
    let f = |y: [f64; 3]| rhs(p, y[0], y[1], y[2]);
    let axpy =
        |y: [f64; 3], k: [f64; 3], a: f64| [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2]];
    match scheme {
        Scheme::Euler => axpy(x, f(x), dt),
        Scheme::Rk4 => {
            let k1 = f(x);
            let k2 = f(axpy(x, k1, 0.5 * dt));
            let k3 = f(axpy(x, k2, 0.5 * dt));
            let k4 = f(axpy(x, k3, dt));
            [
                x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                x[2] + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            ]
        }
    }
}

/// Integrate and hand every accepted step `(t, state)` to `visit`, starting
/// with `(0, ic)`. The visitor may stop the run early. Returns the events.
pub fn integrate_visit<V>(
    p: &ModelParams,
    ic: &State,
    opts: &IntegrateOptions,
    mut visit: V,
) -> Result<Vec<Event>>
where
    V: FnMut(f64, &State) -> ControlFlow<()>,
{
    opts.validate()?;
    p.validate()?;
    if !ic.is_finite() || ic.c < 0.0 || ic.u < 0.0 || ic.v < 0.0 {
        return Err(Error::config(format!(
            "initial state must be finite and nonnegative, got {ic:?}"
        )));
    }
    let mut events = Vec::new();
    let mut x = ic.to_array();
    let mut extinct = false;
    let n = opts.steps();
    if let ControlFlow::Break(()) = visit(0.0, ic) {
        return Ok(events);
    }
    for k in 1..=n {
        let t = k as f64 * opts.dt;
        x = step(p, x, opts.dt, opts.scheme);
        if x.iter()
            .any(|y| !y.is_finite() || y.abs() > opts.blowup_threshold)
        {
            events.push(Event {
                time: t,
                kind: EventKind::Blowup,
            });
            break;
        }
        for y in x.iter_mut() {
            if *y < 0.0 {
                if *y > -CLAMP_TOL {
                    *y = 0.0;
                } else {
                    return Err(Error::Integration {
                        time: t,
                        reason: format!("component became negative ({y}); reduce dt"),
                    });
                }
            }
        }
        if !extinct && x.iter().all(|y| *y < opts.extinction_threshold) {
            extinct = true;
            events.push(Event {
                time: t,
                kind: EventKind::Extinction,
            });
        }
        if let ControlFlow::Break(()) = visit(t, &State::from_array(x)) {
            break;
        }
    }
    Ok(events)
}

/// Integrate from `ic`, recording every `record_stride`-th state.
pub fn integrate(p: &ModelParams, ic: &State, opts: &IntegrateOptions) -> Result<Trajectory> {
    let n = opts.steps();
    let stride = opts.record_stride.max(1);
    let mut traj = Trajectory::default();
    let mut last: Option<(f64, State)> = None;
    let mut k = 0usize;
    let events = integrate_visit(p, ic, opts, |t, s| {
        if k % stride == 0 || k == n {
            traj.times.push(t);
            traj.states.push(*s);
        } else {
            last = Some((t, *s));
        }
        k += 1;
        ControlFlow::Continue(())
    })?;
    // Keep the final state when the run halted between strides.
    if let Some((t, s)) = last {
        if traj.times.last().map_or(true, |tl| *tl < t) {
            traj.times.push(t);
            traj.states.push(s);
        }
    }
    traj.events = events;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::coexistence_locations;
    use crate::equilibria::SearchOptions;

    #[test]
    fn rejects_bad_settings() {
        let p = ModelParams::default();
        let ic = State::new(1.0, 1.0, 1.0);
        assert!(matches!(
            integrate(&p, &ic, &IntegrateOptions::new(0.0, 1.0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            integrate(&p, &ic, &IntegrateOptions::new(1e-3, -1.0)),
            Err(Error::Config(_))
        ));
        assert!(integrate(
            &p,
            &State::new(-1.0, 0.0, 0.0),
            &IntegrateOptions::new(1e-3, 1.0)
        )
        .is_err());
    }

    #[test]
    fn equilibrium_is_stationary() {
        let p = ModelParams::default().with_mu1(0.05).with_mu2(0.5);
        let eq = coexistence_locations(&p, &SearchOptions::default()).unwrap()[0];
        let traj = integrate(&p, &eq, &IntegrateOptions::new(1e-3, 100.0)).unwrap();
        for s in &traj.states {
            assert!(s.distance(&eq) < 1e-8);
        }
    }

    #[test]
    fn times_strictly_increasing_and_end_recorded() {
        let p = ModelParams::default().with_mu1(0.05).with_mu2(0.5);
        let opts = IntegrateOptions {
            record_stride: 7,
            ..IntegrateOptions::new(1e-2, 1.0)
        };
        let traj = integrate(&p, &State::new(1.0, 1.0, 1.0), &opts).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!((traj.times.last().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(traj.times.len(), traj.states.len());
    }

    #[test]
    fn rk4_fourth_order() {
        let p = ModelParams::default().with_mu1(0.05).with_mu2(0.5);
        let ic = State::new(1.5, 1.0, 0.5);
        let end = |dt: f64| {
            let o = IntegrateOptions {
                record_stride: usize::MAX,
                ..IntegrateOptions::new(dt, 10.0)
            };
            *integrate(&p, &ic, &o).unwrap().last().unwrap()
        };
        let (a, b, c) = (end(0.04), end(0.02), end(0.01));
        let ratio = a.distance(&b) / b.distance(&c);
        assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
    }

    #[test]
    fn euler_first_order() {
        let p = ModelParams::default().with_mu1(0.05).with_mu2(0.5);
        let ic = State::new(1.5, 1.0, 0.5);
        let end = |dt: f64| {
            let o = IntegrateOptions {
                scheme: Scheme::Euler,
                ..IntegrateOptions::new(dt, 10.0)
            };
            *integrate(&p, &ic, &o).unwrap().last().unwrap()
        };
        let ratio = end(0.004).distance(&end(0.002)) / end(0.002).distance(&end(0.001));
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn zooplankton_free_plane_is_invariant() {
        let p = ModelParams::default().with_mu1(0.1).with_mu2(0.3);
        let traj = integrate(
            &p,
            &State::new(0.3, 2.0, 0.0),
            &IntegrateOptions::new(1e-2, 50.0),
        )
        .unwrap();
        assert!(traj.states.iter().all(|s| s.v == 0.0));
    }

    #[test]
    fn extinction_event_from_origin_neighbourhood() {
        let p = ModelParams::default().with_mu1(0.3).with_mu2(0.1);
        let traj = integrate(
            &p,
            &State::new(1e-3, 1e-4, 1e-3),
            &IntegrateOptions::new(1e-2, 300.0),
        )
        .unwrap();
        let t = traj.extinction_time().expect("extinction");
        assert!(t > 0.0 && t < 300.0);
        // Integration continues after the event.
        assert!((traj.times.last().unwrap() - 300.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let p = ModelParams::default()
            .with_mu1(0.3)
            .with_mu2(0.09917)
            .with_eps(0.5);
        let ic = State::new(1.2, 1.0, 0.9);
        let o = IntegrateOptions::new(1e-3, 20.0);
        let a = integrate(&p, &ic, &o).unwrap();
        let b = integrate(&p, &ic, &o).unwrap();
        assert_eq!(a, b);
    }
}
