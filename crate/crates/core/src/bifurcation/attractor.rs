use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, State};
use crate::ode::{integrate_visit, EventKind, IntegrateOptions, Scheme, EXTINCTION_THRESHOLD};

/// Long-time behaviour seen from one initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attractor {
    Extinction,
    SteadyState {
        state: State,
    },
    LimitCycle {
        c_min: f64,
        c_max: f64,
        period: Option<f64>,
    },
}

impl Attractor {
    pub fn name(&self) -> &'static str {
        match self {
            Attractor::Extinction => "extinction",
            Attractor::SteadyState { .. } => "steady_state",
            Attractor::LimitCycle { .. } => "limit_cycle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyOptions {
    pub t_transient: f64,
    pub t_window: f64,
    pub dt: f64,
    pub scheme: Scheme,
    /// Peak-to-peak amplitude in `c` below which the window counts as steady.
    pub steady_amplitude: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            t_transient: 2000.0,
            t_window: 1000.0,
            dt: 1e-2,
            scheme: Scheme::Rk4,
            steady_amplitude: 1e-4,
        }
    }
}

pub fn attractor_classify(
    p: &ModelParams,
    ic: &State,
    t_transient: f64,
    t_window: f64,
) -> Result<Attractor> {
    let opts = ClassifyOptions {
        t_transient,
        t_window,
        ..Default::default()
    };
    attractor_classify_with(p, ic, &opts)
}

pub fn attractor_classify_with(
    p: &ModelParams,
    ic: &State,
    opts: &ClassifyOptions,
) -> Result<Attractor> {
    if !(opts.t_transient >= 500.0 && opts.t_window >= 500.0) {
        return Err(Error::config(format!(
            "t_transient and t_window must be >= 500, got {} and {}",
            opts.t_transient, opts.t_window
        )));
    }
    let io = IntegrateOptions {
        dt: opts.dt,
        t_end: opts.t_transient + opts.t_window,
        record_stride: 1,
        scheme: opts.scheme,
        ..Default::default()
    };
    let (mut c_min, mut c_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut sum = [0.0; 3];
    let mut count = 0usize;
    let mut prev = [f64::NAN; 2];
    let mut maxima: Vec<f64> = Vec::new();
    let mut last = *ic;
    let events = integrate_visit(p, ic, &io, |t, s| {
        last = *s;
        if t >= opts.t_transient {
            c_min = c_min.min(s.c);
            c_max = c_max.max(s.c);
            sum[0] += s.c;
            sum[1] += s.u;
            sum[2] += s.v;
            count += 1;
            if prev[1] > prev[0] && prev[1] >= s.c {
                maxima.push(t - io.dt);
            }
        }
        prev = [prev[1], s.c];
        ControlFlow::Continue(())
    })?;
    if let Some(e) = events.iter().find(|e| e.kind == EventKind::Blowup) {
        return Err(Error::Integration {
            time: e.time,
            reason: "a component exceeded the blow-up threshold".into(),
        });
    }
    if last.c < EXTINCTION_THRESHOLD
        && last.u < EXTINCTION_THRESHOLD
        && last.v < EXTINCTION_THRESHOLD
    {
        return Ok(Attractor::Extinction);
    }
    if c_max - c_min < opts.steady_amplitude {
        let n = count.max(1) as f64;
        return Ok(Attractor::SteadyState {
            state: State::new(sum[0] / n, sum[1] / n, sum[2] / n),
        });
    }
    let period = (maxima.len() >= 2)
        .then(|| (maxima[maxima.len() - 1] - maxima[0]) / (maxima.len() - 1) as f64);
    Ok(Attractor::LimitCycle {
        c_min,
        c_max,
        period,
    })
}
