use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{char_poly, CharPoly, Parameter};
use crate::equilibria::{coexistence_locations, SearchOptions};
use crate::error::{Error, Result};
use crate::model::{eval_jacobian, ModelParams, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopfOptions {
    /// Final bracket width.
    pub tol: f64,
    /// Samples used to follow the branch across the bracket.
    pub track_samples: usize,
    /// Largest max-norm jump accepted between neighbouring samples.
    pub max_jump: f64,
    #[serde(skip)]
    pub search: SearchOptions,
}

impl Default for HopfOptions {
    fn default() -> Self {
        HopfOptions {
            tol: 1e-6,
            track_samples: 32,
            max_jump: 0.25,
            search: SearchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfPoint {
    pub value: f64,
    pub equilibrium: State,
    pub char_poly: CharPoly,
    pub eigenvalues: [Complex64; 3],
}

pub(crate) fn poly_at(p: &ModelParams, s: &State) -> Result<CharPoly> {
    Ok(char_poly(&eval_jacobian(p, s)?))
}

/// Nearest candidate in max-norm within `max_jump`; ties go to larger c.
pub(crate) fn nearest(cands: &[State], from: &State, max_jump: f64) -> Option<State> {
    let mut best: Option<(f64, State)> = None;
    for s in cands {
        let d = s.distance(from);
        if d > max_jump {
            continue;
        }
        best = match best {
            None => Some((d, *s)),
            Some((bd, bs)) => {
                if d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && s.c > bs.c) {
                    Some((d, *s))
                } else {
                    Some((bd, bs))
                }
            }
        };
    }
    best.map(|(_, s)| s)
}

struct Tracked {
    xs: Vec<f64>,
    states: Vec<State>,
    lost_at: Option<f64>,
}

fn track(xs: &[f64], sols: &[Vec<State>], start: State, reverse: bool, max_jump: f64) -> Tracked {
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    let mut out = Tracked {
        xs: vec![xs[order[0]]],
        states: vec![start],
        lost_at: None,
    };
    let mut cur = start;
    for &k in &order[1..] {
        match nearest(&sols[k], &cur, max_jump) {
            Some(s) => {
                cur = s;
                out.xs.push(xs[k]);
                out.states.push(s);
            }
            None => {
                out.lost_at = Some(xs[k]);
                break;
            }
        }
    }
    if reverse {
        out.xs.reverse();
        out.states.reverse();
    }
    out
}

/// Follow each coexistence branch across `bracket`, locate a sign change of
/// `p1 p2 - p0` and bisect it. Brackets in which the branch is lost are
/// clipped to the part where it exists.
pub fn locate_hopf(
    p: &ModelParams,
    which: Parameter,
    bracket: (f64, f64),
    opts: &HopfOptions,
) -> Result<HopfPoint> {
    let (lo, hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::config(format!(
            "bracket must satisfy lo < hi, got ({lo}, {hi})"
        )));
    }
    if opts.track_samples < 2 || opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::config("track_samples must be >= 2 and tol > 0"));
    }
    p.validate()?;
    which.set(p, lo).validate()?;
    which.set(p, hi).validate()?;
    let m = opts.track_samples;
    let xs: Vec<f64> = (0..=m)
        .map(|k| lo + (hi - lo) * k as f64 / m as f64)
        .collect();
    let sols: Vec<Vec<State>> = xs
        .iter()
        .map(|&x| coexistence_locations(&which.set(p, x), &opts.search))
        .collect::<Result<_>>()?;

    let mut branches = Vec::new();
    for s in &sols[0] {
        branches.push(track(&xs, &sols, *s, false, opts.max_jump));
    }
    // Branches that only exist near the upper end of the bracket.
    for s in &sols[m] {
        let t = track(&xs, &sols, *s, true, opts.max_jump);
        if t.lost_at.is_some() {
            branches.push(t);
        }
    }
    if branches.is_empty() {
        return Err(Error::Branch {
            at: lo,
            reason: format!("no coexistence equilibrium at either end of [{lo}, {hi}]"),
        });
    }

    let mut lost = None;
    let mut not_hopf = None;
    for b in &branches {
        if let Some(at) = b.lost_at {
            lost.get_or_insert(at);
        }
        let hs: Vec<CharPoly> = b
            .states
            .iter()
            .zip(&b.xs)
            .map(|(s, x)| poly_at(&which.set(p, *x), s))
            .collect::<Result<_>>()?;
        for k in 0..hs.len().saturating_sub(1) {
            let (h0, h1) = (hs[k].hopf_function(), hs[k + 1].hopf_function());
            if h0 == 0.0 || h0.signum() != h1.signum() {
                let pt = bisect(p, which, (b.xs[k], b.xs[k + 1]), b.states[k], h0, opts)?;
                if pt.char_poly.p1 > 0.0 {
                    return Ok(pt);
                }
                not_hopf.get_or_insert(pt);
            }
        }
    }
    if let Some(pt) = not_hopf {
        return Err(Error::NotHopf {
            at: pt.value,
            p1: pt.char_poly.p1,
        });
    }
    match lost {
        Some(at) => Err(Error::Branch {
            at,
            reason: "tracked branch disappears and no Hopf sign change was found where it exists"
                .into(),
        }),
        None => Err(Error::Bracket {
            lo,
            hi,
            reason: "p1 p2 - p0 keeps its sign along every coexistence branch".into(),
        }),
    }
}

fn bisect(
    p: &ModelParams,
    which: Parameter,
    (mut a, mut b): (f64, f64),
    mut sa: State,
    mut ha: f64,
    opts: &HopfOptions,
) -> Result<HopfPoint> {
    let at = |x: f64, from: &State| -> Result<(State, CharPoly)> {
        let q = which.set(p, x);
        let sols = coexistence_locations(&q, &opts.search)?;
        let s = nearest(&sols, from, opts.max_jump).ok_or_else(|| Error::Branch {
            at: x,
            reason: "tracked equilibrium vanished during bisection".into(),
        })?;
        Ok((s, poly_at(&q, &s)?))
    };
    while b - a >= opts.tol {
        let mid = 0.5 * (a + b);
        let (s, cp) = at(mid, &sa)?;
        let hm = cp.hopf_function();
        if hm.signum() == ha.signum() && hm != 0.0 {
            a = mid;
            sa = s;
            ha = hm;
        } else {
            b = mid;
        }
    }
    let value = 0.5 * (a + b);
    let (s, cp) = at(value, &sa)?;
    let q = which.set(p, value);
    Ok(HopfPoint {
        value,
        equilibrium: s,
        char_poly: cp,
        eigenvalues: eval_jacobian(&q, &s)?.eigenvalues(),
    })
}

pub fn hopf_threshold(p: &ModelParams, which: Parameter, bracket: (f64, f64)) -> Result<f64> {
    locate_hopf(p, which, bracket, &HopfOptions::default()).map(|h| h.value)
}

pub fn saddle_node_threshold(
    p: &ModelParams,
    which: Parameter,
    bracket: (f64, f64),
) -> Result<f64> {
    saddle_node_threshold_with(p, which, bracket, 1e-6, &SearchOptions::default())
}

/// Bisection on the number of coexistence equilibria.
pub fn saddle_node_threshold_with(
    p: &ModelParams,
    which: Parameter,
    (lo, hi): (f64, f64),
    tol: f64,
    search: &SearchOptions,
) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::config(format!(
            "bracket must satisfy lo < hi, got ({lo}, {hi})"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::config("tol must be positive"));
    }
    let count =
        |x: f64| -> Result<usize> { Ok(coexistence_locations(&which.set(p, x), search)?.len()) };
    let (mut a, mut b) = (lo, hi);
    let ca = count(a)?;
    let cb = count(b)?;
    if ca == cb {
        return Err(Error::Bracket {
            lo,
            hi,
            reason: format!("{ca} coexistence equilibria at both ends"),
        });
    }
    while b - a >= tol {
        let mid = 0.5 * (a + b);
        if count(mid)? == ca {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}
