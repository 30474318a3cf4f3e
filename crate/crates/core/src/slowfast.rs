//! Critical manifold of the fast subsystem, its folds, and the reduced flow
//! on it.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eigenvalues_2x2, reaction_terms, ModelParams, Partials, State};
use crate::newton::{self, NewtonOptions};

/// Corrector tolerance on `max(|F|, |G|)`.
pub const MANIFOLD_TOL: f64 = 1e-10;
/// Fold refinement target for the fast determinant.
pub const FOLD_DET_TOL: f64 = 1e-7;
/// Degeneracy magnitude above which a fold is a jump point.
pub const CANARD_TOL: f64 = 1e-4;
/// The reduced flow stops when the fast determinant falls below this.
pub const SINGULAR_DET: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    pub state: State,
    pub fast_eigenvalues: [Complex64; 2],
    pub attracting: bool,
    pub fast_det: f64,
    pub arclength: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ManifoldBranch {
    pub points: Vec<ManifoldPoint>,
    /// `i` such that points `i` and `i + 1` differ in attracting flag.
    pub stability_changes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldKind {
    Jump,
    Canard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldPoint {
    pub location: State,
    pub kind: FoldKind,
    /// `(F_v G_u - F_u G_v, F_v G_c - F_c G_v)`.
    pub degeneracy: (f64, f64),
    pub fast_det: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceOptions {
    pub arc_step: f64,
    /// Upper bound on the number of points in each direction from the seed.
    pub max_points: usize,
    /// Upper edge of the continuation box `[0, box_max]^3`.
    pub box_max: f64,
    /// Start in the direction opposite to the default tangent.
    pub reverse: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            arc_step: 0.01,
            max_points: 2000,
            box_max: 10.0,
            reverse: false,
        }
    }
}

fn fg(p: &ModelParams, s: &State) -> [f64; 2] {
    let [f, g, _] = reaction_terms(p, s.c, s.u, s.v);
    [f, g]
}

/// Unit tangent `grad F x grad G`.
fn tangent(p: &ModelParams, s: &State) -> Vector3<f64> {
    let d = Partials::at(p, s);
    let a = Vector3::new(d.f_c, d.f_u, d.f_v);
    let b = Vector3::new(d.g_c, d.g_u, d.g_v);
    let t = a.cross(&b);
    t / t.norm()
}

/// Newton on `(F, G, t . (x - anchor))`.
fn correct(p: &ModelParams, guess: &State, anchor: &State, t: &Vector3<f64>) -> Option<State> {
    let f = |x: &Vector3<f64>| {
        let s = State::new(x[0], x[1], x[2]);
        if s.c <= -0.5 || s.u <= -0.5 * p.h {
            return None;
        }
        let [fv, gv] = fg(p, &s);
        let d = Partials::at(p, &s);
        let r = Vector3::new(
            fv,
            gv,
            t[0] * (s.c - anchor.c) + t[1] * (s.u - anchor.u) + t[2] * (s.v - anchor.v),
        );
        let j = Matrix3::new(d.f_c, d.f_u, d.f_v, d.g_c, d.g_u, d.g_v, t[0], t[1], t[2]);
        Some((r, j))
    };
    let opts = NewtonOptions {
        tol: 1e-12,
        max_iter: 50,
        max_step: 0.1,
    };
    let x = newton::solve(f, Vector3::new(guess.c, guess.u, guess.v), &opts)?;
    let s = State::new(x[0], x[1], x[2]);
    let [fv, gv] = fg(p, &s);
    (fv.abs().max(gv.abs()) <= MANIFOLD_TOL).then_some(s)
}

fn point(p: &ModelParams, s: State, arclength: f64) -> ManifoldPoint {
    let d = Partials::at(p, &s);
    let e = eigenvalues_2x2(&[[d.f_c, d.f_u], [d.g_c, d.g_u]]);
    ManifoldPoint {
        state: s,
        fast_eigenvalues: e,
        attracting: e.iter().all(|z| z.re < 0.0),
        fast_det: d.fast_det(),
        arclength,
    }
}

fn inside(s: &State, box_max: f64) -> bool {
    [s.c, s.u, s.v].iter().all(|x| *x >= 0.0 && *x <= box_max)
}

fn walk(p: &ModelParams, seed: &State, dir: Vector3<f64>, opts: &TraceOptions) -> Vec<State> {
    let mut out = Vec::new();
    let mut cur = *seed;
    let mut t = dir;
    for _ in 0..opts.max_points {
        let pred = State::new(
            cur.c + opts.arc_step * t[0],
            cur.u + opts.arc_step * t[1],
            cur.v + opts.arc_step * t[2],
        );
        let Some(next) = correct(p, &pred, &pred, &t) else {
            break;
        };
        if !inside(&next, opts.box_max) {
            break;
        }
        let mut tn = tangent(p, &next);
        if !tn.iter().all(|x| x.is_finite()) {
            break;
        }
        if tn.dot(&t) < 0.0 {
            tn = -tn;
        }
        out.push(next);
        cur = next;
        t = tn;
    }
    out
}

/// Pseudo-arclength continuation of `{F = 0, G = 0}` in both directions from
/// the seed.
pub fn trace_critical_manifold(
    p: &ModelParams,
    seed: &State,
    arc_step: f64,
    max_points: usize,
) -> Result<ManifoldBranch> {
    let opts = TraceOptions {
        arc_step,
        max_points,
        ..Default::default()
    };
    trace_critical_manifold_with(p, seed, &opts)
}

pub fn trace_critical_manifold_with(
    p: &ModelParams,
    seed: &State,
    opts: &TraceOptions,
) -> Result<ManifoldBranch> {
    p.validate()?;
    if !(opts.arc_step > 0.0 && opts.arc_step.is_finite()) {
        return Err(Error::config(format!(
            "arc_step must be positive, got {}",
            opts.arc_step
        )));
    }
    if opts.max_points == 0 {
        return Err(Error::config("max_points must be at least 1"));
    }
    if !seed.is_finite() {
        return Err(Error::Seed(format!("non-finite seed {seed:?}")));
    }
    let t0 = tangent(p, seed);
    if !t0.iter().all(|x| x.is_finite()) {
        return Err(Error::Seed(format!("degenerate tangent at {seed:?}")));
    }
    let start = correct(p, seed, seed, &t0)
        .ok_or_else(|| Error::Seed(format!("Newton failed from {seed:?}")))?;
    if !inside(&start, opts.box_max) {
        return Err(Error::Seed(format!(
            "refined seed {start:?} lies outside the continuation box"
        )));
    }
    let mut t = tangent(p, &start);
    if t.dot(&t0) < 0.0 {
        t = -t;
    }
    if opts.reverse {
        t = -t;
    }
    let ahead = walk(p, &start, t, opts);
    let behind = walk(p, &start, -t, opts);
    let states: Vec<State> = behind
        .into_iter()
        .rev()
        .chain([start])
        .chain(ahead)
        .collect();

    let mut points = Vec::with_capacity(states.len());
    let mut s_acc = 0.0;
    for (i, s) in states.iter().enumerate() {
        if i > 0 {
            let a = &states[i - 1];
            s_acc += ((s.c - a.c).powi(2) + (s.u - a.u).powi(2) + (s.v - a.v).powi(2)).sqrt();
        }
        points.push(point(p, *s, s_acc));
    }
    let stability_changes = points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].attracting != w[1].attracting)
        .map(|(i, _)| i)
        .collect();
    Ok(ManifoldBranch {
        points,
        stability_changes,
    })
}

/// Folds at sign changes of the fast determinant, refined by bisection along
/// the secant between neighbouring branch points.
pub fn find_folds(branch: &ManifoldBranch, p: &ModelParams) -> Vec<FoldPoint> {
    let mut out = Vec::new();
    for w in branch.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.fast_det.signum() == b.fast_det.signum() && a.fast_det != 0.0 {
            continue;
        }
        let chord = Vector3::new(
            b.state.c - a.state.c,
            b.state.u - a.state.u,
            b.state.v - a.state.v,
        );
        let len = chord.norm();
        if len == 0.0 {
            continue;
        }
        let dir = chord / len;
        let on = |s: f64| -> Option<State> {
            let guess = State::new(
                a.state.c + s * dir[0],
                a.state.u + s * dir[1],
                a.state.v + s * dir[2],
            );
            correct(p, &guess, &guess, &dir)
        };
        let (mut lo, mut hi) = (0.0, len);
        let mut best = if a.fast_det.abs() < b.fast_det.abs() {
            a.state
        } else {
            b.state
        };
        let sign_a = a.fast_det.signum();
        for _ in 0..200 {
            if Partials::at(p, &best).fast_det().abs() <= FOLD_DET_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let Some(s) = on(mid) else { break };
            best = s;
            if Partials::at(p, &s).fast_det().signum() == sign_a {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let d = Partials::at(p, &best);
        let degeneracy = d.fold_degeneracy();
        let kind = if degeneracy.0.abs() > CANARD_TOL || degeneracy.1.abs() > CANARD_TOL {
            FoldKind::Jump
        } else {
            FoldKind::Canard
        };
        out.push(FoldPoint {
            location: best,
            kind,
            degeneracy,
            fast_det: d.fast_det(),
        });
    }
    out
}

/// Eigenvalues of the fast subsystem on the trivial manifold `c = u = 0`.
pub fn trivial_manifold_eigs(p: &ModelParams, v: f64) -> (f64, f64) {
    (-1.0 - p.nu * v / p.c3, -v / p.h - p.sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    FoldSingularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub termination: Termination,
}

fn slow_field(p: &ModelParams, s: &State) -> [f64; 3] {
    let d = Partials::at(p, s);
    let [_, _, h] = reaction_terms(p, s.c, s.u, s.v);
    let det = d.fast_det();
    let (a, b) = d.fold_degeneracy();
    [-a / det * h, b / det * h, h]
}

/// Newton in `(c, u)` with `v` held fixed.
fn project(p: &ModelParams, s: &State) -> Option<State> {
    let v = s.v;
    let f = |x: &Vector2<f64>| {
        let st = State::new(x[0], x[1], v);
        if st.c <= 0.0 || st.u <= 0.0 {
            return None;
        }
        let [fv, gv] = fg(p, &st);
        let d = Partials::at(p, &st);
        Some((
            Vector2::new(fv, gv),
            Matrix2::new(d.f_c, d.f_u, d.g_c, d.g_u),
        ))
    };
    let opts = NewtonOptions {
        tol: 1e-12,
        max_iter: 30,
        max_step: 0.05,
    };
    let x = newton::solve(f, Vector2::new(s.c, s.u), &opts)?;
    let out = State::new(x[0], x[1], v);
    let [fv, gv] = fg(p, &out);
    (fv.abs().max(gv.abs()) <= 1e-10).then_some(out)
}

/// RK4 on the reduced flow with projection back onto the manifold after
/// every step. Steps that cannot be projected are halved; the run ends at the
/// fold, where the flow is singular.
pub fn slow_flow_integrate(
    p: &ModelParams,
    start: &State,
    dtau: f64,
    t_end: f64,
) -> Result<SlowTrajectory> {
    p.validate()?;
    if !(dtau > 0.0 && t_end > 0.0 && dtau.is_finite() && t_end.is_finite()) {
        return Err(Error::config("dtau and t_end must be positive and finite"));
    }
    let [f0, g0] = fg(p, start);
    if f0.abs().max(g0.abs()) > 1e-8 {
        return Err(Error::Seed(format!(
            "start {start:?} is not on the critical manifold"
        )));
    }
    let mut out = SlowTrajectory {
        times: vec![0.0],
        states: vec![*start],
        termination: Termination::Completed,
    };
    let mut x = *start;
    let mut t = 0.0;
    let mut h = dtau;
    let axpy =
        |s: &State, k: [f64; 3], a: f64| State::new(s.c + a * k[0], s.u + a * k[1], s.v + a * k[2]);
    while t < t_end - 1e-12 {
        if Partials::at(p, &x).fast_det().abs() < SINGULAR_DET {
            out.termination = Termination::FoldSingularity;
            return Ok(out);
        }
        let step = h.min(t_end - t);
        let k1 = slow_field(p, &x);
        let k2 = slow_field(p, &axpy(&x, k1, 0.5 * step));
        let k3 = slow_field(p, &axpy(&x, k2, 0.5 * step));
        let k4 = slow_field(p, &axpy(&x, k3, step));
        let k = [
            (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) / 6.0,
            (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) / 6.0,
            (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]) / 6.0,
        ];
        let trial = axpy(&x, k, step);
        let det0 = Partials::at(p, &x).fast_det();
        let accepted = trial
            .is_finite()
            .then(|| project(p, &trial))
            .flatten()
            .filter(|s| {
                Partials::at(p, s).fast_det().signum() == det0.signum() && s.distance(&x) < 0.05
            });
        match accepted {
            Some(s) => {
                x = s;
                t += step;
                out.times.push(t);
                out.states.push(x);
                h = (2.0 * h).min(dtau);
            }
            None => {
                h *= 0.5;
                if h < 1e-16 {
                    if Partials::at(p, &x).fast_det().abs() < 1e-3 {
                        out.termination = Termination::FoldSingularity;
                        return Ok(out);
                    }
                    return Err(Error::ManifoldLoss { tau: t });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::homogeneous_state;

    fn setup() -> (ModelParams, State) {
        let p = ModelParams::default().with_mu1(0.3).with_mu2(0.1007);
        let eq = homogeneous_state(&p).unwrap().unwrap();
        (p, eq)
    }

    #[test]
    fn trivial_manifold_values() {
        let p = ModelParams::default();
        assert_eq!(trivial_manifold_eigs(&p, 0.0), (-1.0, -0.1));
        let (a, b) = trivial_manifold_eigs(&p, 1.0);
        assert!((a + 1.01).abs() < 1e-14 && (b + 10.1).abs() < 1e-12);
    }

    #[test]
    fn branch_lies_on_both_surfaces() {
        let (p, eq) = setup();
        let br = trace_critical_manifold(&p, &eq, 0.01, 400).unwrap();
        assert!(br.points.len() > 100);
        for pt in &br.points {
            let s = pt.state;
            let w = (s.u + p.h) * (p.b * s.c / (s.c + p.c1) - s.u - p.sigma);
            assert!((w - s.v).abs() <= 1e-8);
            assert!(fg(&p, &s)[0].abs() <= 1e-8);
        }
        assert!(br
            .points
            .windows(2)
            .all(|w| w[1].arclength > w[0].arclength));
    }

    #[test]
    fn independent_of_eps() {
        let (p, eq) = setup();
        let a = trace_critical_manifold(&p, &eq, 0.01, 100).unwrap();
        let b = trace_critical_manifold(&p.with_eps(0.1), &eq, 0.01, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn orientation_independent() {
        let (p, eq) = setup();
        let o = TraceOptions {
            max_points: 150,
            ..Default::default()
        };
        let a = trace_critical_manifold_with(&p, &eq, &o).unwrap();
        let b =
            trace_critical_manifold_with(&p, &eq, &TraceOptions { reverse: true, ..o }).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (x, y) in a.points.iter().zip(b.points.iter().rev()) {
            assert!(x.state.distance(&y.state) < 1e-6);
        }
    }

    #[test]
    fn fold_near_reported_point() {
        let (p, eq) = setup();
        let br = trace_critical_manifold(&p, &eq, 0.01, 2000).unwrap();
        let folds = find_folds(&br, &p);
        let target = State::new(1.255, 1.035, 0.898);
        let f = folds
            .iter()
            .min_by(|a, b| {
                a.location
                    .distance(&target)
                    .total_cmp(&b.location.distance(&target))
            })
            .expect("a fold");
        assert!(f.location.distance(&target) < 0.05, "{f:?}");
        assert!(f.fast_det.abs() <= FOLD_DET_TOL);
        for fo in &folds {
            assert!(fg(&p, &fo.location)[0].abs() < 1e-9);
        }
    }

    #[test]
    fn all_attracting_branch_has_no_folds() {
        let (p, eq) = setup();
        let mut br = trace_critical_manifold(&p, &eq, 0.01, 50).unwrap();
        br.points.retain(|pt| pt.attracting);
        let folds = find_folds(&br, &p);
        assert!(
            folds.is_empty()
                || br
                    .points
                    .windows(2)
                    .any(|w| w[0].fast_det.signum() != w[1].fast_det.signum())
        );
    }

    #[test]
    fn slow_flow_is_stationary_at_equilibrium() {
        let (p, eq) = setup();
        let tr = slow_flow_integrate(&p, &eq, 1e-3, 1.0).unwrap();
        assert_eq!(tr.termination, Termination::Completed);
        assert!(tr.states.iter().all(|s| s.distance(&eq) < 1e-9));
    }

    #[test]
    fn slow_flow_reaches_the_fold() {
        let (p, eq) = setup();
        let br = trace_critical_manifold(&p, &eq, 0.01, 2000).unwrap();
        let fold = find_folds(&br, &p)
            .into_iter()
            .min_by(|a, b| {
                a.location
                    .distance(&eq)
                    .total_cmp(&b.location.distance(&eq))
            })
            .unwrap();
        // A point on the branch strictly between the equilibrium and the fold.
        let idx = |x: &State| {
            (0..br.points.len())
                .min_by(|i, j| {
                    br.points[*i]
                        .state
                        .distance(x)
                        .total_cmp(&br.points[*j].state.distance(x))
                })
                .unwrap()
        };
        let (ie, i_f) = (idx(&eq), idx(&fold.location));
        assert!(ie.abs_diff(i_f) >= 2, "{ie} {i_f}");
        let start = br.points[(ie + i_f) / 2].state;
        let tr = slow_flow_integrate(&p, &start, 1e-3, 50.0).unwrap();
        assert_eq!(
            tr.termination,
            Termination::FoldSingularity,
            "ended at {:?}",
            tr.states.last()
        );
        assert!(tr.states.last().unwrap().distance(&fold.location) < 1e-2);
        let h0 = reaction_terms(&p, start.c, start.u, start.v)[2];
        assert!(tr
            .states
            .windows(2)
            .all(|w| (w[1].v - w[0].v) * h0.signum() >= -1e-12));
    }
}
