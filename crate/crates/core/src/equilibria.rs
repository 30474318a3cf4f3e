//! Steady states of the nonspatial system: total extinction, the
//! zooplankton-free pair from the boundary quartic, and coexistence states.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{eval_jacobian, rhs, sort_by_real_desc, ModelParams, Partials, State};
use crate::newton::{self, NewtonOptions};
use crate::parallel::Execution;
use crate::poly;

/// Real parts with magnitude below this are reported as marginal.
pub const MARGINAL_TOL: f64 = 1e-10;
/// Required max-norm residual of every reported equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Imaginary-part cutoff for accepting a quartic root as real.
pub const REAL_ROOT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Extinction,
    ZooplanktonFree,
    Coexistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Saddle,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub location: State,
    pub kind: EquilibriumKind,
    /// Sorted by descending real part.
    pub eigenvalues: [Complex64; 3],
    pub stability: Stability,
    /// Number of eigenvalues with real part above [`MARGINAL_TOL`].
    pub unstable_dim: usize,
    /// Some eigenvalue has `|Re| < MARGINAL_TOL`; the label ignores it.
    pub marginal: bool,
}

impl EquilibriumReport {
    /// Attach eigenvalues and a stability label to a location.
    pub fn classify(p: &ModelParams, location: State, kind: EquilibriumKind) -> Result<Self> {
        let eigenvalues = eval_jacobian(p, &location)?.eigenvalues();
        Ok(Self::from_eigenvalues(location, kind, eigenvalues))
    }

    pub fn from_eigenvalues(
        location: State,
        kind: EquilibriumKind,
        mut eigenvalues: [Complex64; 3],
    ) -> Self {
        sort_by_real_desc(&mut eigenvalues);
        let (stability, unstable_dim, marginal) = label(&eigenvalues);
        EquilibriumReport {
            location,
            kind,
            eigenvalues,
            stability,
            unstable_dim,
            marginal,
        }
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Stability label, unstable dimension and marginal flag for a spectrum.
pub fn label(eigenvalues: &[Complex64]) -> (Stability, usize, bool) {
    let unstable = eigenvalues.iter().filter(|z| z.re > MARGINAL_TOL).count();
    let stable = eigenvalues.iter().filter(|z| z.re < -MARGINAL_TOL).count();
    let marginal = unstable + stable < eigenvalues.len();
    let stability = match (unstable, stable) {
        (0, _) => Stability::Stable,
        (_, 0) => Stability::Unstable,
        _ => Stability::Saddle,
    };
    (stability, unstable, marginal)
}

/// The total extinction state `(0, 0, 0)` with eigenvalues `{-1, -sigma, -eps mu1}`.
pub fn extinction_state(p: &ModelParams) -> EquilibriumReport {
    let eig = [
        Complex64::new(-1.0, 0.0),
        Complex64::new(-p.sigma, 0.0),
        Complex64::new(-p.eps * p.mu1, 0.0),
    ];
    EquilibriumReport::from_eigenvalues(State::ORIGIN, EquilibriumKind::Extinction, eig)
}

/// Coefficients (highest degree first) of the quartic whose positive roots
/// are the oxygen levels of the zooplankton-free states.
pub fn boundary_quartic(p: &ModelParams) -> [f64; 5] {
    let (a, b, s, c1, c2, d) = (p.a, p.b, p.sigma, p.c1, p.c2, p.delta);
    [
        1.0,
        -(d * (s - b) - (c1 + c2 + 1.0)),
        -(a * (b - s) + (d * s - c2 - 1.0) * c1 - b * d + d * s - c2),
        -(((b - s) * c2 - s * c1) * a + d * s * c1 - c1 * c2),
        a * s * c1 * c2,
    ]
}

/// Phytoplankton level of a zooplankton-free state with oxygen level `c`.
pub fn boundary_phytoplankton(p: &ModelParams, c: f64) -> f64 {
    (c * (p.b - p.sigma) - p.c1 * p.sigma) / (c + p.c1)
}

fn planar_newton(p: &ModelParams, start: State) -> Option<State> {
    let f = |x: &Vector2<f64>| {
        let (c, u) = (x[0], x[1]);
        if c <= -0.5 || u <= -0.5 * p.h {
            return None;
        }
        let s = State::new(c, u, 0.0);
        let [fv, gv, _] = rhs(p, c, u, 0.0);
        let d = Partials::at(p, &s);
        Some((
            Vector2::new(fv, gv),
            Matrix2::new(d.f_c, d.f_u, d.g_c, d.g_u),
        ))
    };
    newton::solve(f, Vector2::new(start.c, start.u), &NewtonOptions::default())
        .map(|x| State::new(x[0], x[1], 0.0))
}

/// Zooplankton-free states `(c, u, 0)` with `c, u > 0`, ascending in `c`.
pub fn boundary_equilibria(p: &ModelParams) -> Result<Vec<EquilibriumReport>> {
    p.validate()?;
    let mut roots: Vec<f64> = poly::roots(&boundary_quartic(p))
        .into_iter()
        .filter(|z| z.im.abs() < REAL_ROOT_TOL && z.re > 0.0)
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);

    let mut out: Vec<EquilibriumReport> = Vec::new();
    for c in roots {
        let u = boundary_phytoplankton(p, c);
        if u <= 0.0 {
            continue;
        }
        let refined = planar_newton(p, State::new(c, u, 0.0)).unwrap_or(State::new(c, u, 0.0));
        if refined.c <= 0.0 || refined.u <= 0.0 || residual(p, &refined) > RESIDUAL_TOL {
            continue;
        }
        if out.iter().any(|e| e.location.distance(&refined) < 1e-6) {
            continue;
        }
        out.push(EquilibriumReport::classify(
            p,
            refined,
            EquilibriumKind::ZooplanktonFree,
        )?);
    }
    Ok(out)
}

/// Max-norm of the full right-hand side.
pub fn residual(p: &ModelParams, s: &State) -> f64 {
    let r = rhs(p, s.c, s.u, s.v);
    r.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Multistart settings for the coexistence search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchOptions {
    pub c_max: f64,
    pub u_max: f64,
    /// Starts per axis; the grid is `grid x grid` over `(0, c_max] x (0, u_max]`.
    pub grid: usize,
    /// Solutions closer than this (max-norm) are merged.
    pub merge_radius: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            c_max: 5.0,
            u_max: 5.0,
            grid: 40,
            merge_radius: 1e-6,
            exec: Execution::default(),
        }
    }
}

/// Zooplankton level that zeroes `G` for `u > 0`.
#[inline]
pub(crate) fn grazing_balance(p: &ModelParams, c: f64, u: f64) -> f64 {
    (u + p.h) * (p.b * c / (c + p.c1) - u - p.sigma)
}

/// Newton on the reduced planar system in `(c, u)`:
/// `F(c, u, w) = 0` and `assimilation(c, u) - mu1 - mu2 w = 0` with
/// `w = grazing_balance(c, u)`. Valid for every `mu2 >= 0`.
pub(crate) fn reduced_newton(p: &ModelParams, c0: f64, u0: f64) -> Option<State> {
    let f = |x: &Vector2<f64>| {
        let (c, u) = (x[0], x[1]);
        if c <= -0.5 || u <= -0.5 * p.h || c > 1e3 || u > 1e3 {
            return None;
        }
        let w = grazing_balance(p, c, u);
        let s = State::new(c, u, w);
        let [fv, _, _] = rhs(p, c, u, w);
        let d = Partials::at(p, &s);
        let w_c = (u + p.h) * p.b * p.c1 / ((c + p.c1) * (c + p.c1));
        let w_u = (p.b * c / (c + p.c1) - u - p.sigma) - (u + p.h);
        let c4sq = p.c4 * p.c4;
        let csq = c * c;
        let uh = u + p.h;
        let a_c = p.eta * 2.0 * c * c4sq / ((csq + c4sq) * (csq + c4sq)) * u / uh;
        let a_u = p.eta * csq / (csq + c4sq) * p.h / (uh * uh);
        let r2 = p.assimilation(c, u) - p.mu1 - p.mu2 * w;
        let jac = Matrix2::new(
            d.f_c + d.f_v * w_c,
            d.f_u + d.f_v * w_u,
            a_c - p.mu2 * w_c,
            a_u - p.mu2 * w_u,
        );
        Some((Vector2::new(fv, r2), jac))
    };
    let opts = NewtonOptions {
        tol: 1e-13,
        max_iter: 200,
        max_step: 0.5,
    };
    let x = newton::solve(f, Vector2::new(c0, u0), &opts)?;
    Some(State::new(x[0], x[1], grazing_balance(p, x[0], x[1])))
}

/// Newton polish on the full three-dimensional right-hand side.
pub(crate) fn polish(p: &ModelParams, s: State) -> State {
    let f = |x: &Vector3<f64>| {
        let st = State::new(x[0], x[1], x[2]);
        if st.c <= -0.5 || st.u <= -0.5 * p.h {
            return None;
        }
        let r = rhs(p, st.c, st.u, st.v);
        let j = eval_jacobian(p, &st).ok()?;
        Some((Vector3::from(r), Matrix3::from_fn(|i, k| j.get(i, k))))
    };
    let opts = NewtonOptions {
        tol: 1e-14,
        max_iter: 20,
        max_step: 1e-3,
    };
    match newton::solve(f, Vector3::new(s.c, s.u, s.v), &opts) {
        Some(x) => {
            let t = State::new(x[0], x[1], x[2]);
            if residual(p, &t) <= residual(p, &s) {
                t
            } else {
                s
            }
        }
        None => s,
    }
}

/// All coexistence states (`c, u, v > 0`) found by the default multistart.
pub fn coexistence_equilibria(p: &ModelParams) -> Result<Vec<EquilibriumReport>> {
    coexistence_equilibria_with(p, &SearchOptions::default())
}

pub fn coexistence_equilibria_with(
    p: &ModelParams,
    opts: &SearchOptions,
) -> Result<Vec<EquilibriumReport>> {
    coexistence_locations(p, opts)?
        .into_iter()
        .map(|s| EquilibriumReport::classify(p, s, EquilibriumKind::Coexistence))
        .collect()
}

/// Locations only; sorted by `c`, then `u`.
pub fn coexistence_locations(p: &ModelParams, opts: &SearchOptions) -> Result<Vec<State>> {
    p.validate()?;
    let n = opts.grid.max(1);
    let starts: Vec<(f64, f64)> = (1..=n)
        .flat_map(|i| (1..=n).map(move |j| (i, j)))
        .map(|(i, j)| {
            (
                opts.c_max * i as f64 / n as f64,
                opts.u_max * j as f64 / n as f64,
            )
        })
        .collect();

    let found: Vec<Option<State>> = opts.exec.map(&starts, |&(c0, u0)| {
        let s = reduced_newton(p, c0, u0)?;
        (s.c > 0.0 && s.u > 0.0 && s.v > 0.0).then(|| polish(p, s))
    });

    let mut out: Vec<State> = Vec::new();
    for s in found.into_iter().flatten() {
        if !(s.c > 0.0 && s.u > 0.0 && s.v > 0.0) || residual(p, &s) > RESIDUAL_TOL {
            continue;
        }
        if out.iter().any(|e| e.distance(&s) < opts.merge_radius) {
            continue;
        }
        out.push(s);
    }
    out.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.u.total_cmp(&b.u)));
    Ok(out)
}

/// Extinction, zooplankton-free and coexistence states together.
pub fn all_equilibria(p: &ModelParams, opts: &SearchOptions) -> Result<Vec<EquilibriumReport>> {
    let mut out = vec![extinction_state(p)];
    out.extend(boundary_equilibria(p)?);
    out.extend(coexistence_equilibria_with(p, opts)?);
    Ok(out)
}

/// The homogeneous steady state used by spatial runs: the coexistence state
/// with the largest oxygen level.
pub fn homogeneous_state(p: &ModelParams) -> Result<Option<State>> {
    Ok(coexistence_locations(p, &SearchOptions::default())?
        .last()
        .copied())
}
