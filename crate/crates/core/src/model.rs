//! Right-hand sides and derivatives of the oxygen (c), phytoplankton (u),
//! zooplankton (v) system
//!
//! ```text
//! dc/dt = A u/(c+1) - delta u c/(c+c2) - nu c v/(c+c3) - c            = F
//! du/dt = (B c/(c+c1) - u) u - u v/(u+h) - sigma u                     = G
//! dv/dt = eps (eta c^2/(c^2+c4^2) u v/(u+h) - mu1 v - mu2 v^2)         = eps H
//! ```
//!
//! All denominators are strictly positive on the closed nonnegative orthant.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensionless constants of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Per capita oxygen production rate.
    #[serde(rename = "A")]
    pub a: f64,
    /// Per capita phytoplankton growth rate.
    #[serde(rename = "B")]
    pub b: f64,
    /// Phytoplankton natural mortality.
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Zooplankton food assimilation efficacy.
    pub eta: f64,
    /// Oxygen consumption by phytoplankton.
    pub delta: f64,
    /// Oxygen consumption by zooplankton.
    pub nu: f64,
    /// Grazing half-saturation.
    pub h: f64,
    /// Linear zooplankton mortality.
    pub mu1: f64,
    /// Quadratic zooplankton removal.
    pub mu2: f64,
    /// Timescale ratio of zooplankton to oxygen/phytoplankton dynamics.
    pub eps: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            a: 4.0,
            b: 3.0,
            sigma: 0.1,
            c1: 0.7,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
            eta: 0.7,
            delta: 1.0,
            nu: 0.01,
            h: 0.1,
            mu1: 0.0,
            mu2: 0.0,
            eps: 1.0,
        }
    }
}

impl ModelParams {
    pub fn with_mu1(mut self, mu1: f64) -> Self {
        self.mu1 = mu1;
        self
    }

    pub fn with_mu2(mut self, mu2: f64) -> Self {
        self.mu2 = mu2;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Field names paired with values, in declaration order.
    pub fn fields(&self) -> [(&'static str, f64); 14] {
        [
            ("A", self.a),
            ("B", self.b),
            ("sigma", self.sigma),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("eta", self.eta),
            ("delta", self.delta),
            ("nu", self.nu),
            ("h", self.h),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("eps", self.eps),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.fields() {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {value}"),
                });
            }
            if value < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be nonnegative, got {value}"),
                });
            }
        }
        let positive = [
            ("A", self.a),
            ("B", self.b),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("h", self.h),
        ];
        for (name, value) in positive {
            if value <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be strictly positive, got {value}"),
                });
            }
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("must lie in (0, 1], got {}", self.eps),
            });
        }
        Ok(())
    }

    /// Oxygen-dependent assimilation times the grazing response,
    /// `eta c^2/(c^2+c4^2) * u/(u+h)`. Zooplankton per capita growth.
    #[inline]
    pub fn assimilation(&self, c: f64, u: f64) -> f64 {
        let c2 = c * c;
        self.eta * c2 / (c2 + self.c4 * self.c4) * u / (u + self.h)
    }
}

/// A point `(c, u, v)` of phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub c: f64,
    pub u: f64,
    pub v: f64,
}

impl State {
    pub const ORIGIN: State = State {
        c: 0.0,
        u: 0.0,
        v: 0.0,
    };

    pub const fn new(c: f64, u: f64, v: f64) -> Self {
        State { c, u, v }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.c, self.u, self.v]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        State::new(x[0], x[1], x[2])
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.u.is_finite() && self.v.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.c.abs().max(self.u.abs()).max(self.v.abs())
    }

    /// Max-norm distance.
    pub fn distance(&self, other: &State) -> f64 {
        (self.c - other.c)
            .abs()
            .max((self.u - other.u).abs())
            .max((self.v - other.v).abs())
    }

    pub fn scaled(self, k: f64) -> State {
        State::new(self.c * k, self.u * k, self.v * k)
    }

    pub fn offset(self, dc: f64, du: f64, dv: f64) -> State {
        State::new(self.c + dc, self.u + du, self.v + dv)
    }
}

/// Unscaled `(F, G, H)`.
#[inline]
pub fn reaction_terms(p: &ModelParams, c: f64, u: f64, v: f64) -> [f64; 3] {
    let grazing = u * v / (u + p.h);
    let f = p.a * u / (c + 1.0) - p.delta * u * c / (c + p.c2) - p.nu * c * v / (c + p.c3) - c;
    let g = (p.b * c / (c + p.c1) - u) * u - grazing - p.sigma * u;
    let c2 = c * c;
    let hh = p.eta * c2 / (c2 + p.c4 * p.c4) * grazing - p.mu1 * v - p.mu2 * v * v;
    [f, g, hh]
}

/// `(F, G, eps H)` without finiteness checks; the hot-loop form.
#[inline]
pub fn rhs(p: &ModelParams, c: f64, u: f64, v: f64) -> [f64; 3] {
    let [f, g, h] = reaction_terms(p, c, u, v);
    [f, g, p.eps * h]
}

/// Right-hand side `(dc, du, dv)` of the nonspatial system.
pub fn eval_rhs(p: &ModelParams, s: &State) -> Result<[f64; 3]> {
    let out = rhs(p, s.c, s.u, s.v);
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Domain(format!(
            "non-finite right-hand side {out:?} at {s:?}"
        )))
    }
}

/// First partial derivatives of the unscaled `F`, `G`, `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub f_c: f64,
    pub f_u: f64,
    pub f_v: f64,
    pub g_c: f64,
    pub g_u: f64,
    pub g_v: f64,
    pub h_c: f64,
    pub h_u: f64,
    pub h_v: f64,
}

impl Partials {
    pub fn at(p: &ModelParams, s: &State) -> Self {
        let State { c, u, v } = *s;
        let c4sq = p.c4 * p.c4;
        let csq = c * c;
        let monod_c = csq / (csq + c4sq);
        let uh = u + p.h;

        let f_c = -p.a * u / ((c + 1.0) * (c + 1.0))
            - p.delta * u * p.c2 / ((c + p.c2) * (c + p.c2))
            - p.nu * v * p.c3 / ((c + p.c3) * (c + p.c3))
            - 1.0;
        let f_u = p.a / (c + 1.0) - p.delta * c / (c + p.c2);
        let f_v = -p.nu * c / (c + p.c3);

        let g_c = p.b * p.c1 / ((c + p.c1) * (c + p.c1)) * u;
        let g_u = p.b * c / (c + p.c1) - 2.0 * u - v * p.h / (uh * uh) - p.sigma;
        let g_v = -u / uh;

        let dmonod = 2.0 * c * c4sq / ((csq + c4sq) * (csq + c4sq));
        let h_c = p.eta * dmonod * u * v / uh;
        let h_u = p.eta * monod_c * v * p.h / (uh * uh);
        let h_v = p.eta * monod_c * u / uh - p.mu1 - 2.0 * p.mu2 * v;

        Partials {
            f_c,
            f_u,
            f_v,
            g_c,
            g_u,
            g_v,
            h_c,
            h_u,
            h_v,
        }
    }

    /// Determinant of the fast block, `F_c G_u - F_u G_c`.
    pub fn fast_det(&self) -> f64 {
        self.f_c * self.g_u - self.f_u * self.g_c
    }

    /// `(F_v G_u - F_u G_v, F_v G_c - F_c G_v)`; both vanish at a canard point.
    pub fn fold_degeneracy(&self) -> (f64, f64) {
        (
            self.f_v * self.g_u - self.f_u * self.g_v,
            self.f_v * self.g_c - self.f_c * self.g_v,
        )
    }
}

/// A real 3x3 matrix with the accessors used by the stability analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian3(pub [[f64; 3]; 3]);

impl Jacobian3 {
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Jacobian3(rows)
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Jacobian3([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    /// Entry `(i, j)`, zero-based.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Cofactor of the diagonal entry `i`: the principal 2x2 minor with row
    /// and column `i` removed.
    pub fn cofactor(&self, i: usize) -> f64 {
        let (a, b) = match i {
            0 => (1, 2),
            1 => (0, 2),
            2 => (0, 1),
            _ => panic!("cofactor index {i} out of range"),
        };
        let m = &self.0;
        m[a][a] * m[b][b] - m[a][b] * m[b][a]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.0[i][j])
    }

    /// The top-left 2x2 block.
    pub fn fast_block(&self) -> [[f64; 2]; 2] {
        [[self.0[0][0], self.0[0][1]], [self.0[1][0], self.0[1][1]]]
    }

    /// Eigenvalues sorted by descending real part.
    pub fn eigenvalues(&self) -> [Complex64; 3] {
        let eig = self.to_matrix().complex_eigenvalues();
        let mut out = [eig[0], eig[1], eig[2]];
        sort_by_real_desc(&mut out);
        out
    }
}

pub(crate) fn sort_by_real_desc(z: &mut [Complex64]) {
    z.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

/// Analytic Jacobian of `(F, G, eps H)`.
pub fn eval_jacobian(p: &ModelParams, s: &State) -> Result<Jacobian3> {
    let d = Partials::at(p, s);
    let j = Jacobian3([
        [d.f_c, d.f_u, d.f_v],
        [d.g_c, d.g_u, d.g_v],
        [p.eps * d.h_c, p.eps * d.h_u, p.eps * d.h_v],
    ]);
    if j.is_finite() {
        Ok(j)
    } else {
        Err(Error::Domain(format!("non-finite Jacobian at {s:?}")))
    }
}

/// Jacobian of the fast subsystem, `[[F_c, F_u], [G_c, G_u]]`.
pub fn eval_fast_jacobian(p: &ModelParams, s: &State) -> Result<[[f64; 2]; 2]> {
    let d = Partials::at(p, s);
    let j = [[d.f_c, d.f_u], [d.g_c, d.g_u]];
    if j.iter().flatten().all(|x| x.is_finite()) {
        Ok(j)
    } else {
        Err(Error::Domain(format!("non-finite fast Jacobian at {s:?}")))
    }
}

/// Eigenvalues of a real 2x2 matrix, larger real part first.
pub fn eigenvalues_2x2(m: &[[f64; 2]; 2]) -> [Complex64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // Avoid cancellation for the smaller root.
        let big = tr / 2.0 + r.copysign(tr);
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (a, b) = if big >= small {
            (big, small)
        } else {
            (small, big)
        };
        [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(tr / 2.0, im), Complex64::new(tr / 2.0, -im)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn finite_difference(p: &ModelParams, s: &State) -> [[f64; 3]; 3] {
        let step = 1e-6;
        let x = s.to_array();
        let mut out = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut hi = x;
            let mut lo = x;
            hi[j] += step;
            lo[j] -= step;
            let fh = rhs(p, hi[0], hi[1], hi[2]);
            let fl = rhs(p, lo[0], lo[1], lo[2]);
            for i in 0..3 {
                out[i][j] = (fh[i] - fl[i]) / (2.0 * step);
            }
        }
        out
    }

    fn assert_close_fd(analytic: f64, fd: f64) {
        let scale = analytic.abs().max(fd.abs()).max(1e-3);
        assert!(
            (analytic - fd).abs() <= 1e-5 * scale,
            "analytic {analytic} vs fd {fd}"
        );
    }

    #[test]
    fn defaults_match_parameter_table() {
        let p = ModelParams::default();
        assert_eq!((p.a, p.b, p.sigma), (4.0, 3.0, 0.1));
        assert_eq!((p.c1, p.c2, p.c3, p.c4), (0.7, 1.0, 1.0, 1.0));
        assert_eq!((p.eta, p.delta, p.nu, p.h), (0.7, 1.0, 0.01, 0.1));
        assert_eq!((p.mu1, p.mu2, p.eps), (0.0, 0.0, 1.0));
        p.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(ModelParams::default().with_eps(1.5).validate().is_err());
        assert!(ModelParams::default().with_eps(0.0).validate().is_err());
        assert!(ModelParams::default().with_mu1(-0.1).validate().is_err());
        let p = ModelParams {
            h: 0.0,
            ..ModelParams::default()
        };
        assert!(p.validate().is_err());
        let p = ModelParams {
            a: f64::NAN,
            ..ModelParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn rhs_at_origin_is_zero() {
        let p = ModelParams::default().with_mu1(0.05).with_mu2(0.5);
        assert_eq!(eval_rhs(&p, &State::ORIGIN).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn rhs_hand_substitution() {
        for (mu1, mu2) in [(0.0, 0.0), (0.3, 0.1), (0.05, 0.5)] {
            let p = ModelParams::default().with_mu1(mu1).with_mu2(mu2);
            let [dc, du, dv] = eval_rhs(&p, &State::new(1.0, 1.0, 0.0)).unwrap();
            assert!((dc - 0.5).abs() < 5e-7);
            assert!((du - 0.664706).abs() < 5e-7);
            assert_eq!(dv, 0.0);
        }
    }

    #[test]
    fn rhs_nearly_vanishes_at_reported_boundary_state() {
        let p = ModelParams::default();
        let r = eval_rhs(&p, &State::new(0.0258, 0.0067, 0.0)).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-2), "{r:?}");
    }

    #[test]
    fn rhs_non_finite_is_domain_error() {
        let p = ModelParams::default();
        // c = -1 hits the (c + 1) pole; outside the admissible orthant.
        assert!(matches!(
            eval_rhs(&p, &State::new(-1.0, 1.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn jacobian_at_origin() {
        let p = ModelParams::default().with_mu1(0.05).with_eps(0.5);
        let j = eval_jacobian(&p, &State::ORIGIN).unwrap();
        let expected = [[-1.0, 4.0, 0.0], [0.0, -0.1, 0.0], [0.0, 0.0, -0.025]];
        for i in 0..3 {
            for k in 0..3 {
                assert_relative_eq!(j.get(i, k), expected[i][k], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn j33_at_upper_boundary_state() {
        let p = ModelParams::default().with_mu1(0.05).with_eps(0.5);
        let s = State::new(1.712, 2.029, 0.0);
        let j = eval_jacobian(&p, &s).unwrap();
        let expected = p.eps * (p.assimilation(s.c, s.u) - p.mu1);
        assert_relative_eq!(j.get(2, 2), expected, max_relative = 1e-14);
        assert_close_fd(j.get(2, 2), finite_difference(&p, &s)[2][2]);
    }

    #[test]
    fn fast_jacobian_on_trivial_manifold() {
        let p = ModelParams::default();
        for v in [0.0, 0.5, 3.0] {
            let j = eval_fast_jacobian(&p, &State::new(0.0, 0.0, v)).unwrap();
            assert_relative_eq!(j[0][0], -1.0 - p.nu * v / p.c3, epsilon = 1e-15);
            assert_relative_eq!(j[0][1], p.a, epsilon = 1e-15);
            assert_eq!(j[1][0], 0.0);
            assert_relative_eq!(j[1][1], -v / p.h - p.sigma, epsilon = 1e-14);
        }
    }

    #[test]
    fn cofactors_trace_det_consistent() {
        let j = Jacobian3([[1.0, 2.0, 3.0], [0.5, -1.0, 4.0], [2.0, 1.0, -3.0]]);
        assert_eq!(j.trace(), -3.0);
        let m = j.to_matrix();
        assert_relative_eq!(j.det(), m.determinant(), epsilon = 1e-12);
        assert_eq!(j.cofactor(0), -1.0 * -3.0 - 4.0 * 1.0);
        assert_eq!(j.cofactor(1), 1.0 * -3.0 - 3.0 * 2.0);
        assert_eq!(j.cofactor(2), -1.0 - 2.0 * 0.5);
    }

    #[test]
    fn eigenvalues_2x2_cases() {
        let e = eigenvalues_2x2(&[[-1.0, 4.0], [0.0, -0.1]]);
        assert_relative_eq!(e[0].re, -0.1, epsilon = 1e-15);
        assert_relative_eq!(e[1].re, -1.0, epsilon = 1e-15);
        let e = eigenvalues_2x2(&[[0.0, 1.0], [-4.0, 0.0]]);
        assert_relative_eq!(e[0].im.abs(), 2.0, epsilon = 1e-15);
    }

    fn state_strategy() -> impl Strategy<Value = State> {
        (0.0..5.0f64, 0.0..5.0f64, 0.0..5.0f64).prop_map(|(c, u, v)| State::new(c, u, v))
    }

    fn params_strategy() -> impl Strategy<Value = ModelParams> {
        (0.0..0.5f64, 0.0..1.0f64, 0.01..1.0f64).prop_map(|(mu1, mu2, eps)| {
            ModelParams::default()
                .with_mu1(mu1)
                .with_mu2(mu2)
                .with_eps(eps)
        })
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_differences(s in state_strategy(), p in params_strategy()) {
            // Stay clear of the c = 0 kink of the one-sided stencil.
            let s = State::new(s.c + 1e-3, s.u + 1e-3, s.v);
            let j = eval_jacobian(&p, &s).unwrap();
            let fd = finite_difference(&p, &s);
            for i in 0..3 {
                for k in 0..3 {
                    assert_close_fd(j.get(i, k), fd[i][k]);
                }
            }
            let fast = eval_fast_jacobian(&p, &s).unwrap();
            prop_assert_eq!(fast, j.fast_block());
        }

        #[test]
        fn flow_points_into_orthant(s in state_strategy(), p in params_strategy()) {
            let [f, _, _] = rhs(&p, 0.0, s.u, s.v);
            prop_assert!(f >= 0.0);
            let [_, g, _] = rhs(&p, s.c, 0.0, s.v);
            prop_assert_eq!(g, 0.0);
            let [_, _, h] = rhs(&p, s.c, s.u, 0.0);
            prop_assert_eq!(h, 0.0);
        }

        #[test]
        fn third_component_is_linear_in_eps(s in state_strategy(), eps in 0.01..1.0f64) {
            let p = ModelParams::default().with_mu1(0.1).with_mu2(0.2);
            let full = rhs(&p.with_eps(1.0), s.c, s.u, s.v)[2];
            let scaled = rhs(&p.with_eps(eps), s.c, s.u, s.v)[2];
            prop_assert!((scaled - eps * full).abs() <= 1e-14 * full.abs().max(1.0));
        }
    }
}
