//! Dispersion relation of the homogeneous steady state under diffusion
//! `(1, 1, D)` and the Turing conditions.

use serde::{Deserialize, Serialize};

use crate::bifurcation::{char_poly, routh_hurwitz_stable, CharPoly};
use crate::error::{Error, Result};
use crate::model::{eval_jacobian, Jacobian3, ModelParams, State};
use crate::parallel::Execution;

/// Coefficients of the characteristic polynomial of `J - k2 diag(1, 1, D)`.
pub fn dispersion_coeffs(j: &Jacobian3, d: f64, k2: f64) -> CharPoly {
    let g = |r: usize, c: usize| j.get(r, c);
    let tr = j.trace();
    let s = g(0, 0) + g(1, 1);
    let j33 = g(2, 2);
    let (a1, a2, a3) = (j.cofactor(0), j.cofactor(1), j.cofactor(2));
    let k4 = k2 * k2;
    CharPoly {
        p2: (2.0 + d) * k2 - tr,
        p1: (1.0 + 2.0 * d) * k4 - (s + 2.0 * j33 + d * s) * k2 + a1 + a2 + a3,
        p0: d * k4 * k2 - (s * d + j33) * k4 + (a1 + a2 + d * a3) * k2 - j.det(),
    }
}

/// Stationary point of `p0(k2)` with the larger root, where `p0` is smallest.
pub fn critical_wavenumber(j: &Jacobian3, d: f64) -> Option<f64> {
    if d.is_nan() || d <= 0.0 {
        return None;
    }
    let s = j.get(0, 0) + j.get(1, 1);
    let j33 = j.get(2, 2);
    let (a1, a2, a3) = (j.cofactor(0), j.cofactor(1), j.cofactor(2));
    let lambda = d * d * (s * s - 3.0 * a3) + d * (2.0 * j33 * s - 3.0 * (a1 + a2)) + j33 * j33;
    if lambda.is_nan() || lambda < 0.0 {
        return None;
    }
    let k2 = s / 3.0 + (j33 + lambda.sqrt()) / (3.0 * d);
    (k2 > 0.0).then_some(k2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TuringVerdict {
    NoInstability,
    Turing,
    TuringHopf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSample {
    pub k2: f64,
    pub p2: f64,
    pub p1: f64,
    pub p0: f64,
    pub max_growth: f64,
}

/// Admissible zero-flux mode `k = m pi / L` closest to a target wavenumber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub m: usize,
    pub k2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionCurve {
    pub samples: Vec<DispersionSample>,
    pub verdict: TuringVerdict,
    /// First interval of `k2` on which `p0 < 0`.
    pub unstable_band: Option<(f64, f64)>,
    /// Closed-form critical wavenumber squared.
    pub k_t2: Option<f64>,
    /// Minimiser of `p0` from the scan, refined by a parabola through the
    /// smallest sample and its neighbours.
    pub scan_argmin: Option<f64>,
    pub nearest_mode: Option<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    pub k2_max: f64,
    pub k2_step: f64,
    /// Domain length used for the admissible-mode report.
    pub length: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            k2_max: 4.0,
            k2_step: 1e-3,
            length: 500.0,
            exec: Execution::default(),
        }
    }
}

pub fn turing_test(p: &ModelParams, eq: &State, d: f64) -> Result<DispersionCurve> {
    turing_test_with(p, eq, d, &ScanOptions::default())
}

pub fn turing_test_with(
    p: &ModelParams,
    eq: &State,
    d: f64,
    opts: &ScanOptions,
) -> Result<DispersionCurve> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::config(format!(
            "diffusivity must be positive, got {d}"
        )));
    }
    if !(opts.k2_max > 0.0 && opts.k2_step > 0.0 && opts.length > 0.0) {
        return Err(Error::config("k2_max, k2_step and length must be positive"));
    }
    let j = eval_jacobian(p, eq)?;
    Ok(scan(&j, d, opts))
}

/// Dispersion scan for an explicit Jacobian.
pub fn scan(j: &Jacobian3, d: f64, opts: &ScanOptions) -> DispersionCurve {
    let n = (opts.k2_max / opts.k2_step).round() as usize + 1;
    let samples = opts.exec.map_range(n, |i| {
        let k2 = i as f64 * opts.k2_step;
        let cp = dispersion_coeffs(j, d, k2);
        let max_growth = cp
            .roots()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        DispersionSample {
            k2,
            p2: cp.p2,
            p1: cp.p1,
            p0: cp.p0,
            max_growth,
        }
    });

    let stable0 = routh_hurwitz_stable(&char_poly(j));
    let any_negative = samples.iter().any(|s| s.p0 < 0.0);
    let verdict = match (any_negative, stable0) {
        (true, true) => TuringVerdict::Turing,
        (true, false) => TuringVerdict::TuringHopf,
        _ => TuringVerdict::NoInstability,
    };

    let crossing =
        |a: &DispersionSample, b: &DispersionSample| a.k2 + (b.k2 - a.k2) * a.p0 / (a.p0 - b.p0);
    let unstable_band = samples.iter().position(|s| s.p0 < 0.0).map(|i| {
        let lo = if i == 0 {
            0.0
        } else {
            crossing(&samples[i - 1], &samples[i])
        };
        let end = samples[i..].iter().position(|s| s.p0 >= 0.0).map(|e| e + i);
        let hi = match end {
            Some(e) => crossing(&samples[e - 1], &samples[e]),
            None => samples[samples.len() - 1].k2,
        };
        (lo, hi)
    });

    let scan_argmin = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.p0.total_cmp(&b.1.p0))
        .and_then(|(i, _)| {
            if i == 0 || i + 1 == samples.len() {
                return None;
            }
            let (y0, y1, y2) = (samples[i - 1].p0, samples[i].p0, samples[i + 1].p0);
            let curv = y0 - 2.0 * y1 + y2;
            let shift = if curv > 0.0 {
                0.5 * (y0 - y2) / curv
            } else {
                0.0
            };
            Some(samples[i].k2 + shift * opts.k2_step)
        });

    let k_t2 = critical_wavenumber(j, d);
    let nearest_mode = k_t2.map(|k2| {
        let unit = std::f64::consts::PI / opts.length;
        let m = (k2.sqrt() / unit).round().max(1.0) as usize;
        Mode {
            m,
            k2: (m as f64 * unit).powi(2),
        }
    });

    DispersionCurve {
        samples,
        verdict,
        unstable_band,
        k_t2,
        scan_argmin,
        nearest_mode,
    }
}

pub fn write_dispersion_csv<W: std::io::Write>(
    mut w: W,
    curve: &DispersionCurve,
) -> std::io::Result<()> {
    writeln!(w, "k2,p2,p1,p0,max_growth")?;
    for s in &curve.samples {
        writeln!(
            w,
            "{:.14e},{:.14e},{:.14e},{:.14e},{:.14e}",
            s.k2, s.p2, s.p1, s.p0, s.max_growth
        )?;
    }
    Ok(())
}
