//! Oxygen-minimum-zone metrics and regime labels for spatial runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{spatial_mean, FieldState, MeanSample, SpaceTimeRecord};

pub const DEFAULT_OMZ_FRACTION: f64 = 0.5;

/// Contiguous region with `c < fraction * c_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub start: f64,
    pub end: f64,
    pub min_c: f64,
}

impl Patch {
    pub fn width(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmzSnapshot {
    pub time: f64,
    pub patches: Vec<Patch>,
    pub total_width: f64,
    pub count: usize,
}

/// Patches of one field; ends sit at linearly interpolated crossings.
pub fn omz_patches(field: &FieldState, dx: f64, c_ref: f64, omz_fraction: f64) -> OmzSnapshot {
    let thr = omz_fraction * c_ref;
    let c = &field.c;
    let n = c.len();
    let cross = |i: usize, j: usize| {
        // Crossing between nodes i (above) and j (below) or the reverse.
        let (a, b) = (c[i], c[j]);
        let t = if a != b { (a - thr) / (a - b) } else { 0.5 };
        (i as f64 + t * (j as f64 - i as f64)) * dx
    };
    let mut patches = Vec::new();
    let mut i = 0;
    while i < n {
        if c[i] >= thr {
            i += 1;
            continue;
        }
        let s = i;
        let mut min_c = c[i];
        while i < n && c[i] < thr {
            min_c = min_c.min(c[i]);
            i += 1;
        }
        let e = i - 1;
        let start = if s == 0 { 0.0 } else { cross(s - 1, s) };
        let end = if e + 1 == n {
            (n - 1) as f64 * dx
        } else {
            cross(e + 1, e)
        };
        patches.push(Patch { start, end, min_c });
    }
    OmzSnapshot {
        time: field.time,
        total_width: patches.iter().map(Patch::width).fold(0.0, |a, w| a + w),
        count: patches.len(),
        patches,
    }
}

pub fn omz_series(record: &SpaceTimeRecord, omz_fraction: f64) -> Vec<OmzSnapshot> {
    record
        .snapshots
        .iter()
        .map(|f| omz_patches(f, record.grid.dx, record.c_ref(), omz_fraction))
        .collect()
}

/// Trapezoidal spatial means of every snapshot.
pub fn mean_series(record: &SpaceTimeRecord) -> Vec<MeanSample> {
    record
        .snapshots
        .iter()
        .map(|f| MeanSample {
            t: f.time,
            c: spatial_mean(&f.c),
            u: spatial_mean(&f.u),
            v: spatial_mean(&f.v),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeLabel {
    UniformSteady,
    LocalizedOMZ,
    StationaryPeriodic,
    DynamicIrregular,
    GlobalAnoxia,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeThresholds {
    pub omz_fraction: f64,
    /// Spatial range and late mean-series range below which a run is uniform.
    pub uniform_tol: f64,
    /// Max-norm change between the last snapshot and the one `stationary_lag` earlier.
    pub stationary_tol: f64,
    pub stationary_lag: f64,
    /// Spatial range of `c`, relative to `c_ref`, required for a pattern.
    pub pattern_amplitude: f64,
    /// OMZ width, as a fraction of the domain, below which it is localised.
    pub localized_width: f64,
    /// Largest localised growth, as a fraction of the domain per 100 time units.
    pub growth_slope: f64,
    pub min_snapshots: usize,
    pub min_t_end: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            omz_fraction: DEFAULT_OMZ_FRACTION,
            uniform_tol: 1e-3,
            stationary_tol: 1e-3,
            stationary_lag: 50.0,
            pattern_amplitude: 0.1,
            localized_width: 0.4,
            growth_slope: 0.01,
            min_snapshots: 30,
            min_t_end: 1500.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub final_spatial_range: f64,
    pub final_spatial_variance: f64,
    pub late_mean_range: f64,
    pub late_mean_variance: f64,
    pub stationarity: f64,
    pub final_omz_width: f64,
    pub final_patch_count: usize,
    /// Least-squares OMZ width growth over the second half, per 100 time units.
    pub omz_growth_slope: f64,
    /// Number of spatial oscillations of `c` about `c_ref` at the end.
    pub oscillations: f64,
    pub anoxia_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub label: RegimeLabel,
    pub evidence: Evidence,
    pub thresholds: RegimeThresholds,
}

pub fn classify_regime(record: &SpaceTimeRecord, c_ref: f64) -> Result<RegimeReport> {
    classify_regime_with(record, c_ref, &RegimeThresholds::default())
}

/// Half the number of sign changes of `c - c_ref` across the domain.
pub fn spatial_oscillations(f: &FieldState, c_ref: f64) -> f64 {
    let s: Vec<f64> =
        f.c.iter()
            .map(|c| c - c_ref)
            .filter(|x| *x != 0.0)
            .collect();
    s.windows(2)
        .filter(|w| w[0].signum() != w[1].signum())
        .count() as f64
        / 2.0
}

fn variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count().max(1) as f64;
    let m = xs.clone().sum::<f64>() / n;
    xs.map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

fn range(xs: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    hi - lo
}

pub fn classify_regime_with(
    record: &SpaceTimeRecord,
    c_ref: f64,
    th: &RegimeThresholds,
) -> Result<RegimeReport> {
    if c_ref.is_nan() || c_ref <= 0.0 {
        return Err(Error::config(format!(
            "c_ref must be positive, got {c_ref}"
        )));
    }
    let n = record.snapshots.len();
    let t_end = record.t_end();
    if record.anoxia_time().is_none() && (n < th.min_snapshots || t_end < th.min_t_end) {
        return Err(Error::InsufficientData(format!(
            "{n} snapshots up to t = {t_end}; need {} snapshots and t_end >= {}",
            th.min_snapshots, th.min_t_end
        )));
    }
    if n == 0 {
        return Err(Error::InsufficientData("record has no snapshots".into()));
    }
    let last = &record.snapshots[n - 1];
    let lagged = record
        .snapshots
        .iter()
        .rev()
        .find(|f| f.time <= last.time - th.stationary_lag + 1e-9)
        .unwrap_or(&record.snapshots[0]);
    let late: Vec<&MeanSample> = record.means.iter().filter(|m| m.t >= 0.5 * t_end).collect();
    let late_c = late.iter().map(|m| m.c);
    let omz = omz_series(record, th.omz_fraction);
    let half: Vec<&OmzSnapshot> = omz.iter().filter(|o| o.time >= 0.5 * t_end).collect();
    let slope = if half.len() >= 2 {
        let tm = half.iter().map(|o| o.time).sum::<f64>() / half.len() as f64;
        let wm = half.iter().map(|o| o.total_width).sum::<f64>() / half.len() as f64;
        let num: f64 = half
            .iter()
            .map(|o| (o.time - tm) * (o.total_width - wm))
            .sum();
        let den: f64 = half.iter().map(|o| (o.time - tm).powi(2)).sum();
        if den > 0.0 {
            100.0 * num / den
        } else {
            0.0
        }
    } else {
        0.0
    };
    let fin = omz.last().unwrap();
    let evidence = Evidence {
        final_spatial_range: range(last.c.iter().copied()),
        final_spatial_variance: variance(last.c.iter().copied()),
        late_mean_range: range(late_c.clone()),
        late_mean_variance: variance(late_c),
        stationarity: last.distance(lagged),
        final_omz_width: fin.total_width,
        final_patch_count: fin.count,
        omz_growth_slope: slope,
        oscillations: spatial_oscillations(last, c_ref),
        anoxia_time: record.anoxia_time(),
    };
    let length = record.grid.length;
    let label = if evidence.anoxia_time.is_some() {
        RegimeLabel::GlobalAnoxia
    } else if evidence.final_spatial_range < th.uniform_tol
        && evidence.late_mean_range < th.uniform_tol
    {
        RegimeLabel::UniformSteady
    } else if evidence.final_spatial_range >= th.pattern_amplitude * c_ref
        && evidence.stationarity < th.stationary_tol
    {
        RegimeLabel::StationaryPeriodic
    } else if evidence.final_omz_width < th.localized_width * length
        && slope < th.growth_slope * length
    {
        RegimeLabel::LocalizedOMZ
    } else {
        RegimeLabel::DynamicIrregular
    };
    Ok(RegimeReport {
        label,
        evidence,
        thresholds: *th,
    })
}
