use serde::{Deserialize, Serialize};

use super::attractor::{attractor_classify_with, Attractor, ClassifyOptions};
use super::thresholds::{locate_hopf, nearest, poly_at, saddle_node_threshold_with, HopfOptions};
use super::{routh_hurwitz_stable, Parameter};
use crate::equilibria::{all_equilibria, EquilibriumKind, EquilibriumReport, SearchOptions};
use crate::error::{Error, Result};
use crate::model::{ModelParams, State};
use crate::parallel::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Hopf,
    SaddleNode,
    /// A stable cycle appears or vanishes without a local bifurcation of the
    /// tracked equilibrium (heteroclinic or saddle-node of cycles).
    CycleDisappearance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub kind: ThresholdKind,
    pub value: f64,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramSample {
    pub value: f64,
    pub equilibria: Vec<EquilibriumReport>,
    pub near_seed: Option<State>,
    pub near: Option<Attractor>,
    pub far_seed: Option<State>,
    pub far: Option<Attractor>,
    /// Set when a sub-operation failed for this sample.
    pub error: Option<String>,
}

impl DiagramSample {
    fn coexistence(&self) -> Vec<State> {
        self.equilibria
            .iter()
            .filter(|e| e.kind == EquilibriumKind::Coexistence)
            .map(|e| e.location)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub parameter: Parameter,
    pub samples: Vec<DiagramSample>,
    pub thresholds: Vec<Threshold>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagramOptions {
    pub classify: ClassifyOptions,
    /// Displacement in `c` of the near-equilibrium seed.
    pub seed_offset: f64,
    /// Scale of the far seed relative to the equilibrium.
    pub far_scale: f64,
    /// Refine Hopf and saddle-node thresholds by bisection.
    pub refine: bool,
    #[serde(skip)]
    pub search: SearchOptions,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        DiagramOptions {
            classify: ClassifyOptions::default(),
            seed_offset: 1e-2,
            far_scale: 1.5,
            refine: true,
            search: SearchOptions::default(),
            exec: Execution::default(),
        }
    }
}

pub fn bifurcation_diagram(
    p: &ModelParams,
    which: Parameter,
    range: (f64, f64),
    n_samples: usize,
) -> Result<BifurcationDiagram> {
    bifurcation_diagram_with(p, which, range, n_samples, &DiagramOptions::default())
}

fn sample(p: &ModelParams, value: f64, opts: &DiagramOptions) -> DiagramSample {
    let mut out = DiagramSample {
        value,
        equilibria: Vec::new(),
        near_seed: None,
        near: None,
        far_seed: None,
        far: None,
        error: None,
    };
    let mut search = opts.search;
    // Samples already run concurrently.
    search.exec = Execution::Sequential;
    match all_equilibria(p, &search) {
        Ok(eqs) => out.equilibria = eqs,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    }
    // Largest-c coexistence state, else the largest-c zooplankton-free state.
    let pick = |kind: EquilibriumKind| {
        out.equilibria
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.location)
            .max_by(|a, b| a.c.total_cmp(&b.c))
    };
    let anchor =
        pick(EquilibriumKind::Coexistence).or_else(|| pick(EquilibriumKind::ZooplanktonFree));
    let Some(anchor) = anchor else {
        out.error = Some("no nontrivial equilibrium to seed from".into());
        return out;
    };
    let near_seed = if anchor.v > 0.0 {
        anchor.offset(opts.seed_offset, 0.0, 0.0)
    } else {
        anchor.offset(opts.seed_offset, 0.0, opts.seed_offset)
    };
    let far_seed = if anchor.v > 0.0 {
        anchor.scaled(opts.far_scale)
    } else {
        anchor
            .scaled(opts.far_scale)
            .offset(0.0, 0.0, opts.far_scale * opts.seed_offset)
    };
    out.near_seed = Some(near_seed);
    out.far_seed = Some(far_seed);
    match attractor_classify_with(p, &near_seed, &opts.classify) {
        Ok(a) => out.near = Some(a),
        Err(e) => out.error = Some(e.to_string()),
    }
    match attractor_classify_with(p, &far_seed, &opts.classify) {
        Ok(a) => out.far = Some(a),
        Err(e) => {
            out.error.get_or_insert(e.to_string());
        }
    }
    out
}

/// Sample `n_samples` parameter values, classify attractors from a near and a
/// far seed, and locate thresholds between neighbouring samples.
pub fn bifurcation_diagram_with(
    p: &ModelParams,
    which: Parameter,
    (lo, hi): (f64, f64),
    n_samples: usize,
    opts: &DiagramOptions,
) -> Result<BifurcationDiagram> {
    if n_samples < 2 {
        return Err(Error::config("n_samples must be at least 2"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::config(format!(
            "range must satisfy lo < hi, got ({lo}, {hi})"
        )));
    }
    p.validate()?;
    let xs: Vec<f64> = (0..n_samples)
        .map(|k| lo + (hi - lo) * k as f64 / (n_samples - 1) as f64)
        .collect();
    let samples = opts.exec.map(&xs, |&x| sample(&which.set(p, x), x, opts));

    let mut thresholds = Vec::new();
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.error.is_some() || b.error.is_some() {
            continue;
        }
        let bracket = (a.value, b.value);
        let (ca, cb) = (a.coexistence(), b.coexistence());

        // Two equilibria merge or appear together.
        if ca.len().abs_diff(cb.len()) == 2 {
            let value = if opts.refine {
                saddle_node_threshold_with(p, which, bracket, 1e-6, &opts.search)
                    .unwrap_or(0.5 * (a.value + b.value))
            } else {
                0.5 * (a.value + b.value)
            };
            thresholds.push(Threshold {
                kind: ThresholdKind::SaddleNode,
                value,
                bracket,
            });
        }

        let mut hopf_here = false;
        for s in &ca {
            let Some(t) = nearest(&cb, s, f64::INFINITY) else {
                continue;
            };
            let pa = poly_at(&which.set(p, a.value), s)?;
            let pb = poly_at(&which.set(p, b.value), &t)?;
            if routh_hurwitz_stable(&pa) != routh_hurwitz_stable(&pb) && pa.p0 > 0.0 && pb.p0 > 0.0
            {
                hopf_here = true;
                let value = if opts.refine {
                    let h = HopfOptions {
                        track_samples: 4,
                        search: opts.search,
                        ..Default::default()
                    };
                    locate_hopf(p, which, bracket, &h)
                        .map_or(0.5 * (a.value + b.value), |h| h.value)
                } else {
                    0.5 * (a.value + b.value)
                };
                thresholds.push(Threshold {
                    kind: ThresholdKind::Hopf,
                    value,
                    bracket,
                });
            }
        }

        if !hopf_here {
            let flips = [(a.near, b.near), (a.far, b.far)]
                .into_iter()
                .any(|(x, y)| match (x, y) {
                    (Some(x), Some(y)) => {
                        let cyc = |z: &Attractor| matches!(z, Attractor::LimitCycle { .. });
                        cyc(&x) != cyc(&y)
                    }
                    _ => false,
                });
            if flips {
                thresholds.push(Threshold {
                    kind: ThresholdKind::CycleDisappearance,
                    value: 0.5 * (a.value + b.value),
                    bracket,
                });
            }
        }
    }
    Ok(BifurcationDiagram {
        parameter: which,
        samples,
        thresholds,
    })
}
