//! Local stability, threshold location and one-parameter diagrams.

mod attractor;
mod criticality;
mod diagram;
mod thresholds;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{Jacobian3, ModelParams};
use crate::poly;

pub use attractor::{attractor_classify, attractor_classify_with, Attractor, ClassifyOptions};
pub use criticality::{
    criticality_probe, criticality_probe_with, Criticality, ProbeOptions, ProbeReport, RunOutcome,
};
pub use diagram::{
    bifurcation_diagram, bifurcation_diagram_with, BifurcationDiagram, DiagramOptions,
    DiagramSample, Threshold, ThresholdKind,
};
pub use thresholds::{
    hopf_threshold, locate_hopf, saddle_node_threshold, saddle_node_threshold_with, HopfOptions,
    HopfPoint,
};

/// Coefficients of `lambda^3 + p2 lambda^2 + p1 lambda + p0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharPoly {
    pub p2: f64,
    pub p1: f64,
    pub p0: f64,
}

impl CharPoly {
    /// `p1 p2 - p0`; changes sign at a Hopf point.
    pub fn hopf_function(&self) -> f64 {
        self.p1 * self.p2 - self.p0
    }

    pub fn roots(&self) -> Vec<Complex64> {
        poly::roots(&[1.0, self.p2, self.p1, self.p0])
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        poly::eval(&[1.0, self.p2, self.p1, self.p0], lambda)
    }
}

pub fn char_poly(j: &Jacobian3) -> CharPoly {
    CharPoly {
        p2: -j.trace(),
        p1: j.cofactor(0) + j.cofactor(1) + j.cofactor(2),
        p0: -j.det(),
    }
}

/// All roots in the open left half-plane: `p0 > 0`, `p2 > 0`, `p1 p2 > p0`.
pub fn routh_hurwitz_stable(cp: &CharPoly) -> bool {
    cp.p0 > 0.0 && cp.p2 > 0.0 && cp.p1 * cp.p2 > cp.p0
}

/// The zooplankton mortality rate swept by a threshold search or diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Mu1,
    Mu2,
}

impl Parameter {
    pub fn set(self, p: &ModelParams, value: f64) -> ModelParams {
        match self {
            Parameter::Mu1 => p.with_mu1(value),
            Parameter::Mu2 => p.with_mu2(value),
        }
    }

    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            Parameter::Mu1 => p.mu1,
            Parameter::Mu2 => p.mu2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Parameter::Mu1 => "mu1",
            Parameter::Mu2 => "mu2",
        }
    }
}
