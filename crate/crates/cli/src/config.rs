//! Run configuration: one JSON document per invocation.

use std::path::PathBuf;

use oxydyn_core::bifurcation::{
    ClassifyOptions, DiagramOptions, HopfOptions, Parameter, ProbeOptions,
};
use oxydyn_core::diagnostics::DEFAULT_OMZ_FRACTION;
use oxydyn_core::equilibria::SearchOptions;
use oxydyn_core::ode::{Scheme, EXTINCTION_THRESHOLD};
use oxydyn_core::pde::InitialCondition;
use oxydyn_core::slowfast::TraceOptions;
use oxydyn_core::{Error as CoreError, Execution, ModelParams, State};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelParams,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub execution: Execution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// All components below this count as extinct.
    pub extinction: f64,
    /// Global anoxia when every node has `c` below this fraction of `c*`.
    pub anoxia: f64,
    /// OMZ patches are where `c` is below this fraction of `c*`.
    pub omz_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            extinction: EXTINCTION_THRESHOLD,
            anoxia: 0.05,
            omz_fraction: DEFAULT_OMZ_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Equilibria {
        #[serde(default)]
        search: SearchOptions,
    },
    Hopf {
        parameter: Parameter,
        bracket: (f64, f64),
        #[serde(default)]
        options: HopfOptions,
        /// Run the criticality probe at the located threshold.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probe: Option<ProbeOptions>,
    },
    SaddleNode {
        parameter: Parameter,
        bracket: (f64, f64),
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default)]
        search: SearchOptions,
    },
    Diagram {
        parameter: Parameter,
        range: (f64, f64),
        samples: usize,
        #[serde(default)]
        options: DiagramOptions,
    },
    Manifold {
        /// Defaults to the homogeneous coexistence state.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<State>,
        #[serde(default)]
        trace: TraceOptions,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slow_flow: Option<SlowFlowTask>,
    },
    Ode {
        ic: State,
        #[serde(default = "default_ode_dt")]
        dt: f64,
        t_end: f64,
        #[serde(default = "default_stride")]
        record_stride: usize,
        #[serde(default)]
        scheme: Scheme,
    },
    Pde {
        diffusivity: f64,
        #[serde(default)]
        grid: GridSpec,
        #[serde(default)]
        ic: InitialCondition,
        #[serde(default = "default_pde_dt")]
        dt: f64,
        #[serde(default = "default_pde_t_end")]
        t_end: f64,
        #[serde(default = "default_snapshot_interval")]
        snapshot_interval: f64,
        #[serde(default)]
        stop_on_anoxia: bool,
    },
    Turing {
        diffusivity: f64,
        /// Defaults to the homogeneous coexistence state.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        equilibrium: Option<State>,
        #[serde(default = "default_k2_max")]
        k2_max: f64,
        #[serde(default = "default_k2_step")]
        k2_step: f64,
        /// Domain length for the admissible-mode report.
        #[serde(default = "default_length")]
        length: f64,
    },
    Classify {
        ic: State,
        #[serde(default)]
        options: ClassifyOptions,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowFlowTask {
    /// Index of the traced manifold point to start from.
    pub start_point: usize,
    pub dtau: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub length: f64,
    pub dx: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            length: 500.0,
            dx: 1.0,
        }
    }
}

fn default_tol() -> f64 {
    1e-6
}
fn default_ode_dt() -> f64 {
    1e-3
}
fn default_stride() -> usize {
    100
}
fn default_pde_dt() -> f64 {
    0.01
}
fn default_pde_t_end() -> f64 {
    2000.0
}
fn default_snapshot_interval() -> f64 {
    50.0
}
fn default_k2_max() -> f64 {
    4.0
}
fn default_k2_step() -> f64 {
    1e-3
}
fn default_length() -> f64 {
    500.0
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Equilibria { .. } => "equilibria",
            Task::Hopf { .. } => "hopf",
            Task::SaddleNode { .. } => "saddle-node",
            Task::Diagram { .. } => "diagram",
            Task::Manifold { .. } => "manifold",
            Task::Ode { .. } => "ode",
            Task::Pde { .. } => "pde",
            Task::Turing { .. } => "turing",
            Task::Classify { .. } => "classify",
        }
    }
}

/// A schema violation, with the JSON path of the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parse and validate. Nothing is computed before this succeeds.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Pretty JSON with every default filled in.
pub fn emit_config(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config is always serializable")
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

fn positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            path,
            format!("must be positive and finite, got {x}"),
        ))
    }
}

fn ordered(path: &str, (lo, hi): (f64, f64)) -> Result<(), ConfigError> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(invalid(
            path,
            format!("must satisfy lo < hi, got [{lo}, {hi}]"),
        ))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Err(CoreError::InvalidParameter { name, reason }) = self.model.validate() {
            return Err(invalid(&format!("model.{name}"), reason));
        }
        let th = &self.thresholds;
        positive("thresholds.extinction", th.extinction)?;
        if !(th.anoxia > 0.0 && th.anoxia < 1.0) {
            return Err(invalid(
                "thresholds.anoxia",
                format!("must lie in (0, 1), got {}", th.anoxia),
            ));
        }
        if !(th.omz_fraction > 0.0 && th.omz_fraction < 1.0) {
            return Err(invalid(
                "thresholds.omz_fraction",
                format!("must lie in (0, 1), got {}", th.omz_fraction),
            ));
        }
        match &self.task {
            Task::Equilibria { search } | Task::SaddleNode { search, .. } => {
                positive("task.search.c_max", search.c_max)?;
                positive("task.search.u_max", search.u_max)?;
                if search.grid == 0 {
                    return Err(invalid("task.search.grid", "must be at least 1"));
                }
                if let Task::SaddleNode { bracket, tol, .. } = &self.task {
                    ordered("task.bracket", *bracket)?;
                    positive("task.tol", *tol)?;
                }
            }
            Task::Hopf {
                bracket, options, ..
            } => {
                ordered("task.bracket", *bracket)?;
                positive("task.options.tol", options.tol)?;
            }
            Task::Diagram { range, samples, .. } => {
                ordered("task.range", *range)?;
                if *samples < 2 {
                    return Err(invalid("task.samples", "must be at least 2"));
                }
            }
            Task::Manifold {
                trace, slow_flow, ..
            } => {
                positive("task.trace.arc_step", trace.arc_step)?;
                if let Some(sf) = slow_flow {
                    positive("task.slow_flow.dtau", sf.dtau)?;
                    positive("task.slow_flow.t_end", sf.t_end)?;
                }
            }
            Task::Ode {
                dt,
                t_end,
                record_stride,
                ..
            } => {
                positive("task.dt", *dt)?;
                positive("task.t_end", *t_end)?;
                if *record_stride == 0 {
                    return Err(invalid("task.record_stride", "must be at least 1"));
                }
            }
            Task::Pde {
                diffusivity,
                grid,
                dt,
                t_end,
                snapshot_interval,
                ..
            } => {
                positive("task.diffusivity", *diffusivity)?;
                positive("task.grid.length", grid.length)?;
                positive("task.grid.dx", grid.dx)?;
                positive("task.dt", *dt)?;
                positive("task.t_end", *t_end)?;
                positive("task.snapshot_interval", *snapshot_interval)?;
            }
            Task::Turing {
                diffusivity,
                k2_max,
                k2_step,
                length,
                ..
            } => {
                positive("task.diffusivity", *diffusivity)?;
                positive("task.k2_max", *k2_max)?;
                positive("task.k2_step", *k2_step)?;
                positive("task.length", *length)?;
            }
            Task::Classify { .. } => {}
        }
        Ok(())
    }
}
