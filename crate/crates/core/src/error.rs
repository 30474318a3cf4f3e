use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter set that violates the model invariants.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A model evaluation produced a non-finite value.
    #[error("domain error: {0}")]
    Domain(String),

    /// Bad numerical settings (step sizes, horizons, grid sizes).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid error: {0}")]
    Grid(String),

    /// Explicit time step above the diffusion stability guard.
    #[error("time step dt = {dt} exceeds the stability bound {bound} (0.3 * dx^2 * 12 / (30 * max(1, D)))")]
    StabilityGuard { dt: f64, bound: f64 },

    /// Threshold search whose bracket has no sign (or count) change.
    #[error("bracket [{lo}, {hi}] does not enclose a threshold: {reason}")]
    Bracket { lo: f64, hi: f64, reason: String },

    /// The tracked equilibrium branch disappeared inside a bracket.
    #[error("equilibrium branch lost near {at}: {reason}")]
    Branch { at: f64, reason: String },

    #[error("root at {at} is not a Hopf point: p1 = {p1} <= 0")]
    NotHopf { at: f64, p1: f64 },

    #[error("seed could not be refined onto the critical manifold: {0}")]
    Seed(String),

    #[error("slow flow left the critical manifold at tau = {tau}")]
    ManifoldLoss { tau: f64 },

    #[error("integration failure at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    /// Non-finite field value in the spatial solver.
    #[error("blow-up at t = {time}, node {node}")]
    Blowup { time: f64, node: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
