//! Exact event-driven simulation and bifurcation analysis of a bandpass
//! filter driven by its own delayed relay output:
//!
//! ```text
//! (Q/Ω) x'(t) = -x(t) - y(t) + σ sign(x(t-1))
//!       y'(t) = QΩ x(t)
//! ```
//!
//! Modules, bottom up:
//!
//! * [`flow`]: closed-form flows with frozen relay output,
//! * [`sim`] and [`classify`]: event-to-event simulation and orbit labelling,
//! * [`map`]: the reduced map of four-symbol symmetric solutions, its fixed
//!   points, Jacobian and characteristic roots,
//! * [`atlas`]: bifurcation loci, region scans, period diagrams and mode tracing,
//! * [`torus`]: Poincaré sections of long runs for invariant-curve detection,
//! * [`export`]: CSV / JSON-lines writers shared by the command-line tool.

pub mod atlas;
pub mod classify;
pub mod export;
pub mod flow;
pub mod map;
pub mod poly;
pub mod roots;
pub mod sim;
pub mod torus;

pub use flow::{FlowSign, Headpoint, Parameters, Rates, Regime, Sign};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("root refinement failed: {0}")]
    NoConvergence(String),
    #[error("corner collision at t = {time}: switch in {h_delay}, crossing in {z_delay}")]
    CornerCollision { time: f64, h_delay: f64, z_delay: f64 },
    #[error("non-oscillatory: no further events after t = {time}")]
    Nonoscillatory { time: f64 },
    #[error("no crossing: {0}")]
    NoCrossing(String),
    #[error("no fixed point for nu = {nu} at Q = {q}, Omega = {omega}")]
    NoRoot { nu: usize, q: f64, omega: f64 },
    #[error("degenerate fixed point: {0}")]
    Degenerate(String),
    #[error("lost branch after Omega = {omega} (nu = {nu})")]
    LostBranch { omega: f64, nu: usize },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameters(_) => "InvalidParameters",
            Error::InvalidState(_) => "InvalidState",
            Error::NoConvergence(_) => "NoConvergence",
            Error::CornerCollision { .. } => "CornerCollision",
            Error::Nonoscillatory { .. } => "Nonoscillatory",
            Error::NoCrossing(_) => "NoCrossing",
            Error::NoRoot { .. } => "NoRoot",
            Error::Degenerate(_) => "Degenerate",
            Error::LostBranch { .. } => "LostBranch",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
