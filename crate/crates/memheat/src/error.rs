//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by kernel construction, discretization, evolution and
/// diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel is not normalizable: {0}")]
    NonNormalizable(String),

    #[error("tabulated kernel rejected: {0}")]
    InvalidTabulated(String),

    #[error("invalid kernel parameter: {0}")]
    InvalidKernelParameter(String),

    #[error("quadrature rule needs at least {min} nodes, got {got}")]
    InsufficientNodes { min: usize, got: usize },

    #[error("collocation grid too coarse: {points} points for {modes} modes")]
    GridTooCoarse { points: usize, modes: usize },

    #[error("nonlinearity must vanish at zero, constant coefficient is {0}")]
    PhiNotZeroAtOrigin(f64),

    #[error("nonlinearity degree {0} exceeds the quintic growth limit")]
    PhiDegreeTooHigh(usize),

    #[error("history grids do not match ({0})")]
    GridMismatch(String),

    #[error("history field needs at least 2 nodes, got {0}")]
    TooFewHistoryNodes(usize),

    #[error("no stored trajectory covering the requested interval")]
    MissingTrajectory,

    #[error("source samples do not cover [0, {0}]")]
    SourceNotCovering(f64),

    #[error("blow-up detected at t = {time}: sup|u| = {sup:.3e}")]
    BlowUp { time: f64, sup: f64 },

    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),

    #[error(
        "energy sandwich violated: lambda = {lambda:.6e} outside [{lower:.6e}, {upper:.6e}] \
         (alpha = {alpha}, |f| = {f_norm:.3e})"
    )]
    SandwichViolation {
        lambda: f64,
        lower: f64,
        upper: f64,
        alpha: f64,
        f_norm: f64,
    },

    #[error("single-mode reduction requires an exponential kernel")]
    NotExponential,

    #[error("decay fit window [{0}, {1}] contains nonpositive values")]
    NonpositiveTrace(f64, f64),

    #[error("trace shorter than the sliding window")]
    TraceTooShort,

    #[error("negative input: {0}")]
    NegativeInput(String),

    #[error("trajectory gap: {0}")]
    TrajectoryGap(String),

    #[error("kernel carries no verified decay constant: {0}")]
    MissingKernelConstant(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
