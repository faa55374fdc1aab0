//! Spectral-Galerkin simulation of the heat equation with hereditary memory,
//! posed in the history-space framework, together with the diagnostics that
//! check its energy functionals, decay estimates and semigroup decompositions
//! numerically.
//!
//! The equation for the temperature field u on Ω = (0, π) is
//!
//! ```text
//! ∂t u + A u + ∫₀^∞ μ(s) A η(s) ds + φ(u) = f,    ∂t η = T η + u,
//! ```
//!
//! where A is the Laplace–Dirichlet operator, η is the integrated past
//! history of u, μ a fading-memory kernel and T = −∂_s the translation
//! generator with η(0) = 0.  Modules:
//!
//! * [`kernels`] — memory kernels, normalizations and decay conditions;
//! * [`spectral`] — sine-basis fields, fractional norms, nonlinearities;
//! * [`history`] — the discretized memory space and the generator T;
//! * [`dynamics`] — IMEX time stepping for the full, linear and forced flows;
//! * [`diagnostics`] — functionals, inequality monitors and decay fits;
//! * [`ensemble`] — seeded random data generators;
//! * [`config`] / [`io`] — structured-text configuration and CSV/JSON output.

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod history;
pub mod io;
pub mod kernels;
pub mod spectral;

pub use error::{Error, Result};
