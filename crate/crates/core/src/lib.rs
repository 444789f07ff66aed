//! Numerical laboratory for the spatially heterogeneous diffusive
//! Lotka-Volterra competition system
//!
//! ```text
//! ∂t u_i = d_i(x) Δu_i + u_i (m_i(x) - Σ_j a_ij(x) u_j),   ∂ν u_i = 0
//! ```
//!
//! on intervals and rectangles. The crate simulates the k-species system,
//! computes non-constant equilibria by three independent routes, evaluates
//! weighted Lyapunov functionals along trajectories and checks the
//! algebraic sufficient conditions for global stability and extinction.

pub mod certify;
pub mod cli;
pub mod discretize;
pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod odecmp;
pub mod scenario;
pub mod steady;
pub mod stepper;

pub use error::{Error, Result};
pub use model::{CoefficientSpec, CompetitionSystem, Field, Grid, SpeciesState};
