//! Problem description: grids, nodal fields and the k-species system.

mod coeff;
mod field;
mod grid;
mod system;

pub use coeff::{sample_field, CoefficientSpec, CosineWave, GaussianBump};
pub use field::Field;
pub use grid::{build_grid, Grid, GridId};
pub use system::{
    validate_system, CompetitionSystem, DiffusionForm, Issue, SpeciesState, ValidationReport,
};
