//! Sufficient-condition checkers. Every checker returns named conditions
//! with the actual slack of the inequality and the witness that produced it.

mod bounds;
mod diagonal;
mod report;
mod semitrivial;
mod two_species;

pub use bounds::{env_extrema, off_diagonal, solve_bounds_f1, BoundsCertificate, DET_THRESHOLD};
pub use diagonal::{
    block_lambda_from_q4, block_matrix, check_49a, check_f2, check_f3, diagonal_lyapunov_search, shifted_search,
    DiagonalCertificate, PD_TOLERANCE,
};
pub use report::{Condition, ConditionReport, Witness};
pub use semitrivial::{
    check_corollary48, check_semitrivial_g, default_d_samples, estimate_ls, extinction_margins, perturbation_bounds,
    Corollary48, LsEstimate, LsSample,
};
pub use two_species::{
    betas_from_box, betas_from_equilibrium, check_degenerate_thm31, check_theorem12, corollary37_box,
    evaluate_variant, BetaSource, Betas, Box37, Cor37Params, Variant, VariantEvaluation,
};
