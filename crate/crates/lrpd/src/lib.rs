//! Low-rank plus diagonal decomposition of symmetric PSD matrices.
//!
//! The crate fits models of the form `M = D + U U^T` (diagonal or
//! block-diagonal `D`, rank-k factor `U`) to dense symmetric matrices, with:
//!
//! - a one-shot spectral split and the alternating refinement that improves it
//!   ([`naive`], [`alt`]);
//! - a sketch-based variant that touches the matrix only through counted
//!   matrix-vector products, with Nystrom low-rank updates and stochastic
//!   diagonal estimation ([`randomized`]);
//! - majorization-minimization and likelihood gradient-descent baselines for
//!   comparison ([`baselines`]);
//! - the operators and bounds that explain when and how fast the alternating
//!   iteration contracts ([`theory`]);
//! - synthetic instance generators, covariance estimation from returns, and
//!   correlation-based clustering for block partitions ([`data`]).
//!
//! All routines are deterministic given their seeds; randomized ones thread a
//! single `u64` seed through a counter-based generator.

pub mod alt;
pub mod baselines;
pub mod data;
pub mod error;
pub mod linalg;
pub mod model;
pub mod naive;
pub mod randomized;
pub mod theory;

pub use alt::{alt_fit, alt_fit_block, alt_step, contraction_precheck, AltConfig, PrecheckReport};
pub use baselines::{
    factor_objective_grad, gd_nll_fit, gd_nll_fit_from, mm_fit, mm_fit_diagnostics,
    nll_objective_grad, GdConfig, GdInit, MmConfig, MmDiagnostics,
};
pub use data::{
    covariance_from_returns, gen_decaying_spectrum, gen_exact_lrpd, gen_geometric_spectrum,
    kmeans_partition, load_returns_csv, spectrum_report, ReturnsMatrix, SynthInstance, SynthModel,
    SynthSpec,
};
pub use error::{LrpdError, Result};
pub use linalg::{
    eig_sym, load_matrix_csv, norms, oracle_from_dense, psd_project, save_matrix_csv,
    truncate_top_k, DenseOracle, EigDecomp, MatrixNorms, MatvecOracle, SymMatrix,
};
pub use model::{
    diag_sup_error, rel_fro_error, reconstruct, BlockPartition, ConvergenceTrace, DiagonalPart,
    FitOutput, LrpdModel, Provenance, TraceRecord,
};
pub use naive::{diag_first_residual, naive_decompose, DiagFirstReport, NaiveResult};
pub use randomized::{
    bound_report, derive_seed, diagpp, hutchinson_diag, nystrom_fixed_rank,
    nystrom_fixed_rank_opts, stochastic_alt_fit, stochastic_alt_fit_dense, BoundReport, DiagMode,
    NystromFactor, NystromOptions, SketchConfig, StochasticOptions,
};
pub use theory::{
    contraction_recursion, jacobian_diag_norm, jacobian_matrix, lambda_op, random_projector,
    weyl_gap, JacobianReport, Projector, WeylReport,
};

/// Version of this library, for run manifests and reproducibility records.
pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}
