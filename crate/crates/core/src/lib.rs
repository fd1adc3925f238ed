//! Numerical laboratory for fully nonlinear uniformly elliptic equations
//! `F(x, u, Du, D²u) = f` with Pucci-type structure, superlinear gradient
//! growth and `L^p` coefficients.
//!
//! The crate solves Dirichlet and weighted principal-eigenvalue problems with
//! monotone wide-stencil schemes and ships the diagnostics used to check
//! maximum principles, Hölder and `C^{1,α}` behavior, rescaling identities
//! and eigenvalue bounds on desk-scale grids.

pub mod analysis;
pub mod coefficient;
pub mod discretize;
pub mod domain;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod gridfn;
pub mod linalg;
pub mod modulus;
pub mod operators;
pub mod rules;
pub mod solve;

pub use analysis::{
    abp_batch, abp_check, approximation_gap, caffarelli_fit, holder_seminorm, minimax_affine_fit, nagumo_check,
    nagumo_ladder_stable, rescale_blowup, rescale_iteration, smp_hopf_check, AbpBatch, AbpBatchConfig, AbpConfig,
    AbpReport, ApproxGapReport, ApproxSetup, BlowupConfig, FitConfig, IterationStep, NagumoReport, RegularityFit,
    RescaledProblem, SmpConfig, SmpHopfReport,
};
pub use coefficient::{sample_coefficient, CoefficientField};
pub use discretize::{monotonicity_audit, Scheme, StencilConfig};
pub use domain::{BoundaryPortion, Domain};
pub use error::{Error, Result};
pub use eigen::{
    eigen_solve, eigen_upper_bound_sigma, mp_small_domain, power_step, simplicity_check, EigenBoundCertificate,
    EigenConfig, EigenPair, InitialGuess, SimplicityReport, SmallDomainConfig, SmallDomainReport,
};
pub use grid::{Grid, NodeKind};
pub use gridfn::{GridFunction, Region};
pub use modulus::{make_modulus, Modulus, ModulusKind};
pub use operators::{
    extremal_apply, pucci, AffineRescaling, Ellipticity, MatrixNorm, OperatorKind, OperatorSpec,
    Sign, StructureParams, SymMatrix,
};
pub use rules::ScalarRule;
pub use solve::{residual, solve_dirichlet, solve_pure, DirichletSolver, FieldSource, ProblemSpec, Solution, SolverConfig};

/// Schema tag carried by every serialized report.
pub const REPORT_SCHEMA: &str = "viscolab.report.v1";
