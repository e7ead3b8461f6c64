//! Solvers and certification checks for evolution equations
//! u' + A(t) u = f on [0, tau] with the generalized time-boundary
//! condition u(0) = Phi u(tau), on finite-dimensional Gelfand triples.

pub mod boundary;
pub mod cli;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod propagator;
pub mod semilinear;
pub mod spectral;
pub mod verify;

pub use boundary::{
    assemble_boundary_system, certify, rescale_shift, solve_linear_bvp, solve_nonlinear_phi,
    BoundaryKind, BoundaryMap, Certificate, Verdict,
};
pub use error::{Error, Result};
pub use hilbert::{
    accretivity_shift, coercivity_constants, embedding_constant, FormFamily, GelfandTriple,
    OperatorFamily,
};
pub use linalg::operator_norm_in;
pub use propagator::{
    duhamel, evolve, evolve_homogeneous, propagator_matrix, ForcingTerm, Method, Propagator,
    TimeGrid, Trajectory,
};
pub use semilinear::{apriori_bound, solve_semilinear, SemilinearSpec};
pub use spectral::{
    accretivity_example_check, dirichlet_model, divergence_form_model, v_norm_decay_check,
    DirichletModel, DivergenceFormModel,
};
pub use verify::CheckReport;
