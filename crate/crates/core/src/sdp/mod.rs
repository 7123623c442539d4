//! Conic optimization: problem representation, interior-point solver, and
//! the constrained identification problem builder.

pub mod build;
mod cones;
pub mod program;
pub mod solver;

pub use program::{
    smat, svec, svec_dim, ConeSpec, ConicProgram, ConstraintBlock, ProgramError, Solution,
    SolveStatus, VarLayout,
};
pub use build::{
    build_from_gram, build_identification, project_to_consistent, BuildError, ConstraintLevel,
    GramData, IdentificationOptions, ObjectiveEncoding, ProjectionSpec,
};
pub use solver::{solve, SolverOptions};
