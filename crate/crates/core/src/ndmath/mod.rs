//! Dense numerics: matrices, a reverse-mode tape and a symmetric eigensolver.

mod eigen;
mod matrix;
mod tape;

pub use eigen::{symmetric_eigenvalues, DEFAULT_TOL, MAX_SWEEPS};
pub use matrix::Matrix;
pub use tape::{Gradients, Primitive, Tape, Var};

pub(crate) use tape::sigmoid;
