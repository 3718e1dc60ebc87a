//! Sparse storage and direct solvers.

mod csr;
mod lu;

pub use csr::{dot, norm2, SparseOperator, SparsityPattern, Symmetry};
pub use lu::{scalar_blocks, Block, SparseLu, SymbolicLu};
