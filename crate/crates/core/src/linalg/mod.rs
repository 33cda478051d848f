//! Dense and block-sparse linear algebra.

mod dense;
mod eigh;
mod ldl;
mod ordering;
mod pattern;
mod selinv;
mod solve;

pub use dense::{CMat, DenseMat, RMat, Scalar};
pub use eigh::{eigh, SymEig};
pub use ldl::{
    ldl_factor, ldl_factor_symbolic, ldl_factor_with, permuted_shifted_dense, LdlFactor,
    SymbolicFactor,
};
pub use ordering::{order, Ordering, OrderingMethod};
pub use pattern::{BlockSparseMat, BlockSparsePattern};
pub use selinv::{selected_inverse, SelectedInverse};
pub use solve::{inverse, inverse_counted, lu_factor, solve_complex, LuFactor};
