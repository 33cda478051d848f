//! Learnable matrix functions by pole expansion, their updates and
//! adjoints.

mod eval;
mod grad;
mod locality;
mod poles;
mod update;

pub use eval::{
    eval_resolvent_dense, eval_resolvent_selected, eval_spectral, evaluate, resolvent,
    resolvent_dense, spectral_dense, spectral_from_eig, Backend, MatFnResult, IMAG_RESIDUE_TOL,
};
pub use grad::{grad_from_eig, grad_matfn, grad_resolvent, GradRoute, MatFnGrad};
pub use locality::{decay_profile, fit_log_slope, power_diag_check};
pub use poles::{raw_for_imag, scalar_f, PoleSet, Y_MIN};
pub use update::{dense_update, diag_update, sparse_update};
