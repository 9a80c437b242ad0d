//! Multi-kernel sparse support vector learning with capacity-weighted L1 penalties.
//!
//! The learner minimizes the average hinge loss plus `sum_k Lambda_k |alpha_kj|`
//! over hypotheses `f(x) = sum_{k,j} alpha_kj y_j K_k(x, x_j)`, where each kernel
//! family `k` is charged `Lambda_k = lambda * r_k + beta` and `r_k` estimates the
//! Rademacher complexity of that family. Training goes through either a linear
//! program solved by an internal simplex or by coordinate descent.

pub mod complexity;
pub mod data;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod model;
pub mod objective;
pub mod solver_cd;
pub mod solver_lp;

pub use complexity::{build_penalties, PenaltyMode, PenaltyVector, Radius};
pub use data::{load_csv, load_libsvm, make_folds, split_cv, Dataset, FoldAssignment, Standardizer};
pub use error::{Error, Result};
pub use harness::{read_report_csv, run_cv, CVReport, GridSpec, SolverKind};
pub use kernels::{build_stack, parse_kernel_specs, GramStack, KernelSpec};
pub use model::SparseModel;
pub use objective::{objective_value, CoefMatrix, MarginState};
