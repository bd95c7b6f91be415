//! Dense linear-algebra kernels shared by every other module.

pub mod linalg;
mod matrix;
pub mod rng;
pub mod svd;

pub use linalg::{argmax, ridge_solve_batch, softmax_rows, spd_solve, Cholesky};
pub use matrix::{dot, squared_distance, Matrix};
pub use svd::{truncated_svd, SvdResult};
