pub mod backbone;
pub mod disentangle;
pub mod domain_id;
pub mod error;
pub mod graph;
pub mod harness;
pub mod keeper;
pub mod numerics;
pub mod optim;
pub mod peft;

pub use error::{Error, Result};
pub use numerics::Matrix;
