//! Finite elements for variational problems with orthotropic growth on square domains.

pub mod analysis;
pub mod error;
pub mod fespace;
pub mod interp;
pub mod linalg;
pub mod mesh;
pub mod nfunc;
pub mod solver;

pub use error::{Error, Result};
