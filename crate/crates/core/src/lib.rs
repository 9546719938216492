//! Two-level additive Schwarz preconditioners for spectral element
//! discontinuous Galerkin discretizations of the Poisson problem on
//! rectangular patch meshes.

pub mod assembly;
pub mod auxiliary;
pub mod dyadic;
pub mod error;
pub mod experiment;
pub mod krylov;
pub mod lgl;
pub mod mesh;
pub mod norms;
pub mod precond;
pub mod space;
pub mod sparse;
pub mod tensor;
pub mod transfer;

pub use error::{Error, Result};
