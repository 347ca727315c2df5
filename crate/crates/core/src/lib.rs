//! Kernel SVMs trained and evaluated under shot noise in quantum kernel estimates.

pub mod bounds;
pub mod conic;
pub mod data;
pub mod error;
pub mod harness;
pub mod qkernel;
pub mod robust;
pub mod sampler;
pub mod scalar;
pub mod svm;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = conic::Matrix<f64>;
pub type SymMatrix64 = conic::SymMatrix<f64>;
pub type ConeProgram64 = conic::ConeProgram<f64>;
pub type SymMatrix32 = conic::SymMatrix<f32>;
pub type ConeProgram32 = conic::ConeProgram<f32>;
