//! Ground states of infinite spin-1/2 chains and square lattices from
//! tensor networks, and the entanglement measures evaluated on them.

pub mod checkpoint;
pub mod ed;
pub mod entanglement;
pub mod env2d;
pub mod error;
pub mod evolution;
pub mod linalg;
pub mod models;
pub mod mps;
pub mod peps;
pub mod sweep;
pub mod tensor;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use tensor::DenseTensor;
