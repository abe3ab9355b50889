pub mod accept;
pub mod error;
pub mod hamiltonian;
pub mod hyperbolic;
pub mod linalg;
pub mod pa;
pub mod rational;
pub mod symplectic;
pub mod tracks;

pub use error::{Error, Result};
