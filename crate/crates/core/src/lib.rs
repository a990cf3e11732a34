pub mod cli;
pub mod eigen;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod interp;
pub mod kernels;
pub mod ode;
pub mod quad;
pub mod rng;
pub mod roots;
pub mod weight;
pub mod zeros;

pub use error::{Error, Result};
