pub mod dcnn;
pub mod ed;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod gradient;
pub mod ising;
pub mod network;
pub mod propagator;

pub use error::{Error, Result};
