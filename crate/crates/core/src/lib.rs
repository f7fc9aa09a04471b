pub mod approx;
pub mod cbc;
pub mod config;
pub mod enclosure;
pub mod error;
pub mod error_engine;
pub mod integrands;
pub mod kernels;
pub mod lattice;
pub mod perm;
pub mod spectrum;
pub mod study;
pub mod symsum;
pub mod weights;

pub use error::{Error, Result};
