pub mod bounds;
pub mod cli;
pub mod drift;
pub mod error;
pub mod numeric;
pub mod hitting;
pub mod kernels;
pub mod rates;
pub mod verify;

pub use error::{Error, Result};
