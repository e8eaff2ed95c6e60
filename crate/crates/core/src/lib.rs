//! Robust ellipsoidal inner approximations of the multiperiod aggregate
//! flexibility region of a distribution feeder with DERs under load
//! uncertainty.

pub mod conic;
mod error;
pub mod model;
pub mod policies;
pub mod reduction;
pub mod verify;

pub use error::{Error, Result};
