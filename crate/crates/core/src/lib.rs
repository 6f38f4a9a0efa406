//! Simulation of the CHSH and GHZ measurement protocols as typical worlds of
//! the Bernoulli measure induced by their measurement operators, contrasted
//! with local-hidden-variable models.

pub mod battery;
pub mod chsh;
pub mod cli;
pub mod error;
pub mod ghz;
pub mod linalg;
pub mod prob;
pub mod worlds;

pub use error::{Error, Result};
