//! Simulation and learning stack for a contact-sliding aerial manipulator.

pub mod control;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod learning;
pub mod policy;
pub mod scenarios;
pub mod sensing;
pub mod terrain;

pub use error::{Error, Result};
