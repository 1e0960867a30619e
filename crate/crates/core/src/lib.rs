//! Simulation of protective and weak measurements, the product-pair
//! antidistinguishability experiment, and finite ontological models.

pub mod cli;
pub mod error;
pub mod hilbert;
pub mod measurement;
pub mod ontology;
pub mod pbr;
pub mod protective;
pub mod seeding;
pub mod weak;

pub use error::{Error, ErrorKind, Result};
