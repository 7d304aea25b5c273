//! Execution-grounded data engine for code and unit-test generation.
//!
//! A text-generation backend plays two roles: a solver writing candidate
//! programs and a verifier writing assertion-style unit tests. Every pairing
//! is executed through an external runner shim, and the execution results
//! decide which solutions and tests become supervised and preference training
//! data. The same machinery computes the evaluation metrics.

pub mod error;
pub mod evaluation;
pub mod gateway;
pub mod model;
pub mod orchestrator;
pub mod pairs;
pub mod sandbox;
pub mod selection;
pub mod synthesis;

pub use error::{Error, Result};
