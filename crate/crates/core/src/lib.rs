//! Mean-field control on sparse power-law networks: degree laws, graph
//! sampling, network problems, limiting approximations, finite simulation
//! and policy-gradient learning.

pub mod combinatorics;
pub mod degree;
pub mod error;
pub mod extensive;
pub mod graphs;
pub mod learn;
pub mod meanfield;
pub mod problems;
pub mod seeding;
pub mod simulate;

pub use error::{Error, Result};
