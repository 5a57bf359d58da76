//! Experiment harness and command-line front end for the `boulevard` crate.

pub mod cv;
pub mod experiments;
pub mod points;
pub mod recipe;
pub mod record;
