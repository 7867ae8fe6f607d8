//! Library surface of the experiment harness, shared by the binary and the
//! acceptance suite.

pub mod config;
pub mod experiment;
pub mod summary;
