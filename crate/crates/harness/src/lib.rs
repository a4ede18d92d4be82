//! Configuration, run persistence, the `qcseg` command line and the review
//! service.

pub mod cli;
pub mod config;
pub mod review;
pub mod runs;
pub mod store;
