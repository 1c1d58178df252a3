//! Command-line front end for joint multi-curve estimation.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod quotes;
