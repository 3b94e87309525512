//! HTTP service, blocking client and operator CLI for idegym.

pub mod api;
pub mod cli;
pub mod client;
