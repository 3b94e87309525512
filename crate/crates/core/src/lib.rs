//! Core library: action language, observations, simulated and container
//! backends, episode runtime, session orchestration, task harness and agent
//! scaffolds.

pub mod action;
pub mod agents;
pub mod backend;
pub mod digest;
pub mod geometry;
pub mod harness;
pub mod observation;
pub mod orchestrator;
pub mod raster;
pub mod real;
pub mod runtime;
pub mod sim;

pub(crate) mod serde_b64;
