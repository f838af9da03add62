//! Sampling-based MPC driving planner with path-integral maximum-entropy
//! inverse reinforcement learning.

pub mod cli;
pub mod config;
pub mod demos;
pub mod envmodel;
pub mod error;
pub mod irl;
pub mod pipeline;
pub mod planner;
pub mod reward;
pub mod svg;
pub mod vehicle;

pub use error::{Error, Result};
