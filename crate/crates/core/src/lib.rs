//! A multi-agent dynamic pickup-and-delivery planning engine.
//!
//! Each agent orders its pending pickup/delivery stops with a genetic
//! algorithm under weighted constraint fitness, executes the plan in a
//! discrete-time simulation, and replans from the live state whenever new
//! requests arrive mid-run.

pub mod cli;
pub mod error;
pub mod fitness;
pub mod ga;
pub mod render;
pub mod replan;
pub mod scenario;
pub mod sim;
pub mod world;
