//! Deterministic simulation of automated transit (PRT) networks.

pub mod demand;
pub mod kinematics;
pub mod merge;
pub mod network;
pub mod routing;
pub mod engine;
pub mod metrics;
pub mod experiments;
