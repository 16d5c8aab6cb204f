//! Simulation and resource orchestration for a satellite and UAV IoT uplink
//! with edge computing on the UAVs.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod latency;
pub mod orchestrator;
pub mod params;
pub mod sca;
pub mod scenario;

pub use error::{NtnError, Result};
