//! Deterministic discrete-event simulation of TSN LANs joined by VTEPs
//! over a 5G segment.

pub mod bridge;
pub mod capture;
pub mod engine;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod traffic;

pub use report::{measure_task_delays, multicast_fanout, write_outputs, Summary};
pub use scenario::{Scenario, ScenarioError};
pub use sim::{run, SimulationReport};
pub use stats::{ccdf, DelayStats};
