//! Deterministic PBFT simulator with fault injection and metrics.

mod load;
mod metrics;
mod network;
mod sim;

pub use load::*;
pub use metrics::*;
pub use network::*;
pub use sim::*;
