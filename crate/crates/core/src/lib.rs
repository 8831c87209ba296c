//! Fault detection for telecom cell telemetry using a bi-level graph.
//!
//! The outer level is a graph over cells (one federated client per cell), the
//! inner level a static execution graph over the software counters each cell
//! reports. A recurrent graph-convolutional model learns to forecast the
//! counters one step ahead; points with outlying reconstruction error are
//! flagged by z-score or generalized ESD tests. Training can run centrally or
//! as a simulated federation with FedAvg or similarity-graph (FedGraph)
//! aggregation.

pub mod dataset;
pub mod detect;
pub mod error;
pub mod fedsim;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod runner;

pub use error::{Error, Result};
