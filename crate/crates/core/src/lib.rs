//! Trace-driven simulation and optimization for SLA-prioritized scheduling
//! on tiered edge-cloud systems.
//!
//! Physical edge and cloud resources are mapped into resource cells, cells
//! are clustered into priority channels, and each channel independently
//! orchestrates service replicas onto its cells (once per frame) and
//! dispatches requests to them (once per slot). Per-node agents learn how
//! large a cell to request.
//!
//! ```text
//!  agents (nmac) --actions--> customizer --cells/channels--> jsord
//!        ^                                                      |
//!        +------ rewards / observations <---- sim (slots) <-----+
//! ```

pub mod customizer;
pub mod error;
pub mod jsord;
pub mod lp;
pub mod model;
pub mod nmac;
pub mod oracle;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
