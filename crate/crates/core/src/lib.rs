//! Discrete-event simulator for multi-GPU memory hierarchies.
//!
//! Three organizations are modeled on the same machine: a truly shared main
//! memory behind a central switch (`tsm`), per-GPU memories with direct
//! remote access (`rdma`), and unified memory with first-touch placement and
//! page migration (`um`).

pub mod batch;
pub mod cache;
pub mod config;
pub mod dram;
pub mod engine;
pub mod error;
pub mod event;
pub mod interconnect;
pub mod paging;
pub mod report;
pub mod topology;
pub mod workload;

pub use config::{Mode, SystemConfig, ValidConfig};
pub use engine::{simulate, simulate_detailed, SimStats};
pub use error::{ConfigError, Error, SimError, TraceError};
pub use event::SimTime;
pub use report::{Comparison, StatsReport};
pub use workload::{Workload, WorkloadSpec};
