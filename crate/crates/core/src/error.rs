use std::path::PathBuf;

use thiserror::Error;

use crate::event::SimTime;

/// Invalid configuration. Always names the offending field.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{field}: count must be at least 1")]
    ZeroCount { field: &'static str },
    #[error("{field}: bandwidth must be positive")]
    ZeroBandwidth { field: &'static str },
    #[error("page_size_bytes: page size must be a power of two (got {0})")]
    PageSizeNotPowerOfTwo(u64),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

/// Fatal simulation-integrity errors. A run that hits one of these is aborted.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("time travel: event scheduled at {scheduled} ps while clock is at {now} ps")]
    TimeTravel { now: SimTime, scheduled: SimTime },
    #[error("event targets unregistered component `{0}`")]
    UnregisteredComponent(String),
    #[error("no route from {src} to {dst}")]
    Unroutable { src: String, dst: String },
    #[error("out of physical memory placing vpn {vpn:#x} for {requester}")]
    OutOfMemory { vpn: u64, requester: String },
    #[error("virtual address {vaddr:#x} outside the configured {limit:#x}-byte space")]
    AddressOutOfRange { vaddr: u64, limit: u64 },
    #[error("operation `{op}` is only valid in UM mode")]
    ModeViolation { op: &'static str },
    #[error("workload references device {0} that does not exist in this topology")]
    UnknownDevice(String),
}

impl SimError {
    /// Short diagnostic category, used by the CLI for its exit message.
    pub fn category(&self) -> &'static str {
        match self {
            SimError::TimeTravel { .. } => "time-travel",
            SimError::UnregisteredComponent(_) => "unregistered-component",
            SimError::Unroutable { .. } => "unroutable",
            SimError::OutOfMemory { .. } => "out-of-memory",
            SimError::AddressOutOfRange { .. } => "address-range",
            SimError::ModeViolation { .. } => "mode-violation",
            SimError::UnknownDevice(_) => "unknown-device",
        }
    }
}

/// Trace loading and validation errors.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("record {index}: dependency {dep} does not precede it")]
    DanglingDependency { index: usize, dep: usize },
    #[error("record {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("workload: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Errors from writing or reading result files.
#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Any failure surfaced by the batch runner or the command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Trace(_) => "workload",
            Error::Sim(e) => e.category(),
            Error::Report(_) => "output",
        }
    }

    /// Process exit code for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Trace(_) => 3,
            Error::Sim(_) => 4,
            Error::Report(_) => 5,
        }
    }
}
