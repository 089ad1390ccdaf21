use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity exceeded: {what} (limit {limit})")]
    Capacity { what: String, limit: u64 },

    #[error("corrupted table: bucket {bucket} has {matches} matching slots")]
    CorruptedTable { bucket: u32, matches: usize },

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("rejected command: unknown opcode {0:#x}")]
    RejectedCommand(u32),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("workload mismatch: {left:#018x} vs {right:#018x}")]
    WorkloadMismatch { left: u64, right: u64 },
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Invariant,
    Capacity,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Capacity { .. } => ErrorKind::Capacity,
            Error::CorruptedTable { .. } | Error::Invariant(_) => ErrorKind::Invariant,
            Error::Config(_)
            | Error::State(_)
            | Error::RejectedCommand(_)
            | Error::Domain(_)
            | Error::WorkloadMismatch { .. } => ErrorKind::Config,
        }
    }

    pub(crate) fn capacity(what: impl Into<String>, limit: u64) -> Self {
        Error::Capacity {
            what: what.into(),
            limit,
        }
    }
}
