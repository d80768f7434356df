use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Protocol,
    Io,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Protocol => 4,
            Category::Io => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("corrupt event record: {0}")]
    CorruptRecord(String),
    #[error("events out of order: t={next} follows t={prev}")]
    Ordering { prev: u64, next: u64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("accounting error: kept {kept} exceeds source {source_count}")]
    Accounting { source_count: u64, kept: u64 },
    #[error("event ({x}, {y}) outside {width}x{height} sensor")]
    OutOfBounds { x: u16, y: u16, width: u16, height: u16 },
    #[error("bad file format: {0}")]
    Format(String),
    #[error("framing error: {0}")]
    Framing(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("window {window} incomplete: missing segment for track {track}")]
    IncompleteWindow { window: u64, track: u16 },
    #[error("no data: {0}")]
    NoData(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Parameter(_) | Error::Config(_) => Category::Config,
            Error::CorruptRecord(_)
            | Error::Ordering { .. }
            | Error::Accounting { .. }
            | Error::OutOfBounds { .. }
            | Error::Format(_)
            | Error::NoData(_) => Category::Data,
            Error::Framing(_) | Error::Protocol(_) | Error::IncompleteWindow { .. } => Category::Protocol,
            Error::Io(_) => Category::Io,
        }
    }
}
