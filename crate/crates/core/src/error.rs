use std::io;

/// Errors produced by mesh construction, operator assembly, layers, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mesh level {level} out of range (max {max})")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("degenerate face {face}: zero area")]
    DegenerateFace { face: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("level mismatch: expected {expected}, got {actual}")]
    LevelMismatch { expected: u32, actual: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// I/O error annotated with the file it concerns.
pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

