use std::path::PathBuf;

/// Failures while decoding a tensor or checkpoint file.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),
    #[error("file truncated: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("extents {0:?} overflow the addressable size")]
    ExtentOverflow(Vec<u64>),
    #[error("zero extent in shape {0:?}")]
    ZeroExtent(Vec<u64>),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("malformed record: {0}")]
    Malformed(String),
}

impl FormatError {
    /// Stable numeric code for each failure class.
    pub fn code(&self) -> u8 {
        match self {
            FormatError::BadMagic { .. } => 1,
            FormatError::UnsupportedVersion(_) => 2,
            FormatError::UnknownDtype(_) => 3,
            FormatError::Truncated { .. } => 4,
            FormatError::ExtentOverflow(_) => 5,
            FormatError::ZeroExtent(_) => 6,
            FormatError::TrailingBytes(_) => 7,
            FormatError::Malformed(_) => 8,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("format error ({}): {0}", .0.code())]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("non-finite loss in phase {phase} epoch {epoch}: {detail}")]
    NonFinite { phase: u8, epoch: usize, detail: String },
    #[error("infeasible split, deficient classes: {0:?}")]
    InfeasibleSplit(Vec<(usize, usize, usize)>),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
