use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertex index {index} out of range for {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },

    #[error("bone index {index} out of range for {count} bones")]
    BoneOutOfRange { index: usize, count: usize },

    #[error("frame index {index} out of range for {count} frames")]
    FrameOutOfRange { index: usize, count: usize },

    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    FaceOutOfRange { face: usize, index: usize, count: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate faces in frame {frame}: {faces:?}")]
    DegenerateFaces { frame: usize, faces: Vec<usize> },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid weights for vertex {vertex}: {reason}")]
    InvalidWeights { vertex: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated stream: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
