use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("grids do not share bounding box and resolution")]
    GridMismatch,

    #[error("unsupported dimension {0} (supported: 2..=4)")]
    UnsupportedDim(usize),

    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("degenerate chart parameters: {0}")]
    DegenerateParams(String),

    #[error("family has no element through the given point")]
    EmptyThroughSet,

    #[error("hyperplane does not contain the pencil axis")]
    PlaneNotInPencil,

    #[error("point lies within {distance:e} of the singular plane")]
    NearSingular { distance: f64 },

    #[error("grid is empty")]
    EmptyGrid,

    #[error("cell set is not face-connected ({components} components)")]
    NotConnected { components: usize },

    #[error("cubical complex is not closed under faces")]
    NotClosed,

    #[error("scene `{0}` touches the bounding box boundary")]
    BoxTooSmall(String),

    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("recorded counterexample did not reproduce: {0}")]
    ReplayMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimMismatch { expected, got })
    }
}
