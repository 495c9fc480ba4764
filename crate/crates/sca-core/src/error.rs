//! Crate-wide error type.

use alloc::boxed::Box;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// A vector or matrix did not have the dimension the operation requires.
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    /// A non-finite value appeared while processing the given sample.
    NonFinite { what: &'static str, sample: usize },
    /// A scalar or structural argument violated its documented constraint.
    InvalidParameter { what: &'static str },
    /// Neither the regularizer nor the damping term makes the subproblem
    /// strongly convex.
    NotStronglyConvex,
    /// Cholesky factorization hit a non-positive pivot.
    NotPositiveDefinite,
    /// Power iteration detected negative curvature in a matrix that must be
    /// positive semi-definite.
    NegativeCurvature,
    /// Backtracking line search failed to find decrease.
    LineSearchFailed,
    /// An iterative solver hit its iteration cap above tolerance.
    SolverStalled { what: &'static str },
    /// Cross-entropy evaluated outside its (0, 1) prediction domain.
    LossDomain { value: f64 },
    /// The loss does not pair with the model's output head.
    IncompatibleLossHead,
    /// The requested combination of options is not supported.
    Unsupported { what: &'static str },
    /// A group referenced a weight index outside the parameter vector.
    GroupIndexOutOfRange { index: usize, len: usize },
    /// A neighbor index points outside the available sample set.
    MissingNeighbor { sample: usize, neighbor: usize },
    EmptyDataset,
    /// Wraps a failure with the outer-loop iteration it occurred in.
    AtIteration { iteration: usize, source: Box<Error> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                what,
                expected,
                actual,
            } => write!(f, "{what}: expected dimension {expected}, got {actual}"),
            Error::NonFinite { what, sample } => {
                write!(f, "non-finite value in {what} at sample index {sample}")
            }
            Error::InvalidParameter { what } => write!(f, "invalid parameter: {what}"),
            Error::NotStronglyConvex => write!(f, "surrogate not strongly convex"),
            Error::NotPositiveDefinite => {
                write!(f, "matrix is not positive definite (factorization failed)")
            }
            Error::NegativeCurvature => {
                write!(f, "negative curvature detected in a PSD matrix")
            }
            Error::LineSearchFailed => write!(f, "line search failed to find decrease"),
            Error::SolverStalled { what } => {
                write!(f, "{what} hit its iteration cap above tolerance")
            }
            Error::LossDomain { value } => {
                write!(f, "cross-entropy prediction {value} outside (0, 1)")
            }
            Error::IncompatibleLossHead => {
                write!(f, "loss function incompatible with the model's output head")
            }
            Error::Unsupported { what } => write!(f, "unsupported: {what}"),
            Error::GroupIndexOutOfRange { index, len } => {
                write!(f, "group index {index} out of range for {len} weights")
            }
            Error::MissingNeighbor { sample, neighbor } => {
                write!(f, "sample {sample}: neighbor {neighbor} not available")
            }
            Error::EmptyDataset => write!(f, "dataset is empty"),
            Error::AtIteration { iteration, source } => {
                write!(f, "iteration {iteration}: {source}")
            }
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::AtIteration { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
