use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible imbalance: class {class} would keep {count} samples (n = {per_class}, ratio = {ratio})")]
    InfeasibleImbalance {
        class: usize,
        count: usize,
        per_class: usize,
        ratio: f64,
    },

    /// A weight vector collapsed to zero, so it has no direction to project.
    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
