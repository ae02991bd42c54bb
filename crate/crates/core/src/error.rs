use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("label {label} out of range for {class_count} classes")]
    LabelRange { label: usize, class_count: usize },

    #[error("feature value {value} at index {index} outside [0, 1]")]
    FeatureRange { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("split needs {requested} examples but only {available} are available")]
    Capacity { requested: usize, available: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error(
        "training diverged at epoch {epoch} (last finite epoch: {last_good_epoch:?}, loss {loss})"
    )]
    Diverged {
        epoch: usize,
        last_good_epoch: Option<usize>,
        loss: f64,
    },

    #[error("benign example {index} is misclassified by the point classifier")]
    MisclassifiedBenign { index: usize },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::Dimension { expected, actual })
        }
    }
}
