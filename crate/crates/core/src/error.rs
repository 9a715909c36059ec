use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor dimension did not match what the operation requires.
    #[error("{op}: {dim} mismatch (expected {expected}, got {got})")]
    Shape {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        got: usize,
    },

    /// Any other violated precondition.
    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },

    /// An input value lies outside the domain the operation is defined on.
    #[error("{op}: value {value} at index {index} outside {domain}")]
    Domain {
        op: &'static str,
        index: usize,
        value: f64,
        domain: &'static str,
    },

    #[error("pgm parse error at byte {offset}: {msg}")]
    Pgm { offset: usize, msg: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Contract {
            op,
            msg: msg.into(),
        }
    }
}

pub(crate) fn ensure_dim(
    op: &'static str,
    dim: &'static str,
    expected: usize,
    got: usize,
) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            dim,
            expected,
            got,
        })
    }
}
