use thiserror::Error;

use crate::intrel::IntRelError;
use crate::mapping::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    IntRel(#[from] IntRelError),
    #[error("{0}")]
    Config(String),
    #[error("{file}: {message}")]
    File { file: String, message: String },
    #[error("illegal mapping: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Legality(Vec<Violation>),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn is_budget(&self) -> bool {
        matches!(self, Error::IntRel(IntRelError::Budget { .. }))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
