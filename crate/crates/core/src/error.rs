use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("same-mode convolution needs an odd kernel side, got {0}")]
    EvenKernel(usize),
    #[error("kernel side {kernel} exceeds input side {input}")]
    KernelTooLarge { kernel: usize, input: usize },
    #[error("does not fit SLM: {0}")]
    DoesNotFit(String),
    #[error("mixed tiling needs N_c < T/2 (N_c = {channels}, T = {cells})")]
    MixedCondition { channels: usize, cells: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model format: {0}")]
    Format(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Infeasible,
    Io,
    Validation,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DoesNotFit(_) | Error::MixedCondition { .. } => ErrorKind::Infeasible,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}
