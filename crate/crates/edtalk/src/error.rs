use thiserror::Error;

#[derive(Debug, Error)]
pub enum EdTalkError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("label mismatch: {0}")]
    Label(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EdTalkError>;

impl EdTalkError {
    /// CLI exit status: 1 usage/config, 2 data/checkpoint, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            EdTalkError::Config(_) | EdTalkError::Range(_) => 1,
            EdTalkError::Numerical(_) => 3,
            _ => 2,
        }
    }
}
