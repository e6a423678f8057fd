use thiserror::Error;

pub type Result<T> = std::result::Result<T, MepError>;

#[derive(Debug, Error)]
pub enum MepError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("episode already finished after {0} steps")]
    EpisodeFinished(usize),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("stale priority table: built for {table} trajectories, buffer holds {buffer}")]
    StalePriorities { table: usize, buffer: usize },

    #[error("invalid probability vector: {0}")]
    InvalidSimplex(String),

    #[error("density fit failed: {0}")]
    DensityFit(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("plot: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(MepError::Shape { expected, actual })
    }
}
