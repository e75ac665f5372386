use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] commsim_core::Error),
    #[error("invalid sweep spec: {0}")]
    Spec(String),
    #[error("invalid family parameter: {0}")]
    Family(String),
    #[error("trial {trial} broke the protocol contract: {}", .violations.join("; "))]
    Contract {
        trial: usize,
        violations: Vec<String>,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
