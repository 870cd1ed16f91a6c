use hdrec_core::TomoError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: TomoError,
    },

    #[error(transparent)]
    Tomo(#[from] TomoError),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Csv { path: String, message: String },
}

impl CliError {
    /// Process exit status: 3 for numerical failures, 2 for invalid inputs,
    /// 1 for anything else (I/O).
    pub fn exit_code(&self) -> i32 {
        let tomo = match self {
            CliError::Stage { source, .. } | CliError::Tomo(source) => source,
            CliError::Config(_) | CliError::Csv { .. } => return 2,
        };
        if tomo.is_numerical() {
            3
        } else if matches!(tomo, TomoError::Io { .. }) {
            1
        } else {
            2
        }
    }
}

/// Tags a stage failure with the stage name.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for hdrec_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
