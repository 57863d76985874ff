use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] query2vec::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }

    pub fn kind(&self) -> &'static str {
        use query2vec::Error as E;
        match self {
            Self::Config(_) => "config",
            Self::Core(e) => match e {
                E::Io { .. } => "io",
                E::MalformedRecord { .. } | E::DuplicateId { .. } | E::Json(_) => "input",
                E::InvalidTemplate { .. } | E::InvalidArgument(_) => "invalid_argument",
                E::PlanParse { .. } => "plan_parse",
                E::DimensionMismatch { .. } | E::MissingVector(_) | E::Empty(_) | E::TooManyClusters { .. } => {
                    "data"
                }
                E::Diverged { .. } => "diverged",
                E::Format(_) => "model_format",
                E::VersionMismatch { .. } => "version_mismatch",
                E::Checksum => "checksum",
                E::KindMismatch { .. } => "kind_mismatch",
            },
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}
