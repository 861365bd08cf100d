use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed input file. `line` is 1-based.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("scenario suite generation failed after {rejections} consecutive rejections")]
    GenerationFailed { rejections: u32 },

    #[error("participant {participant} has no answer for scenario {scenario}")]
    MissingAnswer {
        participant: String,
        scenario: String,
    },

    #[error("participant {participant} answered unknown scenario {scenario}")]
    UnknownScenario {
        participant: String,
        scenario: String,
    },

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("effect size undefined: pooled standard deviation is zero")]
    UndefinedEffect,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code for wire and HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::Parse { .. } => "parse",
            Error::Usage(_) => "usage",
            Error::GenerationFailed { .. } => "generation_failed",
            Error::MissingAnswer { .. } => "missing_answer",
            Error::UnknownScenario { .. } => "unknown_scenario",
            Error::Ingestion(_) => "ingestion",
            Error::UndefinedEffect => "undefined_effect",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(source_name: &str, err: &serde_json::Error, line_offset: usize) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line: err.line() + line_offset,
            message: err.to_string(),
        }
    }
}
