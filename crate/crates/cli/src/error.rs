use std::fmt;

use score_core::evaluator::EvaluationError;
use score_core::gateway::GatewayError;
use score_core::index::IndexError;
use score_core::pipeline::PipelineError;
use score_core::retrieval::RetrievalError;
use score_core::story::StoryError;
use score_core::summarizer::SummaryError;
use score_core::tracker::TrackerError;

/// Failure classes of the exit-code contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Validation,
    Gateway,
    CacheMiss,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Validation => 2,
            Kind::Gateway => 3,
            Kind::CacheMiss => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Validation,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::validation(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

fn gateway_kind(e: &GatewayError) -> Kind {
    match e {
        GatewayError::UncachedRequest { .. } => Kind::CacheMiss,
        GatewayError::Contract(_) | GatewayError::Template(_) => Kind::Validation,
        _ => Kind::Gateway,
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError {
            kind: gateway_kind(&e),
            message: e.to_string(),
        }
    }
}

impl From<StoryError> for CliError {
    fn from(e: StoryError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<SummaryError> for CliError {
    fn from(e: SummaryError) -> Self {
        match e {
            SummaryError::Gateway(g) => g.into(),
            SummaryError::Reply { .. } => CliError {
                kind: Kind::Gateway,
                message: e.to_string(),
            },
            SummaryError::Document(_) => CliError::validation(e.to_string()),
        }
    }
}

impl From<TrackerError> for CliError {
    fn from(e: TrackerError) -> Self {
        match e {
            TrackerError::Gateway(g) => g.into(),
            TrackerError::Extraction { .. } => CliError {
                kind: Kind::Gateway,
                message: e.to_string(),
            },
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Gateway(g) => g.into(),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::Gateway(g) => g.into(),
            EvaluationError::Retrieval(r) => r.into(),
            EvaluationError::Reply { .. } => CliError {
                kind: Kind::Gateway,
                message: e.to_string(),
            },
            EvaluationError::Missing(_) => CliError::validation(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Story(e) => e.into(),
            PipelineError::Summary(e) => e.into(),
            PipelineError::Tracker(e) => e.into(),
            PipelineError::Gateway(e) => e.into(),
            PipelineError::Index(e) => e.into(),
            PipelineError::Retrieval(e) => e.into(),
            PipelineError::Chunk(e) => CliError::validation(e.to_string()),
        }
    }
}
