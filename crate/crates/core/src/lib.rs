//! Narrative continuity engine for episodic stories.
//!
//! Key items are tracked across episodes and unexplained reappearances are
//! flagged and corrected. Episodes are summarized into retrieval documents,
//! indexed in an exact cosine index, and retrieved with a sentiment filter
//! to ground facet evaluations and question answering. All model access
//! goes through [`gateway::LlmGateway`], which has a deterministic offline
//! backend and a record/replay cache.

pub mod canonical;
pub mod chunker;
pub mod evaluator;
pub mod fuzz;
pub mod gateway;
pub mod index;
pub mod pipeline;
pub mod retrieval;
pub mod story;
pub mod summarizer;
pub mod text;
pub mod tracker;

pub use chunker::{segment, Chunk, ChunkerConfig};
pub use evaluator::{EpisodeEvaluation, EvaluationReport, MetricsReport, ModuleToggles, QAResult};
pub use fuzz::{generate_corpus, score_detection, DetectionScore, FuzzSpec, GroundTruth};
pub use gateway::{BackendKind, CacheMode, GatewayConfig, GatewayError, LlmGateway, SentimentScore};
pub use index::{Embedding, FlatIndex, IndexBuilder, IndexEntry, SearchHit};
pub use pipeline::{Prepared, ScoreConfig};
pub use retrieval::{ContextBundle, RetrievalConfig};
pub use story::{Corpus, Episode, ItemState, KeyItem, Story};
pub use tracker::{ContinuityError, ItemObservation, ItemTimeline, StoryTracking};
