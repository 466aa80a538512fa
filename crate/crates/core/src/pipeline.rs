//! Wiring of the per-story artifacts: summaries, tracking, documents and
//! vector indexes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::chunker::{ChunkError, ChunkerConfig};
use crate::evaluator::ModuleToggles;
use crate::gateway::{GatewayConfig, GatewayError, LlmGateway};
use crate::index::{EntryKind, FlatIndex, IndexBuilder, IndexEntry, IndexError};
use crate::retrieval::{DocumentStore, RetrievalConfig, RetrievalError};
use crate::story::{Corpus, Story, StoryError};
use crate::summarizer::{summarize_story, SummaryError, SummaryFile};
use crate::tracker::{track_story, StoryTracking, TrackerError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Story(#[from] StoryError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
}

/// Project configuration. Every report embeds the effective value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    pub gateway: GatewayConfig,
    pub retrieval: RetrievalConfig,
    pub chunker: ChunkerConfig,
    pub modules: ModuleToggles,
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.gateway.validate()?;
        self.retrieval.validate()?;
        if self.chunker.max_chars == 0 {
            return Err(ChunkError::ZeroMax.into());
        }
        if self.chunker.overlap_chars >= self.chunker.max_chars {
            return Err(ChunkError::OverlapTooLarge {
                max: self.chunker.max_chars,
                overlap: self.chunker.overlap_chars,
            }
            .into());
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        canonical::digest(self)
    }
}

/// An artifact tagged with the digest of the input it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub source_digest: String,
    #[serde(flatten)]
    pub data: T,
}

pub fn story_digest(story: &Story) -> String {
    canonical::sha256_hex(&crate::story::serialize_story(story))
}

/// Embeds every document of `kind` and freezes the index.
pub fn build_index(docs: &DocumentStore, kind: EntryKind, gateway: &LlmGateway) -> Result<FlatIndex, PipelineError> {
    let selected = docs.of_kind(kind);
    let texts: Vec<String> = selected.iter().map(|(_, s)| s.text.clone()).collect();
    let vectors = gateway.embed_all(&texts)?;
    let mut builder = IndexBuilder::new(gateway.embed_dim());
    for ((id, src), embedding) in selected.into_iter().zip(vectors) {
        builder.add(IndexEntry {
            entry_id: id.clone(),
            kind,
            story_id: src.story_id.clone(),
            episode_index: src.episode_index,
            embedding,
        })?;
    }
    Ok(builder.freeze())
}

/// All artifacts needed for evaluation and question answering.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub summaries: BTreeMap<String, SummaryFile>,
    pub tracking: BTreeMap<String, StoryTracking>,
    pub docs: DocumentStore,
    pub summary_index: Option<FlatIndex>,
    pub chunk_index: Option<FlatIndex>,
}

impl Prepared {
    /// Summarizes, tracks and indexes the corpus.
    pub fn build(corpus: Corpus, config: &ScoreConfig, gateway: &LlmGateway) -> Result<Self, PipelineError> {
        let summaries: Vec<SummaryFile> = corpus
            .stories
            .par_iter()
            .map(|s| summarize_story(s, gateway))
            .collect::<Result<_, _>>()?;
        let tracking: Vec<StoryTracking> = corpus
            .stories
            .par_iter()
            .map(|s| track_story(s, gateway))
            .collect::<Result<_, _>>()?;
        let mut prepared = Prepared::from_parts(corpus, summaries, tracking, config.chunker);
        prepared.summary_index = Some(build_index(&prepared.docs, EntryKind::Summary, gateway)?);
        prepared.chunk_index = Some(build_index(&prepared.docs, EntryKind::Chunk, gateway)?);
        Ok(prepared)
    }

    /// Assembles loaded artifacts; indexes are attached separately.
    pub fn from_parts(
        corpus: Corpus,
        summaries: Vec<SummaryFile>,
        tracking: Vec<StoryTracking>,
        chunker: ChunkerConfig,
    ) -> Self {
        let docs = DocumentStore::build(&corpus.stories, &summaries, chunker);
        Prepared {
            corpus,
            summaries: summaries.into_iter().map(|s| (s.story_id.clone(), s)).collect(),
            tracking: tracking.into_iter().map(|t| (t.story_id.clone(), t)).collect(),
            docs,
            summary_index: None,
            chunk_index: None,
        }
    }

    pub fn index(&self, kind: EntryKind) -> Option<&FlatIndex> {
        match kind {
            EntryKind::Summary => self.summary_index.as_ref(),
            EntryKind::Chunk => self.chunk_index.as_ref(),
        }
    }

    pub fn corpus_digest(&self) -> String {
        let digests: Vec<String> = self.corpus.stories.iter().map(story_digest).collect();
        canonical::digest(&digests)
    }
}
