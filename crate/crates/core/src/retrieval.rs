//! Similarity retrieval with the sentiment-consistency filter.
//!
//! Candidates are the top `candidate_pool` entries by cosine similarity.
//! Those whose sentiment differs from the focus by more than the tolerance
//! are dropped and the best `top_n` survivors are kept. When fewer than
//! `top_n` survive, the pool is doubled until enough do or the scope is
//! exhausted, so the result equals filtering the whole scope and taking the
//! top `top_n`. If nothing in scope survives the bundle falls back to
//! similarity alone and says so.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::chunker::{segment, ChunkerConfig};
use crate::gateway::{GatewayError, LlmGateway, SentimentScore};
use crate::index::{EntryKind, EntryMeta, FlatIndex, IndexError};
use crate::story::Story;
use crate::summarizer::{build_retrieval_document, SummaryFile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("invalid retrieval request: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Summary,
    Chunk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub top_n: usize,
    pub sentiment_tolerance: f64,
    /// Over-fetch size before filtering; `None` means four times `top_n`.
    pub candidate_pool: Option<usize>,
    pub exclude_self: bool,
    pub context_char_budget: usize,
    pub sentiment_filter: bool,
    /// Apply the sentiment filter to question answering as well.
    pub filter_queries: bool,
    /// Entries used when answering questions.
    pub granularity: Granularity,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            top_n: 5,
            sentiment_tolerance: 0.3,
            candidate_pool: None,
            exclude_self: true,
            context_char_budget: 12_000,
            sentiment_filter: true,
            filter_queries: true,
            granularity: Granularity::Summary,
        }
    }
}

impl RetrievalConfig {
    pub fn pool(&self) -> usize {
        self.candidate_pool.unwrap_or(4 * self.top_n)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.top_n == 0 {
            return Err(RetrievalError::Contract("top_n must be positive".into()));
        }
        if self.pool() < self.top_n {
            return Err(RetrievalError::Contract(format!(
                "candidate_pool {} is smaller than top_n {}",
                self.pool(),
                self.top_n
            )));
        }
        if !(0.0..=1.0).contains(&self.sentiment_tolerance) {
            return Err(RetrievalError::Contract(
                "sentiment_tolerance must lie in [0, 1]".into(),
            ));
        }
        if self.context_char_budget == 0 {
            return Err(RetrievalError::Contract("context_char_budget must be positive".into()));
        }
        Ok(())
    }
}

/// Text and sentiment behind an index entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSource {
    pub story_id: String,
    pub episode_index: usize,
    pub kind: EntryKind,
    pub text: String,
    pub sentiment: SentimentScore,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentStore {
    sources: BTreeMap<String, ContextSource>,
}

impl DocumentStore {
    pub fn insert(&mut self, entry_id: String, source: ContextSource) {
        self.sources.insert(entry_id, source);
    }

    pub fn get(&self, entry_id: &str) -> Option<&ContextSource> {
        self.sources.get(entry_id)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ContextSource)> {
        self.sources.iter()
    }

    /// Summary documents and raw chunks for every story with summaries.
    /// Chunks inherit the sentiment of their episode.
    pub fn build(stories: &[Story], summaries: &[SummaryFile], chunking: ChunkerConfig) -> Self {
        let mut store = DocumentStore::default();
        for file in summaries {
            let Some(story) = stories.iter().find(|s| s.story_id == file.story_id) else {
                continue;
            };
            for summary in &file.summaries {
                let doc = build_retrieval_document(summary);
                store.insert(
                    doc.doc_id,
                    ContextSource {
                        story_id: doc.story_id,
                        episode_index: doc.episode_index,
                        kind: EntryKind::Summary,
                        text: doc.text,
                        sentiment: summary.sentiment,
                    },
                );
                let Some(ep) = story.episode(summary.episode_index) else {
                    continue;
                };
                for chunk in segment(&story.story_id, ep, chunking).unwrap_or_default() {
                    store.insert(
                        chunk.entry_id(),
                        ContextSource {
                            story_id: chunk.story_id,
                            episode_index: chunk.episode_index,
                            kind: EntryKind::Chunk,
                            text: chunk.text,
                            sentiment: summary.sentiment,
                        },
                    );
                }
            }
        }
        store
    }

    pub fn of_kind(&self, kind: EntryKind) -> Vec<(&String, &ContextSource)> {
        self.sources.iter().filter(|(_, s)| s.kind == kind).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Focus {
    Episode { story_id: String, episode_index: usize },
    Query { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub entry_id: String,
    pub story_id: String,
    pub episode_index: usize,
    pub similarity: f64,
    pub sentiment: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub focus: Focus,
    pub focus_sentiment: Option<f64>,
    pub selected: Vec<ContextEntry>,
    pub truncated: bool,
    pub sentiment_filter_applied: bool,
    pub sentiment_filter_bypassed: bool,
}

impl ContextBundle {
    pub fn empty(focus: Focus) -> Self {
        ContextBundle {
            focus,
            focus_sentiment: None,
            selected: Vec::new(),
            truncated: false,
            sentiment_filter_applied: false,
            sentiment_filter_bypassed: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn digest(&self) -> String {
        canonical::digest(self)
    }

    pub fn text_chars(&self) -> usize {
        self.selected.iter().map(|e| e.text.chars().count()).sum()
    }

    /// Distinct (story, episode) references, in bundle order.
    pub fn episode_refs(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for e in &self.selected {
            let r = (e.story_id.clone(), e.episode_index);
            if !out.contains(&r) {
                out.push(r);
            }
        }
        out
    }
}

/// Which entries may be retrieved.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scope {
    pub story_id: Option<String>,
    pub exclude_episode: Option<(String, usize)>,
    pub kind: Option<EntryKind>,
}

impl Scope {
    fn admits(&self, meta: &EntryMeta) -> bool {
        self.story_id.as_ref().is_none_or(|s| *s == meta.story_id)
            && self
                .exclude_episode
                .as_ref()
                .is_none_or(|(s, t)| !(*s == meta.story_id && *t == meta.episode_index))
            && self.kind.is_none_or(|k| k == meta.kind)
    }
}

/// Selection without embedding: search, filter, take, trim to budget.
pub fn select_context(
    focus: Focus,
    query: &crate::index::Embedding,
    focus_sentiment: Option<SentimentScore>,
    scope: &Scope,
    index: &FlatIndex,
    docs: &DocumentStore,
    config: &RetrievalConfig,
) -> Result<ContextBundle, RetrievalError> {
    config.validate()?;
    let admits = |m: &EntryMeta| scope.admits(m) && docs.get(&m.entry_id).is_some();
    let filter_on = config.sentiment_filter && focus_sentiment.is_some();
    let passes = |c: &ContextEntry| {
        focus_sentiment.is_none_or(|sigma| (sigma.value() - c.sentiment).abs() <= config.sentiment_tolerance)
    };
    let mut pool = config.pool();
    let (candidates, survivors) = loop {
        let hits = index.search_top_n(query, pool, Some(&admits))?;
        let exhausted = hits.len() < pool;
        let candidates: Vec<ContextEntry> = hits
            .into_iter()
            .map(|h| {
                let src = docs.get(&h.entry_id).expect("filtered on presence");
                ContextEntry {
                    entry_id: h.entry_id,
                    story_id: src.story_id.clone(),
                    episode_index: src.episode_index,
                    similarity: h.score,
                    sentiment: src.sentiment.value(),
                    text: src.text.clone(),
                }
            })
            .collect();
        if !filter_on {
            break (candidates, None);
        }
        let survivors: Vec<ContextEntry> = candidates.iter().filter(|c| passes(c)).cloned().collect();
        if survivors.len() >= config.top_n || exhausted {
            break (candidates, Some(survivors));
        }
        // too few survivors in the pool: widen it
        pool = pool.saturating_mul(2);
    };
    let mut bypassed = false;
    let mut chosen = match survivors {
        Some(s) if s.is_empty() && !candidates.is_empty() => {
            bypassed = true;
            candidates
        }
        Some(s) => s,
        None => candidates,
    };
    chosen.truncate(config.top_n);
    if chosen.len() < config.top_n {
        tracing::debug!(
            kept = chosen.len(),
            wanted = config.top_n,
            "fewer survivors than requested"
        );
    }

    let mut used = 0;
    let mut keep = 0;
    for c in &chosen {
        let n = c.text.chars().count();
        if used + n > config.context_char_budget {
            break;
        }
        used += n;
        keep += 1;
    }
    let truncated = keep < chosen.len();
    chosen.truncate(keep);
    Ok(ContextBundle {
        focus,
        focus_sentiment: focus_sentiment.map(SentimentScore::value),
        selected: chosen,
        truncated,
        sentiment_filter_applied: filter_on,
        sentiment_filter_bypassed: bypassed,
    })
}

/// Context for evaluating one episode (or any focus text).
#[allow(clippy::too_many_arguments)]
pub fn retrieve_related(
    focus: Focus,
    focus_text: &str,
    focus_sentiment: Option<SentimentScore>,
    scope: &Scope,
    index: &FlatIndex,
    docs: &DocumentStore,
    config: &RetrievalConfig,
    gateway: &LlmGateway,
) -> Result<ContextBundle, RetrievalError> {
    if index.is_empty() {
        return Err(IndexError::IndexEmpty.into());
    }
    if focus_text.trim().is_empty() {
        return Err(RetrievalError::Contract("focus text is empty".into()));
    }
    let query = gateway
        .embed(&[focus_text.to_string()])?
        .pop()
        .ok_or_else(|| GatewayError::Protocol("no embedding returned".into()))?;
    select_context(focus, &query, focus_sentiment, scope, index, docs, config)
}

/// Context for a user question; its sentiment comes from the question text.
pub fn retrieve_for_query(
    question: &str,
    scope: &Scope,
    index: &FlatIndex,
    docs: &DocumentStore,
    config: &RetrievalConfig,
    gateway: &LlmGateway,
) -> Result<ContextBundle, RetrievalError> {
    if question.trim().is_empty() {
        return Err(RetrievalError::Contract("question is empty".into()));
    }
    let sentiment = if config.sentiment_filter && config.filter_queries {
        Some(gateway.score_sentiment(question)?)
    } else {
        None
    };
    retrieve_related(
        Focus::Query {
            text: question.to_string(),
        },
        question,
        sentiment,
        scope,
        index,
        docs,
        config,
        gateway,
    )
}
