//! Per-episode structured summaries and the retrieval documents built from
//! them.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::gateway::{GatewayError, LlmGateway, SentimentScore, Task};
use crate::story::{CharacterAction, Episode, ItemInteraction, ItemState, KeyItem, Story};
use crate::text;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummaryError {
    #[error(transparent)]
    Gateway(GatewayError),
    #[error("summary reply unusable ({message}): {raw}")]
    Reply { message: String, raw: String },
    #[error("malformed retrieval document: {0}")]
    Document(String),
}

impl From<GatewayError> for SummaryError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Structured { message, raw, .. } => SummaryError::Reply { message, raw },
            other => SummaryError::Gateway(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub story_id: String,
    pub episode_index: usize,
    pub synopsis: String,
    pub plot_points: Vec<String>,
    pub actions: Vec<CharacterAction>,
    pub interactions: Vec<ItemInteraction>,
    pub relationships: Vec<String>,
    pub emotional_changes: Vec<String>,
    pub sentiment: SentimentScore,
}

/// Summary file: one per story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub story_id: String,
    pub summaries: Vec<EpisodeSummary>,
}

impl SummaryFile {
    pub fn get(&self, episode_index: usize) -> Option<&EpisodeSummary> {
        self.summaries.iter().find(|s| s.episode_index == episode_index)
    }
}

/// Request payload of the summarization task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryInput {
    pub episode_index: usize,
    pub episode_text: String,
    pub items: Vec<KeyItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryReply {
    pub synopsis: String,
    #[serde(default)]
    pub plot_points: Vec<String>,
    #[serde(default)]
    pub actions: Vec<ReplyAction>,
    #[serde(default)]
    pub interactions: Vec<ReplyInteraction>,
    #[serde(default)]
    pub relationships: Vec<String>,
    #[serde(default)]
    pub emotional_changes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyAction {
    pub character: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyInteraction {
    pub item_id: String,
    #[serde(default)]
    pub actor: Option<String>,
    pub description: String,
    #[serde(default)]
    pub implied_state: Option<ItemState>,
}

/// Rule-based summary used by the offline backend:
/// the synopsis is the first two sentences, actions come from `Name verb`
/// patterns, interactions from sentences naming a key item.
pub fn rule_summary(input: &SummaryInput) -> SummaryReply {
    let t = input.episode_text.as_str();
    let spans = text::sentences(t);
    let sentence = |&(s, e): &(usize, usize)| t[s..e].to_string();
    let synopsis = spans.iter().take(2).map(sentence).collect::<Vec<_>>().join(" ");
    let lex = text::lexicons();

    let mut actions = Vec::new();
    let mut interactions = Vec::new();
    let mut plot_points = Vec::new();
    let mut relationships = Vec::new();
    let mut emotional_changes = Vec::new();
    let mut seen_actions = BTreeSet::new();
    for span in &spans {
        let s = sentence(span);
        let toks = text::tokens(&s);
        let pairs = text::name_verb_pairs(&toks);
        let mut eventful = false;
        for &(name, _) in &pairs {
            let character = toks[name].text.to_string();
            if seen_actions.insert((character.clone(), s.clone())) {
                actions.push(ReplyAction {
                    character,
                    description: s.clone(),
                });
            }
            eventful = true;
        }
        let actor = pairs.first().map(|&(n, _)| toks[n].text.to_string()).or_else(|| {
            toks.iter()
                .find(|t| text::looks_like_name(t))
                .map(|t| t.text.to_string())
        });
        for item in &input.items {
            if text::alias_matches(&toks, item).is_empty() {
                continue;
            }
            interactions.push(ReplyInteraction {
                item_id: item.item_id.clone(),
                actor: actor.clone(),
                description: s.clone(),
                implied_state: text::last_state_cue(&toks).map(|c| c.state()),
            });
            eventful = true;
        }
        if eventful {
            plot_points.push(s.clone());
        }
        if toks.iter().any(|t| lex.relationship.contains(&t.lower)) {
            relationships.push(s.clone());
        }
        if toks
            .iter()
            .any(|t| lex.positive.contains(&t.lower) || lex.negative.contains(&t.lower))
        {
            emotional_changes.push(s);
        }
    }
    SummaryReply {
        synopsis,
        plot_points,
        actions,
        interactions,
        relationships,
        emotional_changes,
    }
}

pub fn summarize_episode(
    story_id: &str,
    episode: &Episode,
    items: &[KeyItem],
    gateway: &LlmGateway,
) -> Result<EpisodeSummary, SummaryError> {
    let input = SummaryInput {
        episode_index: episode.index,
        episode_text: episode.text.clone(),
        items: items.to_vec(),
    };
    let items_json = serde_json::to_string(items).expect("items encode");
    let index = episode.index.to_string();
    let reply: SummaryReply = gateway.structured(
        Task::Summarize,
        "summarize",
        &[
            ("items", &items_json),
            ("episode_index", &index),
            ("episode_text", &episode.text),
        ],
        serde_json::to_value(&input).expect("input encodes"),
        |r: &SummaryReply| {
            if r.synopsis.trim().is_empty() {
                Err("synopsis is empty".into())
            } else {
                Ok(())
            }
        },
    )?;
    let sentiment = gateway.score_sentiment(&episode.text)?;
    let interactions = reply
        .interactions
        .into_iter()
        .filter(|i| {
            let declared = items.iter().any(|k| k.item_id == i.item_id);
            if !declared {
                warn!(item = %i.item_id, "summary cites an undeclared item, dropping interaction");
            }
            declared
        })
        .map(|i| ItemInteraction {
            item_id: i.item_id,
            episode_index: episode.index,
            actor: i.actor,
            description: i.description,
            implied_state: i.implied_state,
        })
        .collect();
    Ok(EpisodeSummary {
        story_id: story_id.to_string(),
        episode_index: episode.index,
        synopsis: reply.synopsis.trim().to_string(),
        plot_points: reply.plot_points,
        actions: reply
            .actions
            .into_iter()
            .filter(|a| !a.description.trim().is_empty())
            .map(|a| CharacterAction {
                character: a.character,
                episode_index: episode.index,
                description: a.description,
            })
            .collect(),
        interactions,
        relationships: reply.relationships,
        emotional_changes: reply.emotional_changes,
        sentiment,
    })
}

/// Summarizes every episode of a story, in parallel.
pub fn summarize_story(story: &Story, gateway: &LlmGateway) -> Result<SummaryFile, SummaryError> {
    let summaries = story
        .episodes
        .par_iter()
        .map(|ep| summarize_episode(&story.story_id, ep, &story.key_items, gateway))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SummaryFile {
        story_id: story.story_id.clone(),
        summaries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalDocument {
    pub doc_id: String,
    pub story_id: String,
    pub episode_index: usize,
    pub text: String,
    pub kind: DocumentKind,
}

pub fn doc_id(story_id: &str, episode_index: usize) -> String {
    format!("{story_id}#{episode_index}")
}

const ACTIONS_HEADER: &str = "ACTIONS:";
const ITEMS_HEADER: &str = "ITEMS:";

fn escape(field: &str) -> String {
    if field == "-" {
        return "\\-".into();
    }
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Splits on `" | "` separators that are not escaped.
fn split_fields(line: &str) -> Vec<&str> {
    let bytes = line.as_bytes();
    let mut fields = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'|' => {
                fields.push(line[start..i].strip_suffix(' ').unwrap_or(&line[start..i]));
                start = i + 1;
                if bytes.get(start) == Some(&b' ') {
                    start += 1;
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    fields.push(&line[start.min(line.len())..]);
    fields
}

/// Lays out synopsis, then `ACTIONS:` lines, then `ITEMS:` lines.
pub fn build_retrieval_document(summary: &EpisodeSummary) -> RetrievalDocument {
    let mut text = escape(&summary.synopsis);
    text.push('\n');
    text.push_str(ACTIONS_HEADER);
    for a in &summary.actions {
        text.push_str(&format!(
            "\n- {}: {}",
            escape(&a.character).replace(':', "\\:"),
            escape(&a.description)
        ));
    }
    text.push('\n');
    text.push_str(ITEMS_HEADER);
    for i in &summary.interactions {
        text.push_str(&format!(
            "\n- {} | {} | {} | {}",
            escape(&i.item_id),
            i.actor.as_deref().map_or("-".to_string(), escape),
            i.implied_state.map_or("-", ItemState::as_str),
            escape(&i.description),
        ));
    }
    RetrievalDocument {
        doc_id: doc_id(&summary.story_id, summary.episode_index),
        story_id: summary.story_id.clone(),
        episode_index: summary.episode_index,
        text,
        kind: DocumentKind::Summary,
    }
}

/// Parses the `ITEMS:` section of a retrieval document back into interactions.
pub fn parse_items_section(document: &RetrievalDocument) -> Result<Vec<ItemInteraction>, SummaryError> {
    let mut lines = document.text.lines();
    if !lines.any(|l| l == ITEMS_HEADER) {
        return Err(SummaryError::Document("missing ITEMS: section".into()));
    }
    lines
        .map(|line| {
            let body = line
                .strip_prefix("- ")
                .ok_or_else(|| SummaryError::Document(format!("bad item line `{line}`")))?;
            let fields = split_fields(body);
            let [item, actor, state, description] = fields[..] else {
                return Err(SummaryError::Document(format!("expected 4 fields in `{line}`")));
            };
            let implied_state = match state {
                "-" => None,
                s => Some(ItemState::parse(s).ok_or_else(|| SummaryError::Document(format!("bad state `{s}`")))?),
            };
            Ok(ItemInteraction {
                item_id: unescape(item),
                episode_index: document.episode_index,
                actor: (actor != "-").then(|| unescape(actor)),
                description: unescape(description),
                implied_state,
            })
        })
        .collect()
}
