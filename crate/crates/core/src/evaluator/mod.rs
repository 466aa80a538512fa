//! Facet-scored episode evaluation, question answering, corpus metrics and
//! the comparison harness.

mod metrics;
mod run;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::gateway::{GatewayError, LlmGateway, Task};
use crate::retrieval::{ContextBundle, RetrievalError};
use crate::story::{Episode, ItemState, KeyItem};
use crate::text;
use crate::tracker::{rule_extract, ContinuityError};

pub use metrics::{
    answer_matches, compute_metrics, GoldItemState, GoldQuestion, Metric, MetricCounts, MetricValues, MetricsInput,
    MetricsReport,
};
pub use run::{
    ask, render_comparison_markdown, render_markdown, run_comparison, run_evaluation, ComparisonReport,
    EvaluationReport, MetricDeltas, ModuleToggles, ReportMetadata, RunOptions, BASELINE_LABEL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error(transparent)]
    Gateway(GatewayError),
    #[error("evaluation reply unusable ({message}): {raw}")]
    Reply { message: String, raw: String },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("missing input: {0}")]
    Missing(String),
}

impl From<GatewayError> for EvaluationError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Structured { message, raw, .. } => EvaluationError::Reply { message, raw },
            other => EvaluationError::Gateway(other),
        }
    }
}

pub const FACETS: [&str; 4] = [
    "character_consistency",
    "plot_progression",
    "emotional_authenticity",
    "key_item_continuity",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacetScores {
    pub character_consistency: f64,
    pub plot_progression: f64,
    pub emotional_authenticity: f64,
    pub key_item_continuity: f64,
}

impl FacetScores {
    pub fn uniform(score: f64) -> Self {
        FacetScores {
            character_consistency: score,
            plot_progression: score,
            emotional_authenticity: score,
            key_item_continuity: score,
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [
            self.character_consistency,
            self.plot_progression,
            self.emotional_authenticity,
            self.key_item_continuity,
        ]
    }

    pub fn mean(&self) -> f64 {
        self.values().iter().sum::<f64>() / 4.0
    }

    pub fn check(&self) -> Result<(), String> {
        for (name, v) in FACETS.iter().zip(self.values()) {
            if !(1.0..=5.0).contains(&v) {
                return Err(format!("facet {name} = {v} is outside [1, 5]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemStateAssertion {
    pub item_id: String,
    pub state: ItemState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedError {
    pub item_id: String,
    pub reappearance_episode: usize,
}

/// Context entry as shown to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBrief {
    pub story_id: String,
    pub episode: usize,
    pub sentiment: f64,
    pub text: String,
}

impl ContextBrief {
    pub fn from_bundle(bundle: &ContextBundle) -> Vec<ContextBrief> {
        bundle
            .selected
            .iter()
            .map(|e| ContextBrief {
                story_id: e.story_id.clone(),
                episode: e.episode_index,
                sentiment: e.sentiment,
                text: e.text.clone(),
            })
            .collect()
    }
}

fn render_context(context: &[ContextBrief]) -> String {
    if context.is_empty() {
        return "(none)".to_string();
    }
    context
        .iter()
        .map(|c| {
            format!(
                "[{} episode {}] (sentiment {:.2})\n{}",
                c.story_id, c.episode, c.sentiment, c.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Request payload of the evaluation task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationInput {
    pub story_id: String,
    pub episode_index: usize,
    pub episode_text: String,
    pub items: Vec<KeyItem>,
    /// Tracked (corrected) states; `None` when tracking is disabled.
    pub item_states: Option<Vec<ItemStateAssertion>>,
    pub continuity_errors: Vec<ContinuityError>,
    pub summary: Option<String>,
    pub focus_sentiment: Option<f64>,
    pub context: Vec<ContextBrief>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReply {
    pub facet_scores: FacetScores,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub cited_errors: Vec<CitedError>,
    #[serde(default)]
    pub item_states: Vec<ItemStateAssertion>,
}

/// Scoring rule of the offline backend.
///
/// Key-item continuity is 5 without listed errors and 3 otherwise. Character
/// consistency and plot progression start at 3 and gain a point each for a
/// summary and for non-empty context. Emotional authenticity is
/// `5 - 4 * mean |Δσ|` over the context, or 3 without sentiment. Item states
/// are the tracked ones when given, otherwise read off the episode text.
pub fn rubric_evaluation(input: &EvaluationInput) -> EvaluationReply {
    let bonus = f64::from(u8::from(input.summary.is_some())) + f64::from(u8::from(!input.context.is_empty()));
    let emotional = match input.focus_sentiment {
        Some(sigma) if !input.context.is_empty() => {
            let mean =
                input.context.iter().map(|c| (c.sentiment - sigma).abs()).sum::<f64>() / input.context.len() as f64;
            (5.0 - 4.0 * mean).clamp(1.0, 5.0)
        }
        _ => 3.0,
    };
    let continuity = if input.continuity_errors.is_empty() { 5.0 } else { 3.0 };
    let item_states = match &input.item_states {
        Some(states) => states.clone(),
        None => rule_extract(&input.episode_text, &input.items)
            .items
            .into_iter()
            .map(|s| ItemStateAssertion {
                item_id: s.item_id,
                state: s.state,
            })
            .collect(),
    };
    let rationale = if input.continuity_errors.is_empty() {
        format!(
            "episode {}: no continuity errors; {} context entries",
            input.episode_index,
            input.context.len()
        )
    } else {
        let ids: Vec<String> = input
            .continuity_errors
            .iter()
            .map(|e| format!("{} returns as active after being {}", e.item_id, e.prior_state))
            .collect();
        format!("episode {}: {}", input.episode_index, ids.join("; "))
    };
    EvaluationReply {
        facet_scores: FacetScores {
            character_consistency: 3.0 + bonus,
            plot_progression: 3.0 + bonus,
            emotional_authenticity: emotional,
            key_item_continuity: continuity,
        },
        rationale,
        cited_errors: input
            .continuity_errors
            .iter()
            .map(|e| CitedError {
                item_id: e.item_id.clone(),
                reappearance_episode: e.reappearance_episode,
            })
            .collect(),
        item_states,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEvaluation {
    pub story_id: String,
    pub episode_index: usize,
    pub facet_scores: FacetScores,
    pub rationale: String,
    pub item_states: Vec<ItemStateAssertion>,
    pub continuity_errors_cited: Vec<ContinuityError>,
    /// Digest of the context bundle used.
    pub context_used: String,
    pub context_episodes: Vec<(String, usize)>,
}

/// Tracked states at the episode and the errors flagged there.
pub type Tracked<'a> = (&'a [(String, ItemState)], &'a [ContinuityError]);

/// Everything an episode evaluation may draw on. Disabled modules leave
/// their fields empty.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationContext<'a> {
    pub story_id: &'a str,
    pub items: &'a [KeyItem],
    /// Corrected states and detected errors; `None` disables tracking.
    pub tracked: Option<Tracked<'a>>,
    pub summary: Option<&'a str>,
    pub focus_sentiment: Option<f64>,
}

pub fn evaluate_episode(
    episode: &Episode,
    ctx: EvaluationContext<'_>,
    bundle: &ContextBundle,
    gateway: &LlmGateway,
) -> Result<EpisodeEvaluation, EvaluationError> {
    let errors: Vec<ContinuityError> = ctx.tracked.map(|(_, e)| e.to_vec()).unwrap_or_default();
    let item_states = ctx.tracked.map(|(states, _)| {
        states
            .iter()
            .map(|(item_id, state)| ItemStateAssertion {
                item_id: item_id.clone(),
                state: *state,
            })
            .collect::<Vec<_>>()
    });
    let context = ContextBrief::from_bundle(bundle);
    let input = EvaluationInput {
        story_id: ctx.story_id.to_string(),
        episode_index: episode.index,
        episode_text: episode.text.clone(),
        items: ctx.items.to_vec(),
        item_states: item_states.clone(),
        continuity_errors: errors.clone(),
        summary: ctx.summary.map(str::to_string),
        focus_sentiment: ctx.focus_sentiment,
        context: context.clone(),
    };
    let errors_json = serde_json::to_string(&errors).expect("errors encode");
    let states_json = serde_json::to_string(&item_states.unwrap_or_default()).expect("states encode");
    let items_json = serde_json::to_string(ctx.items).expect("items encode");
    let index = episode.index.to_string();
    let reply: EvaluationReply = gateway.structured(
        Task::Evaluate,
        "evaluate",
        &[
            ("episode_index", &index),
            ("continuity_errors", &errors_json),
            ("item_states", &states_json),
            ("items", &items_json),
            ("summary", ctx.summary.unwrap_or("(none)")),
            ("context", &render_context(&context)),
            ("episode_text", &episode.text),
        ],
        serde_json::to_value(&input).expect("input encodes"),
        |r: &EvaluationReply| r.facet_scores.check(),
    )?;

    let mut cited = Vec::new();
    for c in &reply.cited_errors {
        match errors
            .iter()
            .find(|e| e.item_id == c.item_id && e.reappearance_episode == c.reappearance_episode)
        {
            Some(e) if !cited.contains(e) => cited.push(e.clone()),
            Some(_) => {}
            None => warn!(item = %c.item_id, episode = c.reappearance_episode, "dropping ungrounded error citation"),
        }
    }
    let mut facet_scores = reply.facet_scores;
    if !errors.is_empty() {
        facet_scores.key_item_continuity = facet_scores.key_item_continuity.min(3.0);
    }
    let declared: BTreeSet<&str> = ctx.items.iter().map(|i| i.item_id.as_str()).collect();
    let mut item_states: Vec<ItemStateAssertion> = reply
        .item_states
        .into_iter()
        .filter(|a| declared.contains(a.item_id.as_str()))
        .collect();
    item_states.sort();
    item_states.dedup_by(|a, b| a.item_id == b.item_id);
    Ok(EpisodeEvaluation {
        story_id: ctx.story_id.to_string(),
        episode_index: episode.index,
        facet_scores,
        rationale: reply.rationale,
        item_states,
        continuity_errors_cited: cited,
        context_used: bundle.digest(),
        context_episodes: bundle.episode_refs(),
    })
}

pub const INSUFFICIENT_CONTEXT: &str = "insufficient context";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpisodeRef {
    pub story_id: String,
    pub episode: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerItemState {
    pub item_id: String,
    pub episode: usize,
    pub state: ItemState,
}

/// Request payload of the answer task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerInput {
    pub question: String,
    pub items: Vec<KeyItem>,
    pub context: Vec<ContextBrief>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerReply {
    pub answer: String,
    #[serde(default)]
    pub episodes: Vec<EpisodeRef>,
    #[serde(default)]
    pub item_states: Vec<AnswerItemState>,
}

const QUESTION_STOPWORDS: &[&str] = &[
    "a", "an", "and", "at", "did", "do", "does", "for", "from", "had", "has", "have", "how", "in", "is", "it", "of",
    "on", "or", "the", "to", "was", "were", "what", "when", "where", "which", "who", "whom", "why", "with",
];

fn content_words(s: &str) -> BTreeSet<String> {
    text::words(s)
        .into_iter()
        .filter(|w| !QUESTION_STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Answering rule of the offline backend: quote the context entry sharing
/// the most content words with the question (ties go to the earlier entry).
pub fn rubric_answer(input: &AnswerInput) -> AnswerReply {
    let wanted = content_words(&input.question);
    let best = input
        .context
        .iter()
        .map(|c| (content_words(&c.text).intersection(&wanted).count(), c))
        .filter(|(overlap, _)| *overlap > 0)
        .fold(None::<(usize, &ContextBrief)>, |acc, cur| match acc {
            Some(a) if a.0 >= cur.0 => Some(a),
            _ => Some(cur),
        });
    let Some((_, entry)) = best else {
        return AnswerReply {
            answer: INSUFFICIENT_CONTEXT.to_string(),
            episodes: Vec::new(),
            item_states: Vec::new(),
        };
    };
    let quote = text::first_sentence(&entry.text).trim();
    let answer = format!("Episode {}: {}", entry.episode, quote);
    let item_states = rule_extract(quote, &input.items)
        .items
        .into_iter()
        .map(|s| AnswerItemState {
            item_id: s.item_id,
            episode: entry.episode,
            state: s.state,
        })
        .collect();
    AnswerReply {
        answer,
        episodes: vec![EpisodeRef {
            story_id: entry.story_id.clone(),
            episode: entry.episode,
        }],
        item_states,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAResult {
    pub question: String,
    pub story_id: Option<String>,
    pub answer: String,
    pub supporting_episodes: Vec<EpisodeRef>,
    #[serde(default)]
    pub item_states: Vec<AnswerItemState>,
    pub insufficient_context: bool,
    pub correct: Option<bool>,
    pub context_used: String,
}

pub fn answer_query(
    question: &str,
    story_id: Option<&str>,
    items: &[KeyItem],
    bundle: &ContextBundle,
    gateway: &LlmGateway,
) -> Result<QAResult, EvaluationError> {
    let refused = |bundle: &ContextBundle| QAResult {
        question: question.to_string(),
        story_id: story_id.map(str::to_string),
        answer: INSUFFICIENT_CONTEXT.to_string(),
        supporting_episodes: Vec::new(),
        item_states: Vec::new(),
        insufficient_context: true,
        correct: None,
        context_used: bundle.digest(),
    };
    if bundle.is_empty() {
        return Ok(refused(bundle));
    }
    let context = ContextBrief::from_bundle(bundle);
    let input = AnswerInput {
        question: question.to_string(),
        items: items.to_vec(),
        context: context.clone(),
    };
    let reply: AnswerReply = gateway.structured(
        Task::Answer,
        "answer",
        &[("question", question), ("context", &render_context(&context))],
        serde_json::to_value(&input).expect("input encodes"),
        |r: &AnswerReply| {
            if r.answer.trim().is_empty() {
                Err("answer is empty".into())
            } else {
                Ok(())
            }
        },
    )?;
    let available: BTreeSet<(String, usize)> = bundle.episode_refs().into_iter().collect();
    let mut supporting: Vec<EpisodeRef> = Vec::new();
    for r in reply.episodes {
        if !available.contains(&(r.story_id.clone(), r.episode)) {
            warn!(story = %r.story_id, episode = r.episode, "answer cites an episode outside its context");
        } else if !supporting.contains(&r) {
            supporting.push(r);
        }
    }
    if reply.answer.trim().eq_ignore_ascii_case(INSUFFICIENT_CONTEXT) {
        return Ok(refused(bundle));
    }
    Ok(QAResult {
        question: question.to_string(),
        story_id: story_id.map(str::to_string),
        answer: reply.answer.trim().to_string(),
        supporting_episodes: supporting,
        item_states: reply.item_states,
        insufficient_context: false,
        correct: None,
        context_used: bundle.digest(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{ContextEntry, Focus};

    fn bundle(entries: &[(usize, &str, f64)]) -> ContextBundle {
        let mut b = ContextBundle::empty(Focus::Query { text: "q".into() });
        b.selected = entries
            .iter()
            .map(|&(t, text, sigma)| ContextEntry {
                entry_id: format!("s#{t}"),
                story_id: "s".into(),
                episode_index: t,
                similarity: 0.5,
                sentiment: sigma,
                text: text.into(),
            })
            .collect();
        b
    }

    fn sword() -> Vec<KeyItem> {
        vec![KeyItem::new("sword", ["sword"])]
    }

    fn error_at(t: usize) -> ContinuityError {
        ContinuityError {
            item_id: "sword".into(),
            prior_episode: t - 1,
            prior_state: ItemState::Destroyed,
            reappearance_episode: t,
            claimed_state: ItemState::Active,
            explanation_found: false,
        }
    }

    #[test]
    fn error_free_episode_gets_full_continuity() {
        let ep = Episode::new(2, "Mara wielded the sword.");
        let ctx = EvaluationContext {
            story_id: "s",
            items: &sword(),
            tracked: Some((&[("sword".into(), ItemState::Active)], &[])),
            summary: Some("Mara wields the sword."),
            focus_sentiment: Some(0.5),
        };
        let ev = evaluate_episode(
            &ep,
            ctx,
            &bundle(&[(1, "Mara carried the sword.", 0.5)]),
            &LlmGateway::mock(),
        )
        .unwrap();
        assert_eq!(ev.facet_scores.key_item_continuity, 5.0);
        assert_eq!(ev.facet_scores.emotional_authenticity, 5.0);
        assert_eq!(ev.facet_scores.character_consistency, 5.0);
        assert!(ev.continuity_errors_cited.is_empty());
        assert_eq!(ev.context_episodes, vec![("s".to_string(), 1)]);
    }

    #[test]
    fn listed_error_is_cited_and_caps_continuity() {
        let ep = Episode::new(5, "Mara raised the sword.");
        let errs = [error_at(5)];
        let ctx = EvaluationContext {
            story_id: "s",
            items: &sword(),
            tracked: Some((&[("sword".into(), ItemState::Destroyed)], &errs)),
            summary: None,
            focus_sentiment: None,
        };
        let ev = evaluate_episode(
            &ep,
            ctx,
            &ContextBundle::empty(Focus::Query { text: "q".into() }),
            &LlmGateway::mock(),
        )
        .unwrap();
        assert!(ev.facet_scores.key_item_continuity <= 3.0);
        assert_eq!(ev.continuity_errors_cited, errs.to_vec());
        assert_eq!(ev.item_states[0].state, ItemState::Destroyed);
    }

    #[test]
    fn untracked_evaluation_reports_raw_states() {
        let ep = Episode::new(5, "Mara raised the sword.");
        let ctx = EvaluationContext {
            story_id: "s",
            items: &sword(),
            tracked: None,
            summary: None,
            focus_sentiment: None,
        };
        let ev = evaluate_episode(
            &ep,
            ctx,
            &ContextBundle::empty(Focus::Query { text: "q".into() }),
            &LlmGateway::mock(),
        )
        .unwrap();
        assert_eq!(ev.item_states[0].state, ItemState::Active);
        assert_eq!(ev.facet_scores.key_item_continuity, 5.0);
    }

    #[test]
    fn empty_bundle_refuses() {
        let qa = answer_query(
            "Where is the sword?",
            Some("s"),
            &sword(),
            &ContextBundle::empty(Focus::Query { text: "q".into() }),
            &LlmGateway::mock(),
        )
        .unwrap();
        assert!(qa.insufficient_context);
        assert_eq!(qa.answer, INSUFFICIENT_CONTEXT);
        assert!(qa.supporting_episodes.is_empty());
    }

    #[test]
    fn answer_quotes_best_overlapping_entry() {
        let b = bundle(&[
            (1, "Mara carried the sword to the inn.", 0.5),
            (4, "The sword shattered on the stone. Mara wept.", 0.2),
        ]);
        let qa = answer_query(
            "When was the sword shattered?",
            Some("s"),
            &sword(),
            &b,
            &LlmGateway::mock(),
        )
        .unwrap();
        assert_eq!(qa.answer, "Episode 4: The sword shattered on the stone.");
        assert_eq!(
            qa.supporting_episodes,
            vec![EpisodeRef {
                story_id: "s".into(),
                episode: 4
            }]
        );
        assert_eq!(qa.item_states[0].state, ItemState::Destroyed);
    }

    #[test]
    fn facet_bounds_checked() {
        assert!(FacetScores::uniform(5.0).check().is_ok());
        assert!(FacetScores::uniform(0.5).check().is_err());
        assert!(FacetScores::uniform(f64::NAN).check().is_err());
    }
}
