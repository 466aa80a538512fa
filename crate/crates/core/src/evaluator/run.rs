use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{
    answer_matches, answer_query, compute_metrics, evaluate_episode, EpisodeEvaluation, EvaluationContext,
    EvaluationError, GoldItemState, GoldQuestion, Metric, MetricValues, MetricsInput, MetricsReport, QAResult,
};
use crate::canonical;
use crate::gateway::LlmGateway;
use crate::index::EntryKind;
use crate::pipeline::{Prepared, ScoreConfig};
use crate::retrieval::{
    retrieve_for_query, retrieve_related, ContextBundle, Focus, Granularity, RetrievalConfig, Scope,
};
use crate::story::{KeyItem, Story};
use crate::summarizer::build_retrieval_document;
use crate::tracker::StoryTracking;

pub const BASELINE_LABEL: &str = "baseline";

/// Pipeline modules that ablations can switch off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModuleToggles {
    pub tracking: bool,
    pub summary: bool,
    pub retrieval: bool,
    pub sentiment: bool,
}

impl Default for ModuleToggles {
    fn default() -> Self {
        ModuleToggles {
            tracking: true,
            summary: true,
            retrieval: true,
            sentiment: true,
        }
    }
}

impl ModuleToggles {
    /// The model used directly, without any of the pipeline modules.
    pub fn baseline() -> Self {
        ModuleToggles {
            tracking: false,
            summary: false,
            retrieval: false,
            sentiment: false,
        }
    }

    pub const NAMES: [&'static str; 4] = ["tracking", "summary", "retrieval", "sentiment"];

    /// Disables one module by name.
    pub fn disable(&mut self, name: &str) -> Result<(), String> {
        match name.trim() {
            "tracking" => self.tracking = false,
            "summary" => self.summary = false,
            "retrieval" => self.retrieval = false,
            "sentiment" => self.sentiment = false,
            other => {
                return Err(format!(
                    "unknown module `{other}` (expected one of {})",
                    Self::NAMES.join(", ")
                ))
            }
        }
        Ok(())
    }

    pub fn disabled(&self) -> Vec<String> {
        let flags = [self.tracking, self.summary, self.retrieval, self.sentiment];
        Self::NAMES
            .iter()
            .zip(flags)
            .filter(|(_, on)| !on)
            .map(|(n, _)| n.to_string())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub label: String,
    pub config: ScoreConfig,
    /// Evaluate only this episode.
    pub episode: Option<(String, usize)>,
}

impl RunOptions {
    pub fn new(label: impl Into<String>, config: ScoreConfig) -> Self {
        RunOptions {
            label: label.into(),
            config,
            episode: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub disabled_modules: Vec<String>,
    pub sentiment_filter: bool,
    pub sentiment_tolerance: Option<f64>,
    pub context_source: EntryKind,
    pub corpus_digest: String,
    pub evaluated_episodes: usize,
    pub questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub run_id: String,
    pub label: String,
    pub config: ScoreConfig,
    pub config_digest: String,
    pub metadata: ReportMetadata,
    pub metrics: MetricsReport,
    pub evaluations: Vec<EpisodeEvaluation>,
    pub qa: Vec<QAResult>,
}

fn effective_retrieval(config: &ScoreConfig) -> RetrievalConfig {
    let mut r = config.retrieval.clone();
    r.sentiment_filter &= config.modules.sentiment;
    r
}

fn context_kind(config: &ScoreConfig) -> EntryKind {
    if config.modules.summary {
        EntryKind::Summary
    } else {
        EntryKind::Chunk
    }
}

fn qa_kind(config: &ScoreConfig) -> EntryKind {
    match (config.modules.summary, config.retrieval.granularity) {
        (true, Granularity::Summary) => EntryKind::Summary,
        _ => EntryKind::Chunk,
    }
}

fn evaluate_one(
    prepared: &Prepared,
    story: &Story,
    t: usize,
    config: &ScoreConfig,
    retrieval: &RetrievalConfig,
    gateway: &LlmGateway,
) -> Result<EpisodeEvaluation, EvaluationError> {
    let episode = story
        .episode(t)
        .ok_or_else(|| EvaluationError::Missing(format!("episode {}#{t}", story.story_id)))?;
    let modules = config.modules;
    let summary = prepared.summaries.get(&story.story_id).and_then(|f| f.get(t));
    let tracking: Option<&StoryTracking> = if modules.tracking {
        Some(
            prepared
                .tracking
                .get(&story.story_id)
                .ok_or_else(|| EvaluationError::Missing(format!("item states for {}", story.story_id)))?,
        )
    } else {
        None
    };
    let states = tracking.map(|tr| tr.states_at(t)).unwrap_or_default();
    let errors = tracking.map(|tr| tr.errors_at(t)).unwrap_or_default();
    if modules.summary && summary.is_none() {
        return Err(EvaluationError::Missing(format!("summary of {}#{t}", story.story_id)));
    }
    let focus_sentiment = if modules.sentiment {
        Some(match summary {
            Some(s) => s.sentiment,
            None => gateway.score_sentiment(&episode.text)?,
        })
    } else {
        None
    };
    let bundle = if modules.retrieval {
        let kind = context_kind(config);
        let index = prepared
            .index(kind)
            .ok_or_else(|| EvaluationError::Missing("index not built".into()))?;
        let focus_text = match (modules.summary, summary) {
            (true, Some(s)) => build_retrieval_document(s).text,
            _ => episode.text.clone(),
        };
        let scope = Scope {
            story_id: Some(story.story_id.clone()),
            exclude_episode: retrieval.exclude_self.then(|| (story.story_id.clone(), t)),
            kind: Some(kind),
        };
        retrieve_related(
            Focus::Episode {
                story_id: story.story_id.clone(),
                episode_index: t,
            },
            &focus_text,
            focus_sentiment,
            &scope,
            index,
            &prepared.docs,
            retrieval,
            gateway,
        )?
    } else {
        ContextBundle::empty(Focus::Episode {
            story_id: story.story_id.clone(),
            episode_index: t,
        })
    };
    let ctx = EvaluationContext {
        story_id: &story.story_id,
        items: &story.key_items,
        tracked: tracking.map(|_| (states.as_slice(), errors.as_slice())),
        summary: if modules.summary {
            summary.map(|s| s.synopsis.as_str())
        } else {
            None
        },
        focus_sentiment: focus_sentiment.map(|s| s.value()),
    };
    evaluate_episode(episode, ctx, &bundle, gateway)
}

/// Answers one question under the given configuration and grades it when
/// an expected phrase is known.
pub fn ask(
    prepared: &Prepared,
    question: &GoldQuestion,
    config: &ScoreConfig,
    gateway: &LlmGateway,
) -> Result<QAResult, EvaluationError> {
    let retrieval = effective_retrieval(config);
    let items: Vec<KeyItem> = match &question.story_id {
        Some(id) => prepared
            .corpus
            .story(id)
            .ok_or_else(|| EvaluationError::Missing(format!("story {id}")))?
            .key_items
            .clone(),
        None => prepared
            .corpus
            .stories
            .iter()
            .flat_map(|s| s.key_items.clone())
            .collect(),
    };
    let bundle = if config.modules.retrieval {
        let kind = qa_kind(config);
        let index = prepared
            .index(kind)
            .ok_or_else(|| EvaluationError::Missing("index not built".into()))?;
        let scope = Scope {
            story_id: question.story_id.clone(),
            exclude_episode: None,
            kind: Some(kind),
        };
        retrieve_for_query(&question.question, &scope, index, &prepared.docs, &retrieval, gateway)?
    } else {
        ContextBundle::empty(Focus::Query {
            text: question.question.clone(),
        })
    };
    let mut result = answer_query(
        &question.question,
        question.story_id.as_deref(),
        &items,
        &bundle,
        gateway,
    )?;
    result.correct = question
        .expected
        .as_deref()
        .map(|e| !result.insufficient_context && answer_matches(&result.answer, e));
    Ok(result)
}

pub fn run_evaluation(
    prepared: &Prepared,
    questions: &[GoldQuestion],
    gold_states: Option<&[GoldItemState]>,
    options: &RunOptions,
    gateway: &LlmGateway,
) -> Result<EvaluationReport, EvaluationError> {
    let config = &options.config;
    let retrieval = effective_retrieval(config);
    let mut targets: Vec<(&Story, usize)> = Vec::new();
    for story in &prepared.corpus.stories {
        for ep in &story.episodes {
            if options
                .episode
                .as_ref()
                .is_none_or(|(s, t)| *s == story.story_id && *t == ep.index)
            {
                targets.push((story, ep.index));
            }
        }
    }
    if let Some((s, t)) = &options.episode {
        if targets.is_empty() {
            return Err(EvaluationError::Missing(format!("episode {s}#{t}")));
        }
    }
    let evaluations: Vec<EpisodeEvaluation> = targets
        .par_iter()
        .map(|(story, t)| evaluate_one(prepared, story, *t, config, &retrieval, gateway))
        .collect::<Result<_, _>>()?;
    let qa: Vec<QAResult> = if options.episode.is_some() {
        Vec::new()
    } else {
        questions
            .par_iter()
            .map(|q| ask(prepared, q, config, gateway))
            .collect::<Result<_, _>>()?
    };
    let reference: Vec<StoryTracking> = prepared.tracking.values().cloned().collect();
    let config_digest = config.digest();
    let metrics = compute_metrics(
        &MetricsInput {
            evaluations: &evaluations,
            qa: &qa,
            reference: &reference,
            gold_states,
        },
        &config_digest,
    );
    let corpus_digest = prepared.corpus_digest();
    let run_id = canonical::digest(&(
        &options.label,
        &config_digest,
        &corpus_digest,
        &options.episode,
        questions,
        gold_states,
    ))[..16]
        .to_string();
    Ok(EvaluationReport {
        run_id,
        label: options.label.clone(),
        config: config.clone(),
        config_digest,
        metadata: ReportMetadata {
            disabled_modules: config.modules.disabled(),
            sentiment_filter: retrieval.sentiment_filter,
            sentiment_tolerance: retrieval.sentiment_filter.then_some(retrieval.sentiment_tolerance),
            context_source: context_kind(config),
            corpus_digest,
            evaluated_episodes: evaluations.len(),
            questions: qa.len(),
        },
        metrics,
        evaluations,
        qa,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub consistency: Option<f64>,
    pub coherence: Option<f64>,
    pub item_status: Option<f64>,
    pub complex_qa: Option<f64>,
}

impl MetricDeltas {
    fn between(a: MetricValues, b: MetricValues) -> Self {
        let d = |x: Metric, y: Metric| Some(x.value()? - y.value()?);
        MetricDeltas {
            consistency: d(a.consistency, b.consistency),
            coherence: d(a.coherence, b.coherence),
            item_status: d(a.item_status, b.item_status),
            complex_qa: d(a.complex_qa, b.complex_qa),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run_id: String,
    pub a: EvaluationReport,
    pub b: EvaluationReport,
    /// `a` minus `b`, per metric.
    pub deltas: MetricDeltas,
    pub warnings: Vec<String>,
}

/// Evaluates the same corpus and questions under two configurations.
pub fn run_comparison(
    prepared: &Prepared,
    questions: &[GoldQuestion],
    gold_states: Option<&[GoldItemState]>,
    a: &RunOptions,
    b: &RunOptions,
    gateway: &LlmGateway,
) -> Result<ComparisonReport, EvaluationError> {
    let mut warnings = Vec::new();
    if a.config.digest() == b.config.digest() {
        warn!("both sides of the comparison use the same configuration");
        warnings.push("identical configuration digests on both sides".to_string());
    }
    let ra = run_evaluation(prepared, questions, gold_states, a, gateway)?;
    let rb = run_evaluation(prepared, questions, gold_states, b, gateway)?;
    let deltas = MetricDeltas::between(ra.metrics.values(), rb.metrics.values());
    let run_id = canonical::digest(&(&ra.run_id, &rb.run_id))[..16].to_string();
    Ok(ComparisonReport {
        run_id,
        a: ra,
        b: rb,
        deltas,
        warnings,
    })
}

fn metrics_table(out: &mut String, rows: &[(&str, MetricValues)]) {
    out.push_str("| | consistency | coherence | item status | complex QA |\n|---|---|---|---|---|\n");
    for (name, v) in rows {
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} | {} |",
            v.consistency, v.coherence, v.item_status, v.complex_qa
        );
    }
}

pub fn render_markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation {} ({})\n", report.run_id, report.label);
    let _ = writeln!(out, "config digest: `{}`\n", report.config_digest);
    let disabled = &report.metadata.disabled_modules;
    let _ = writeln!(
        out,
        "disabled modules: {}\n",
        if disabled.is_empty() {
            "none".to_string()
        } else {
            disabled.join(", ")
        }
    );
    match report.metadata.sentiment_tolerance {
        Some(tau) => {
            let _ = writeln!(out, "sentiment filter: on, tolerance {tau}\n");
        }
        None => out.push_str("sentiment filter: off\n\n"),
    }
    let _ = writeln!(out, "coherence scale: {}\n", report.metrics.coherence_scale);
    out.push_str("## Metrics\n\n");
    let mut rows = vec![("all", report.metrics.values())];
    rows.extend(report.metrics.per_story.iter().map(|(k, v)| (k.as_str(), *v)));
    metrics_table(&mut out, &rows);
    out.push_str("\n## Episodes\n\n| episode | character | plot | emotion | key items | errors cited |\n|---|---|---|---|---|---|\n");
    for e in &report.evaluations {
        let f = e.facet_scores;
        let _ = writeln!(
            out,
            "| {}#{} | {:.1} | {:.1} | {:.1} | {:.1} | {} |",
            e.story_id,
            e.episode_index,
            f.character_consistency,
            f.plot_progression,
            f.emotional_authenticity,
            f.key_item_continuity,
            e.continuity_errors_cited.len()
        );
    }
    if !report.qa.is_empty() {
        out.push_str("\n## Questions\n\n| question | answer | correct |\n|---|---|---|\n");
        for q in &report.qa {
            let correct = match q.correct {
                Some(true) => "yes",
                Some(false) => "no",
                None => "-",
            };
            let _ = writeln!(
                out,
                "| {} | {} | {correct} |",
                q.question.replace('|', "\\|"),
                q.answer.replace('|', "\\|")
            );
        }
    }
    out
}

pub fn render_comparison_markdown(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Comparison {}\n", report.run_id);
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}\n");
    }
    metrics_table(
        &mut out,
        &[
            (report.a.label.as_str(), report.a.metrics.values()),
            (report.b.label.as_str(), report.b.metrics.values()),
        ],
    );
    let fmt = |d: Option<f64>| d.map_or("n/a".to_string(), |v| format!("{v:+.1}"));
    let d = &report.deltas;
    let _ = writeln!(
        out,
        "| delta | {} | {} | {} | {} |",
        fmt(d.consistency),
        fmt(d.coherence),
        fmt(d.item_status),
        fmt(d.complex_qa)
    );
    out
}
