use std::collections::{BTreeMap, BTreeSet};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::{EpisodeEvaluation, QAResult};
use crate::story::ItemState;
use crate::text;
use crate::tracker::StoryTracking;

/// A percentage, or "n/a" when the inputs it needs are missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    NotAvailable,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::NotAvailable => None,
        }
    }

    fn ratio(numerator: usize, denominator: usize) -> Metric {
        if denominator == 0 {
            Metric::NotAvailable
        } else {
            Metric::Value(100.0 * numerator as f64 / denominator as f64)
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v:.1}"),
            Metric::NotAvailable => f.write_str("n/a"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::NotAvailable => s.serialize_str("n/a"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct MetricVisitor;
        impl Visitor<'_> for MetricVisitor {
            type Value = Metric;
            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("a number or \"n/a\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Metric, E> {
                Ok(Metric::Value(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Metric, E> {
                Ok(Metric::Value(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Metric, E> {
                Ok(Metric::Value(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Metric, E> {
                if v == "n/a" {
                    Ok(Metric::NotAvailable)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(MetricVisitor)
    }
}

/// Gold state of an item at an episode where it is mentioned.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoldItemState {
    pub story_id: String,
    pub item_id: String,
    pub episode: usize,
    pub state: ItemState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldQuestion {
    #[serde(default)]
    pub story_id: Option<String>,
    pub question: String,
    /// Phrase a correct answer contains, e.g. "episode 4".
    #[serde(default)]
    pub expected: Option<String>,
}

/// True when the answer's word sequence contains the expected one.
pub fn answer_matches(answer: &str, expected: &str) -> bool {
    let a = text::words(answer);
    let e = text::words(expected);
    !e.is_empty() && a.windows(e.len()).any(|w| w == e.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub consistency: Metric,
    pub coherence: Metric,
    pub item_status: Metric,
    pub complex_qa: Metric,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub responses: usize,
    pub conflicting: usize,
    pub evaluations: usize,
    pub gold_assertions: usize,
    pub matched_assertions: usize,
    pub graded_questions: usize,
    pub correct_answers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub consistency: Metric,
    pub coherence: Metric,
    pub item_status: Metric,
    pub complex_qa: Metric,
    pub counts: MetricCounts,
    pub per_story: BTreeMap<String, MetricValues>,
    pub config_digest: String,
    pub coherence_scale: String,
}

impl MetricsReport {
    pub fn values(&self) -> MetricValues {
        MetricValues {
            consistency: self.consistency,
            coherence: self.coherence,
            item_status: self.item_status,
            complex_qa: self.complex_qa,
        }
    }
}

pub struct MetricsInput<'a> {
    pub evaluations: &'a [EpisodeEvaluation],
    pub qa: &'a [QAResult],
    /// Corrected timelines that define "prior information".
    pub reference: &'a [StoryTracking],
    pub gold_states: Option<&'a [GoldItemState]>,
}

fn resolved(reference: &BTreeMap<&str, &StoryTracking>, story: &str, item: &str, t: usize) -> Option<ItemState> {
    reference.get(story)?.timeline(item)?.resolved_state_at(t)
}

fn eval_conflicts(reference: &BTreeMap<&str, &StoryTracking>, e: &EpisodeEvaluation) -> bool {
    e.item_states
        .iter()
        .any(|a| resolved(reference, &e.story_id, &a.item_id, e.episode_index).is_some_and(|s| s != a.state))
}

fn qa_story(q: &QAResult) -> Option<&str> {
    q.story_id
        .as_deref()
        .or_else(|| q.supporting_episodes.first().map(|r| r.story_id.as_str()))
}

fn qa_conflicts(reference: &BTreeMap<&str, &StoryTracking>, q: &QAResult) -> bool {
    let Some(story) = qa_story(q) else {
        return false;
    };
    q.item_states
        .iter()
        .any(|a| resolved(reference, story, &a.item_id, a.episode).is_some_and(|s| s != a.state))
}

fn fold(input: &MetricsInput<'_>, story: Option<&str>) -> (MetricValues, MetricCounts) {
    let reference: BTreeMap<&str, &StoryTracking> = input.reference.iter().map(|t| (t.story_id.as_str(), t)).collect();
    let in_scope = |s: &str| story.is_none_or(|x| x == s);
    let evals: Vec<&EpisodeEvaluation> = input.evaluations.iter().filter(|e| in_scope(&e.story_id)).collect();
    let qa: Vec<&QAResult> = input
        .qa
        .iter()
        .filter(|q| story.is_none() || qa_story(q).is_some_and(in_scope))
        .collect();

    let mut counts = MetricCounts {
        responses: evals.len() + qa.len(),
        evaluations: evals.len(),
        ..MetricCounts::default()
    };
    counts.conflicting = evals.iter().filter(|e| eval_conflicts(&reference, e)).count()
        + qa.iter().filter(|q| qa_conflicts(&reference, q)).count();
    let consistency = if counts.responses == 0 {
        Metric::NotAvailable
    } else {
        Metric::Value(100.0 * (1.0 - counts.conflicting as f64 / counts.responses as f64))
    };

    let coherence = if evals.is_empty() {
        Metric::NotAvailable
    } else {
        let total: f64 = evals.iter().map(|e| (e.facet_scores.mean() - 1.0) / 4.0 * 100.0).sum();
        Metric::Value(total / evals.len() as f64)
    };

    let item_status = match input.gold_states {
        None => Metric::NotAvailable,
        Some(gold) => {
            let evaluated: BTreeMap<(&str, usize), &EpisodeEvaluation> = evals
                .iter()
                .map(|e| ((e.story_id.as_str(), e.episode_index), *e))
                .collect();
            for g in gold.iter().filter(|g| in_scope(&g.story_id)) {
                let Some(e) = evaluated.get(&(g.story_id.as_str(), g.episode)) else {
                    continue;
                };
                counts.gold_assertions += 1;
                if e.item_states
                    .iter()
                    .any(|a| a.item_id == g.item_id && a.state == g.state)
                {
                    counts.matched_assertions += 1;
                }
            }
            Metric::ratio(counts.matched_assertions, counts.gold_assertions)
        }
    };

    let graded: Vec<bool> = qa.iter().filter_map(|q| q.correct).collect();
    counts.graded_questions = graded.len();
    counts.correct_answers = graded.iter().filter(|c| **c).count();
    let complex_qa = Metric::ratio(counts.correct_answers, counts.graded_questions);

    (
        MetricValues {
            consistency,
            coherence,
            item_status,
            complex_qa,
        },
        counts,
    )
}

pub fn compute_metrics(input: &MetricsInput<'_>, config_digest: &str) -> MetricsReport {
    let (values, counts) = fold(input, None);
    let stories: BTreeSet<&str> = input
        .evaluations
        .iter()
        .map(|e| e.story_id.as_str())
        .chain(input.qa.iter().filter_map(qa_story))
        .collect();
    let per_story = stories
        .into_iter()
        .map(|s| (s.to_string(), fold(input, Some(s)).0))
        .collect();
    MetricsReport {
        consistency: values.consistency,
        coherence: values.coherence,
        item_status: values.item_status,
        complex_qa: values.complex_qa,
        counts,
        per_story,
        config_digest: config_digest.to_string(),
        coherence_scale: "mean facet score, affine [1,5] -> [0,100]".to_string(),
    }
}
