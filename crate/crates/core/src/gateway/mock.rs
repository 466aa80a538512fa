//! Deterministic offline backend.
//!
//! Embeddings are signed feature hashes of case-folded unigrams and bigrams.
//! Sentiment is a lexicon balance mapped to [0, 1]. Structured tasks are
//! answered by rule engines reading the request payload, so every reply is a
//! pure function of the request.

use serde::de::DeserializeOwned;
use serde_json::Value;

use super::{Backend, CompletionRequest, EmbeddingRequest, GatewayError, Task};
use crate::{canonical, evaluator, summarizer, text, tracker};

#[derive(Debug, Default, Clone, Copy)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        MockBackend
    }
}

fn payload<T: DeserializeOwned>(request: &CompletionRequest) -> Result<T, GatewayError> {
    serde_json::from_value(request.payload.clone())
        .map_err(|e| GatewayError::Protocol(format!("mock {} payload: {e}", request.task.as_str())))
}

fn reply<T: serde::Serialize>(value: &T) -> String {
    String::from_utf8(canonical::to_compact(value)).expect("utf-8 JSON")
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        match request.task {
            Task::Freeform => {
                let digest = canonical::sha256_hex(request.prompt.as_bytes());
                Ok(format!("mock completion {}", &digest[..16]))
            }
            Task::Sentiment => {
                let text = request
                    .payload
                    .get("text")
                    .and_then(Value::as_str)
                    .unwrap_or(&request.prompt);
                Ok(format!("{}", text::lexicon_sentiment(text)))
            }
            Task::ExtractStates => {
                let input: tracker::ExtractionInput = payload(request)?;
                Ok(reply(&tracker::rule_extract(&input.episode_text, &input.items)))
            }
            Task::Summarize => {
                let input: summarizer::SummaryInput = payload(request)?;
                Ok(reply(&summarizer::rule_summary(&input)))
            }
            Task::Evaluate => {
                let input: evaluator::EvaluationInput = payload(request)?;
                Ok(reply(&evaluator::rubric_evaluation(&input)))
            }
            Task::Answer => {
                let input: evaluator::AnswerInput = payload(request)?;
                Ok(reply(&evaluator::rubric_answer(&input)))
            }
            Task::Repair => Ok(request
                .payload
                .get("raw")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string()),
        }
    }

    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, GatewayError> {
        Ok(request.texts.iter().map(|t| hashed_embedding(t, request.dim)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn add_feature(v: &mut [f64], feature: &str) {
    let h = fnv1a(feature.as_bytes());
    let bucket = (h % v.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    v[bucket] += sign;
}

/// Unit-normalized signed hash of unigrams and bigrams. Text without any
/// word characters hashes as a single feature so the vector is never zero.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f64> {
    let words = text::words(text);
    let mut v = vec![0.0; dim];
    for w in &words {
        add_feature(&mut v, w);
    }
    for pair in words.windows(2) {
        add_feature(&mut v, &format!("{} {}", pair[0], pair[1]));
    }
    let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // no words, or every feature cancelled
        add_feature(&mut v, &format!("\u{0}{}", text.trim()));
        norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}
