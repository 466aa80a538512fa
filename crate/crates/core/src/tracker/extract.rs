use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{ItemObservation, ObservationSource, TrackerError};
use crate::gateway::{BackendKind, GatewayError, LlmGateway, Task};
use crate::story::{Episode, ItemState, KeyItem};
use crate::text;

/// Request payload of the extraction task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionInput {
    pub episode_index: usize,
    pub episode_text: String,
    pub items: Vec<KeyItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReply {
    pub items: Vec<ExtractedStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedStatus {
    pub item_id: String,
    pub state: ItemState,
    #[serde(default)]
    pub explained: bool,
    #[serde(default)]
    pub evidence: Option<(usize, usize)>,
}

/// Lexicon-driven extraction. Each sentence mentioning an item contributes
/// the last state verb in that sentence, or `active` for a bare mention. The
/// item's state is that of its last such sentence; it is explained when any
/// of its sentences carries a restoration verb.
pub fn rule_extract(episode_text: &str, items: &[KeyItem]) -> ExtractionReply {
    let mut found: BTreeMap<usize, ExtractedStatus> = BTreeMap::new();
    for (s, e) in text::sentences(episode_text) {
        let toks = text::tokens(&episode_text[s..e]);
        for (pos, item) in items.iter().enumerate() {
            if text::alias_matches(&toks, item).is_empty() {
                continue;
            }
            let state = text::last_state_cue(&toks).map_or(ItemState::Active, |c| c.state());
            let restored = text::has_restoration_cue(&toks);
            let entry = found.entry(pos).or_insert_with(|| ExtractedStatus {
                item_id: item.item_id.clone(),
                state,
                explained: false,
                evidence: None,
            });
            entry.state = state;
            entry.explained |= restored;
            entry.evidence = Some((s, e));
        }
    }
    ExtractionReply {
        items: found.into_values().collect(),
    }
}

/// One observation per key item mentioned in the episode.
pub fn extract_item_statuses(
    episode: &Episode,
    items: &[KeyItem],
    gateway: &LlmGateway,
) -> Result<Vec<ItemObservation>, TrackerError> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let input = ExtractionInput {
        episode_index: episode.index,
        episode_text: episode.text.clone(),
        items: items.to_vec(),
    };
    let items_json = serde_json::to_string(items).expect("items encode");
    let index = episode.index.to_string();
    let reply: ExtractionReply = gateway
        .structured(
            Task::ExtractStates,
            "extract_states",
            &[
                ("items", &items_json),
                ("episode_index", &index),
                ("episode_text", &episode.text),
            ],
            serde_json::to_value(&input).expect("input encodes"),
            |_: &ExtractionReply| Ok(()),
        )
        .map_err(|e| match e {
            GatewayError::Structured { message, raw, .. } => TrackerError::Extraction { message, raw },
            other => TrackerError::Gateway(other),
        })?;
    let source = match gateway.config().backend {
        BackendKind::Mock => ObservationSource::ExtractedRule,
        BackendKind::Remote => ObservationSource::ExtractedLlm,
    };
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for status in reply.items {
        if !items.iter().any(|i| i.item_id == status.item_id) {
            warn!(item = %status.item_id, "extractor reported an undeclared item, ignoring");
            continue;
        }
        if !seen.insert(status.item_id.clone()) {
            continue;
        }
        let evidence = status.evidence.filter(|&(s, e)| {
            s < e && e <= episode.text.len() && episode.text.is_char_boundary(s) && episode.text.is_char_boundary(e)
        });
        out.push(ItemObservation {
            item_id: status.item_id,
            episode_index: episode.index,
            state: status.state,
            explained: status.explained,
            evidence,
            source,
            corrected_to: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Backend, CompletionRequest, EmbeddingRequest, GatewayConfig};
    use std::sync::Arc;

    fn sword() -> Vec<KeyItem> {
        vec![KeyItem::new("sword", ["sword"])]
    }

    #[test]
    fn shattered_means_destroyed() {
        let ep = Episode::new(4, "The sword shattered on the stone.");
        let obs = extract_item_statuses(&ep, &sword(), &LlmGateway::mock()).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].state, ItemState::Destroyed);
        assert_eq!(obs[0].episode_index, 4);
        assert_eq!(obs[0].source, ObservationSource::ExtractedRule);
        assert_eq!(obs[0].evidence, Some((0, ep.text.len())));
    }

    #[test]
    fn no_mention_no_observation() {
        let ep = Episode::new(0, "Rain fell over the harbor.");
        assert!(extract_item_statuses(&ep, &sword(), &LlmGateway::mock())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn case_variant_alias_matches() {
        let ep = Episode::new(0, "Mara wielded the Sword.");
        let obs = extract_item_statuses(&ep, &sword(), &LlmGateway::mock()).unwrap();
        assert_eq!(obs[0].state, ItemState::Active);
    }

    #[test]
    fn restoration_sets_explained() {
        let reply = rule_extract("The smith repaired the sword. Mara wielded the sword.", &sword());
        assert_eq!(reply.items[0].state, ItemState::Active);
        assert!(reply.items[0].explained);
        let reply = rule_extract("Mara dropped the sword in the river.", &sword());
        assert_eq!(reply.items[0].state, ItemState::Lost);
        assert!(!reply.items[0].explained);
    }

    struct Scripted(&'static str);
    impl Backend for Scripted {
        fn complete(&self, _: &CompletionRequest) -> Result<String, GatewayError> {
            Ok(self.0.to_string())
        }
        fn embed(&self, _: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, GatewayError> {
            unreachable!()
        }
    }

    #[test]
    fn unparseable_reply_carries_raw_text() {
        let gw = LlmGateway::with_backend(GatewayConfig::mock(), Arc::new(Scripted("not json")), None).unwrap();
        let err = extract_item_statuses(&Episode::new(0, "x sword"), &sword(), &gw).unwrap_err();
        match err {
            TrackerError::Extraction { raw, .. } => assert_eq!(raw, "not json"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undeclared_items_and_bad_evidence_dropped() {
        let gw = LlmGateway::with_backend(
            GatewayConfig::mock(),
            Arc::new(Scripted(
                r#"{"items":[{"item_id":"ring","state":"lost"},{"item_id":"sword","state":"lost","evidence":[0,999]}]}"#,
            )),
            None,
        )
        .unwrap();
        let obs = extract_item_statuses(&Episode::new(0, "the sword"), &sword(), &gw).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].evidence, None);
    }
}
