//! Key-item state timelines, continuity-error detection and correction.
//!
//! An item's timeline is the ordered list of its observed states. Detection
//! flags every episode where an item that was last seen lost or destroyed is
//! claimed active again without a narrative explanation. Correction keeps the
//! earlier state for such episodes while retaining the raw observation.

mod extract;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, LlmGateway};
use crate::story::{ItemState, Story};

pub use extract::{extract_item_statuses, rule_extract, ExtractedStatus, ExtractionInput, ExtractionReply};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("observation for `{found}` recorded on timeline of `{expected}`")]
    ItemMismatch { expected: String, found: String },
    #[error("timeline of `{0}` is not sorted by episode")]
    Unsorted(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unusable extraction reply ({message}): {raw}")]
    Extraction { message: String, raw: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSource {
    Declared,
    ExtractedLlm,
    ExtractedRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemObservation {
    pub item_id: String,
    #[serde(rename = "episode")]
    pub episode_index: usize,
    pub state: ItemState,
    /// The episode narratively explains the item's return.
    #[serde(default)]
    pub explained: bool,
    /// Byte range of the supporting text in the episode.
    #[serde(default)]
    pub evidence: Option<(usize, usize)>,
    #[serde(default = "default_source")]
    pub source: ObservationSource,
    /// Set by correction: the state this observation resolves to instead of
    /// its raw `state`. Such observations are suppressed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_to: Option<ItemState>,
}

fn default_source() -> ObservationSource {
    ObservationSource::Declared
}

impl ItemObservation {
    pub fn new(item_id: impl Into<String>, episode_index: usize, state: ItemState) -> Self {
        ItemObservation {
            item_id: item_id.into(),
            episode_index,
            state,
            explained: false,
            evidence: None,
            source: ObservationSource::Declared,
            corrected_to: None,
        }
    }

    pub fn explained(mut self, explained: bool) -> Self {
        self.explained = explained;
        self
    }

    pub fn is_suppressed(&self) -> bool {
        self.corrected_to.is_some()
    }

    pub fn resolved_state(&self) -> ItemState {
        self.corrected_to.unwrap_or(self.state)
    }
}

/// Observations of one item, sorted by episode; observations within one
/// episode keep insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TimelineFile")]
pub struct ItemTimeline {
    pub item_id: String,
    observations: Vec<ItemObservation>,
}

#[derive(Deserialize)]
struct TimelineFile {
    item_id: String,
    observations: Vec<FileObservation>,
}

// the item id is implied by the enclosing timeline in files
#[derive(Deserialize)]
struct FileObservation {
    #[serde(default)]
    item_id: Option<String>,
    episode: usize,
    state: ItemState,
    #[serde(default)]
    explained: bool,
    #[serde(default)]
    evidence: Option<(usize, usize)>,
    #[serde(default = "default_source")]
    source: ObservationSource,
    #[serde(default)]
    corrected_to: Option<ItemState>,
}

impl TryFrom<TimelineFile> for ItemTimeline {
    type Error = TrackerError;
    fn try_from(file: TimelineFile) -> Result<Self, Self::Error> {
        let mut observations = Vec::with_capacity(file.observations.len());
        for o in file.observations {
            let item_id = o.item_id.unwrap_or_else(|| file.item_id.clone());
            if item_id != file.item_id {
                return Err(TrackerError::ItemMismatch {
                    expected: file.item_id,
                    found: item_id,
                });
            }
            observations.push(ItemObservation {
                item_id,
                episode_index: o.episode,
                state: o.state,
                explained: o.explained,
                evidence: o.evidence,
                source: o.source,
                corrected_to: o.corrected_to,
            });
        }
        if observations.windows(2).any(|w| w[0].episode_index > w[1].episode_index) {
            return Err(TrackerError::Unsorted(file.item_id));
        }
        Ok(ItemTimeline {
            item_id: file.item_id,
            observations,
        })
    }
}

/// Raw state of one episode: its last observation, explained when any
/// observation in the episode carries an explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeState {
    pub episode_index: usize,
    pub state: ItemState,
    pub explained: bool,
}

impl ItemTimeline {
    pub fn new(item_id: impl Into<String>) -> Self {
        ItemTimeline {
            item_id: item_id.into(),
            observations: Vec::new(),
        }
    }

    pub fn observations(&self) -> &[ItemObservation] {
        &self.observations
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    /// Per-episode raw states in episode order.
    pub fn raw_episode_states(&self) -> Vec<EpisodeState> {
        let mut out: Vec<EpisodeState> = Vec::new();
        for o in &self.observations {
            match out.last_mut() {
                Some(last) if last.episode_index == o.episode_index => {
                    last.state = o.state;
                    last.explained |= o.explained;
                }
                _ => out.push(EpisodeState {
                    episode_index: o.episode_index,
                    state: o.state,
                    explained: o.explained,
                }),
            }
        }
        out
    }

    /// Corrected state at exactly episode `t`, if the item was observed there.
    pub fn resolved_state_at(&self, t: usize) -> Option<ItemState> {
        self.observations
            .iter()
            .rev()
            .find(|o| o.episode_index == t)
            .map(ItemObservation::resolved_state)
    }

    /// Corrected state carried into episode `t`: the latest resolved state
    /// observed at or before `t`.
    pub fn state_as_of(&self, t: usize) -> Option<ItemState> {
        self.observations
            .iter()
            .rev()
            .find(|o| o.episode_index <= t)
            .map(ItemObservation::resolved_state)
    }

    /// Episodes where the item was observed, ascending and deduplicated.
    pub fn observed_episodes(&self) -> Vec<usize> {
        let mut eps: Vec<usize> = self.observations.iter().map(|o| o.episode_index).collect();
        eps.dedup();
        eps
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContinuityError {
    pub item_id: String,
    pub prior_episode: usize,
    pub prior_state: ItemState,
    pub reappearance_episode: usize,
    pub claimed_state: ItemState,
    pub explanation_found: bool,
}

/// Returns a copy of `timeline` with `obs` inserted after every observation
/// of the same or an earlier episode.
pub fn record_observation(timeline: &ItemTimeline, obs: ItemObservation) -> Result<ItemTimeline, TrackerError> {
    if obs.item_id != timeline.item_id {
        return Err(TrackerError::ItemMismatch {
            expected: timeline.item_id.clone(),
            found: obs.item_id,
        });
    }
    let mut next = timeline.clone();
    let pos = next
        .observations
        .partition_point(|o| o.episode_index <= obs.episode_index);
    next.observations.insert(pos, obs);
    Ok(next)
}

/// Flags each unexplained return to `active` directly after a lost or
/// destroyed episode. Reads raw observations only.
pub fn detect_continuity_errors(timeline: &ItemTimeline) -> Vec<ContinuityError> {
    let states = timeline.raw_episode_states();
    states
        .windows(2)
        .filter(|w| w[0].state.is_terminal() && w[1].state == ItemState::Active && !w[1].explained)
        .map(|w| ContinuityError {
            item_id: timeline.item_id.clone(),
            prior_episode: w[0].episode_index,
            prior_state: w[0].state,
            reappearance_episode: w[1].episode_index,
            claimed_state: ItemState::Active,
            explanation_found: false,
        })
        .collect()
}

/// Resolves every flagged reappearance to the prior state, marking the raw
/// observations as suppressed. Errors for other items are ignored.
pub fn correct_timeline(timeline: &ItemTimeline, errors: &[ContinuityError]) -> ItemTimeline {
    let mut next = timeline.clone();
    for err in errors.iter().filter(|e| e.item_id == timeline.item_id) {
        for o in next
            .observations
            .iter_mut()
            .filter(|o| o.episode_index == err.reappearance_episode)
        {
            o.corrected_to = Some(err.prior_state);
        }
    }
    next
}

/// Tracking output for one story: corrected timelines (raw states retained)
/// and the detected errors. This is the item-state file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryTracking {
    pub story_id: String,
    pub timelines: Vec<ItemTimeline>,
    pub errors: Vec<ContinuityError>,
}

impl StoryTracking {
    /// Builds timelines from observations (in any order), detects and
    /// corrects. Items without observations get no timeline.
    pub fn from_observations(
        story_id: &str,
        observations: impl IntoIterator<Item = ItemObservation>,
    ) -> Result<Self, TrackerError> {
        let mut by_item: BTreeMap<String, ItemTimeline> = BTreeMap::new();
        for obs in observations {
            let tl = by_item
                .entry(obs.item_id.clone())
                .or_insert_with(|| ItemTimeline::new(obs.item_id.clone()));
            *tl = record_observation(tl, obs)?;
        }
        let mut errors = Vec::new();
        let mut timelines = Vec::with_capacity(by_item.len());
        for tl in by_item.into_values() {
            let found = detect_continuity_errors(&tl);
            timelines.push(correct_timeline(&tl, &found));
            errors.extend(found);
        }
        errors.sort_by(|a, b| (a.reappearance_episode, &a.item_id).cmp(&(b.reappearance_episode, &b.item_id)));
        Ok(StoryTracking {
            story_id: story_id.to_string(),
            timelines,
            errors,
        })
    }

    pub fn timeline(&self, item_id: &str) -> Option<&ItemTimeline> {
        self.timelines.iter().find(|t| t.item_id == item_id)
    }

    pub fn errors_at(&self, episode_index: usize) -> Vec<ContinuityError> {
        self.errors
            .iter()
            .filter(|e| e.reappearance_episode == episode_index)
            .cloned()
            .collect()
    }

    /// Corrected states of the items observed in episode `t`.
    pub fn states_at(&self, t: usize) -> Vec<(String, ItemState)> {
        self.timelines
            .iter()
            .filter_map(|tl| tl.resolved_state_at(t).map(|s| (tl.item_id.clone(), s)))
            .collect()
    }
}

/// Extracts statuses for every episode (in parallel) and tracks them.
pub fn track_story(story: &Story, gateway: &LlmGateway) -> Result<StoryTracking, TrackerError> {
    let per_episode: Vec<Vec<ItemObservation>> = story
        .episodes
        .par_iter()
        .map(|ep| extract_item_statuses(ep, &story.key_items, gateway))
        .collect::<Result<_, _>>()?;
    StoryTracking::from_observations(&story.story_id, per_episode.into_iter().flatten())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ItemState::*;

    fn timeline(states: &[(usize, ItemState)]) -> ItemTimeline {
        let mut tl = ItemTimeline::new("sword");
        for &(t, s) in states {
            tl = record_observation(&tl, ItemObservation::new("sword", t, s)).unwrap();
        }
        tl
    }

    #[test]
    fn record_into_empty() {
        let tl = record_observation(&ItemTimeline::new("sword"), ItemObservation::new("sword", 0, Active)).unwrap();
        assert_eq!(tl.len(), 1);
    }

    #[test]
    fn record_keeps_episode_order_and_input() {
        let base = timeline(&[(0, Active), (4, Lost)]);
        let next = record_observation(&base, ItemObservation::new("sword", 2, Active)).unwrap();
        let eps: Vec<_> = next.observations().iter().map(|o| o.episode_index).collect();
        assert_eq!(eps, vec![0, 2, 4]);
        assert_eq!(base.len(), 2);
    }

    #[test]
    fn record_rejects_other_item() {
        let err = record_observation(&ItemTimeline::new("sword"), ItemObservation::new("ring", 0, Active));
        assert!(matches!(err, Err(TrackerError::ItemMismatch { .. })));
    }

    #[test]
    fn reappearance_after_loss() {
        let errs = detect_continuity_errors(&timeline(&[(0, Active), (2, Lost), (5, Active)]));
        assert_eq!(
            errs,
            vec![ContinuityError {
                item_id: "sword".into(),
                prior_episode: 2,
                prior_state: Lost,
                reappearance_episode: 5,
                claimed_state: Active,
                explanation_found: false,
            }]
        );
    }

    #[test]
    fn no_terminal_state_no_errors() {
        assert!(detect_continuity_errors(&timeline(&[(0, Active), (1, Active), (2, Active)])).is_empty());
        assert!(detect_continuity_errors(&ItemTimeline::new("sword")).is_empty());
    }

    #[test]
    fn detection_keys_on_transition() {
        let errs = detect_continuity_errors(&timeline(&[(1, Lost), (3, Active), (4, Active)]));
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].reappearance_episode, 3);
    }

    #[test]
    fn explained_reappearance_is_legal() {
        let mut tl = timeline(&[(0, Active), (2, Destroyed)]);
        tl = record_observation(&tl, ItemObservation::new("sword", 4, Active).explained(true)).unwrap();
        assert!(detect_continuity_errors(&tl).is_empty());
    }

    #[test]
    fn terminal_to_terminal_is_legal() {
        assert!(detect_continuity_errors(&timeline(&[(0, Lost), (1, Destroyed), (2, Lost)])).is_empty());
    }

    #[test]
    fn last_observation_in_episode_wins() {
        let tl = timeline(&[(0, Lost), (1, Lost), (1, Active)]);
        assert_eq!(detect_continuity_errors(&tl).len(), 1);
        let tl = timeline(&[(0, Lost), (1, Active), (1, Lost)]);
        assert!(detect_continuity_errors(&tl).is_empty());
    }

    #[test]
    fn correction_keeps_prior_state() {
        let tl = timeline(&[(2, Lost), (5, Active)]);
        let errs = detect_continuity_errors(&tl);
        let fixed = correct_timeline(&tl, &errs);
        assert_eq!(fixed.resolved_state_at(5), Some(Lost));
        let raw = &fixed.observations()[1];
        assert_eq!(raw.state, Active);
        assert!(raw.is_suppressed());
        assert_eq!(correct_timeline(&tl, &[]), tl);
        assert_eq!(detect_continuity_errors(&fixed), errs);
        assert_eq!(correct_timeline(&fixed, &errs), fixed);
    }

    #[test]
    fn state_as_of_carries_forward() {
        let tl = timeline(&[(1, Active), (3, Lost)]);
        assert_eq!(tl.state_as_of(0), None);
        assert_eq!(tl.state_as_of(2), Some(Active));
        assert_eq!(tl.state_as_of(9), Some(Lost));
    }

    #[test]
    fn tracking_file_round_trip_and_schema() {
        let obs = vec![
            ItemObservation::new("sword", 0, Active),
            ItemObservation::new("sword", 2, Lost),
            ItemObservation::new("sword", 3, Active),
        ];
        let tracking = StoryTracking::from_observations("s1", obs).unwrap();
        let bytes = crate::canonical::to_vec(&tracking);
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let o = &v["timelines"][0]["observations"][2];
        assert_eq!(o["episode"], 3);
        assert_eq!(o["state"], "active");
        assert_eq!(o["explained"], false);
        assert!(o["evidence"].is_null());
        assert_eq!(o["corrected_to"], "lost");
        assert_eq!(v["errors"][0]["reappearance_episode"], 3);
        let back: StoryTracking = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, tracking);
    }

    #[test]
    fn unsorted_file_rejected() {
        let raw = r#"{"item_id":"x","observations":[{"episode":3,"state":"lost"},{"episode":1,"state":"active"}]}"#;
        assert!(serde_json::from_str::<ItemTimeline>(raw).is_err());
    }
}
