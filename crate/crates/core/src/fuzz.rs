//! Synthetic corpora with known item-state trajectories and planted
//! continuity violations.
//!
//! Stories are assembled from sentence templates whose verbs come from the
//! state lexicon, so the offline extractor reads them exactly. Each item is
//! introduced, optionally mentioned while active, and may meet a terminal
//! event. A violating item then reappears as active; with probability
//! `explained_rate` a restoration sentence precedes the reappearance, which
//! makes it legal. Items are never mentioned after reappearing.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{GoldItemState, GoldQuestion};
use crate::story::{Corpus, Episode, Genre, ItemState, KeyItem, Story};
use crate::tracker::{record_observation, ContinuityError, ItemObservation, ItemTimeline, StoryTracking};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid fuzz spec: {0}")]
pub struct FuzzSpecError(String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzSpec {
    pub seed: u64,
    pub n_stories: usize,
    /// Inclusive range.
    pub episodes_per_story: (usize, usize),
    /// Inclusive range.
    pub items_per_story: (usize, usize),
    pub violation_rate: f64,
    pub explained_rate: f64,
}

impl FuzzSpec {
    pub fn new(seed: u64, n_stories: usize, violation_rate: f64) -> Self {
        FuzzSpec {
            seed,
            n_stories,
            episodes_per_story: (10, 15),
            items_per_story: (2, 4),
            violation_rate,
            explained_rate: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), FuzzSpecError> {
        let (elo, ehi) = self.episodes_per_story;
        let (ilo, ihi) = self.items_per_story;
        if elo > ehi || ilo > ihi {
            return Err(FuzzSpecError("ranges must be non-empty".into()));
        }
        if elo < 4 {
            return Err(FuzzSpecError("stories need at least 4 episodes".into()));
        }
        if ilo == 0 || ihi > ITEMS.len() {
            return Err(FuzzSpecError(format!(
                "items per story must lie in 1..={}",
                ITEMS.len()
            )));
        }
        for (name, r) in [
            ("violation_rate", self.violation_rate),
            ("explained_rate", self.explained_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(FuzzSpecError(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryTruth {
    pub story_id: String,
    /// True timelines; unexplained reappearances carry their corrected state.
    pub timelines: Vec<ItemTimeline>,
    pub planted_errors: Vec<ContinuityError>,
    pub questions: Vec<GoldQuestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: FuzzSpec,
    pub stories: Vec<StoryTruth>,
}

impl GroundTruth {
    pub fn planted(&self) -> Vec<(String, ContinuityError)> {
        self.stories
            .iter()
            .flat_map(|s| s.planted_errors.iter().map(|e| (s.story_id.clone(), e.clone())))
            .collect()
    }

    /// Corrected gold state of every item at every episode that mentions it.
    pub fn gold_states(&self) -> Vec<GoldItemState> {
        let mut out = Vec::new();
        for s in &self.stories {
            for tl in &s.timelines {
                for o in tl.observations() {
                    out.push(GoldItemState {
                        story_id: s.story_id.clone(),
                        item_id: tl.item_id.clone(),
                        episode: o.episode_index,
                        state: o.resolved_state(),
                    });
                }
            }
        }
        out
    }

    pub fn questions(&self) -> Vec<GoldQuestion> {
        self.stories.iter().flat_map(|s| s.questions.clone()).collect()
    }
}

const CHARACTERS: &[&str] = &[
    "Mara", "Tobin", "Sela", "Orrin", "Kael", "Ilsa", "Bram", "Nessa", "Corin", "Yara",
];

const ITEMS: &[(&str, &str)] = &[
    ("sword", "sword"),
    ("compass", "silver compass"),
    ("lantern", "brass lantern"),
    ("amulet", "jade amulet"),
    ("map", "old map"),
    ("key", "iron key"),
    ("ring", "signet ring"),
    ("dagger", "dagger"),
    ("horn", "hunting horn"),
    ("ledger", "ledger"),
    ("crown", "crown"),
    ("flute", "bone flute"),
];

const FILLERS: &[&str] = &[
    "The road wound past quiet farms.",
    "{c} talked with a ferryman about the tides.",
    "Clouds moved slowly over the hills.",
    "{c} counted coins at the inn.",
    "A cart creaked through the square.",
    "{c} and {d} shared bread at noon.",
    "The market filled with traders and goats.",
    "{c} studied the stars from the tower.",
    "Bells rang across the valley at dusk.",
    "{d} mapped a path toward the northern pass.",
];

const ACTIVE: &[&str] = &[
    "{c} carried the {i} along the road.",
    "{c} held the {i} up to the lamp.",
    "{c} examined the {i} by the window.",
    "{c} polished the {i} beside the hearth.",
];

const DESTROY: &[&str] = &[
    "The {i} shattered against the rocks.",
    "{c} smashed the {i} with a hammer.",
    "The {i} burned in the stable fire.",
];

const LOSE: &[&str] = &[
    "{c} dropped the {i} into the river.",
    "The {i} vanished from the camp overnight.",
    "{c} misplaced the {i} somewhere in the marsh.",
];

const RESTORE_DESTROYED: &[&str] = &[
    "A smith repaired the {i} at the forge.",
    "{c} rebuilt the {i} piece by piece.",
];

const RESTORE_LOST: &[&str] = &[
    "{c} recovered the {i} from a trader.",
    "{d} retrieved the {i} from the riverbank.",
];

const REAPPEAR: &[&str] = &["{c} raised the {i} high.", "{c} clutched the {i} at the gate."];

fn fill(rng: &mut ChaCha8Rng, templates: &[&str], cast: &[&str], item: &str) -> String {
    let t = templates.choose(rng).expect("non-empty templates");
    let c = cast.choose(rng).expect("cast");
    let d = cast.iter().find(|x| *x != c).unwrap_or(c);
    t.replace("{c}", c).replace("{d}", d).replace("{i}", item)
}

struct Planned {
    episode: usize,
    state: ItemState,
    explained: bool,
    corrected_to: Option<ItemState>,
    sentences: Vec<String>,
}

/// One synthetic story and its truth. Pure function of `(spec, k)`.
fn generate_story(spec: &FuzzSpec, k: usize) -> (Story, StoryTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(k as u64);
    let story_id = format!("fuzz-{}-{k:03}", spec.seed);
    let n = rng.gen_range(spec.episodes_per_story.0..=spec.episodes_per_story.1);
    let m = rng.gen_range(spec.items_per_story.0..=spec.items_per_story.1);
    let items: Vec<(&str, &str)> = ITEMS.choose_multiple(&mut rng, m).copied().collect();
    let cast: Vec<&str> = CHARACTERS.choose_multiple(&mut rng, 3).copied().collect();

    let mut per_episode: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut timelines = Vec::new();
    let mut planted_errors = Vec::new();
    let mut questions = Vec::new();

    for &(item_id, name) in &items {
        let a = rng.gen_range(0..(n / 3).max(1));
        let violation = rng.gen_bool(spec.violation_rate);
        let mut plan: Vec<Planned> = Vec::new();
        let active = |rng: &mut ChaCha8Rng, t: usize| Planned {
            episode: t,
            state: ItemState::Active,
            explained: false,
            corrected_to: None,
            sentences: vec![fill(rng, ACTIVE, &cast, name)],
        };
        plan.push(active(&mut rng, a));

        let terminal_at = if violation {
            Some(rng.gen_range(a + 1..=n - 2))
        } else if rng.gen_bool(0.5) {
            Some(rng.gen_range(a + 1..=n - 1))
        } else {
            None
        };
        let last_active = terminal_at.unwrap_or(n);
        for t in a + 1..last_active {
            if rng.gen_bool(0.4) {
                plan.push(active(&mut rng, t));
            }
        }
        if let Some(b) = terminal_at {
            let destroyed = rng.gen_bool(0.5);
            let (state, templates) = if destroyed {
                (ItemState::Destroyed, DESTROY)
            } else {
                (ItemState::Lost, LOSE)
            };
            plan.push(Planned {
                episode: b,
                state,
                explained: false,
                corrected_to: None,
                sentences: vec![fill(&mut rng, templates, &cast, name)],
            });
            if questions.is_empty() {
                questions.push(GoldQuestion {
                    story_id: Some(story_id.clone()),
                    question: format!("When was the {name} {}?", state.as_str()),
                    expected: Some(format!("episode {b}")),
                });
            }
            if violation {
                let c = rng.gen_range(b + 1..=n - 1);
                let explained = rng.gen_bool(spec.explained_rate);
                let mut sentences = Vec::new();
                if explained {
                    let restore = if destroyed { RESTORE_DESTROYED } else { RESTORE_LOST };
                    sentences.push(fill(&mut rng, restore, &cast, name));
                }
                sentences.push(fill(&mut rng, REAPPEAR, &cast, name));
                plan.push(Planned {
                    episode: c,
                    state: ItemState::Active,
                    explained,
                    corrected_to: (!explained).then_some(state),
                    sentences,
                });
                if !explained {
                    planted_errors.push(ContinuityError {
                        item_id: item_id.to_string(),
                        prior_episode: b,
                        prior_state: state,
                        reappearance_episode: c,
                        claimed_state: ItemState::Active,
                        explanation_found: false,
                    });
                }
            }
        }

        let mut tl = ItemTimeline::new(item_id);
        for p in plan {
            per_episode[p.episode].extend(p.sentences);
            let mut obs = ItemObservation::new(item_id, p.episode, p.state).explained(p.explained);
            obs.corrected_to = p.corrected_to;
            tl = record_observation(&tl, obs).expect("same item");
        }
        timelines.push(tl);
    }

    let episodes = per_episode
        .into_iter()
        .enumerate()
        .map(|(t, item_sentences)| {
            let mut parts = vec![fill(&mut rng, FILLERS, &cast, "")];
            parts.extend(item_sentences);
            for _ in 0..rng.gen_range(1..=2) {
                parts.push(fill(&mut rng, FILLERS, &cast, ""));
            }
            Episode::new(t, parts.join(" "))
        })
        .collect();
    planted_errors.sort_by(|x, y| (x.reappearance_episode, &x.item_id).cmp(&(y.reappearance_episode, &y.item_id)));
    let story = Story {
        story_id: story_id.clone(),
        title: format!("Synthetic story {k}"),
        genre: Genre::Other,
        key_items: items.iter().map(|&(id, name)| KeyItem::new(id, [name])).collect(),
        episodes,
    };
    let truth = StoryTruth {
        story_id,
        timelines,
        planted_errors,
        questions,
    };
    (story, truth)
}

pub fn generate_corpus(spec: &FuzzSpec) -> Result<(Corpus, GroundTruth), FuzzSpecError> {
    spec.validate()?;
    let (stories, truths): (Vec<Story>, Vec<StoryTruth>) = (0..spec.n_stories)
        .into_par_iter()
        .map(|k| generate_story(spec, k))
        .unzip();
    let corpus = Corpus::new(stories).map_err(|e| FuzzSpecError(e.to_string()))?;
    Ok((
        corpus,
        GroundTruth {
            spec: spec.clone(),
            stories: truths,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Nothing was reported or nothing was planted; the ratio conventions
    /// (precision 1 with no reports, recall 1 with nothing planted) apply.
    pub degenerate: bool,
}

/// Matches reported errors to planted ones on (story, item, reappearance).
pub fn score_detection(reported: &[StoryTracking], truth: &GroundTruth) -> DetectionScore {
    use std::collections::BTreeSet;
    let key = |s: &str, e: &ContinuityError| (s.to_string(), e.item_id.clone(), e.reappearance_episode);
    let found: BTreeSet<_> = reported
        .iter()
        .flat_map(|t| t.errors.iter().map(|e| key(&t.story_id, e)))
        .collect();
    let planted: BTreeSet<_> = truth.planted().iter().map(|(s, e)| key(s, e)).collect();
    let tp = found.intersection(&planted).count();
    let fp = found.len() - tp;
    let fn_ = planted.len() - tp;
    let precision = if found.is_empty() {
        1.0
    } else {
        tp as f64 / found.len() as f64
    };
    let recall = if planted.is_empty() {
        1.0
    } else {
        tp as f64 / planted.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionScore {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        degenerate: found.is_empty() || planted.is_empty(),
    }
}
