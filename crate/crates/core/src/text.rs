//! Tokenization, sentence splitting, alias matching and the committed
//! lexicons that drive the offline backend.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use serde::Deserialize;

use crate::story::{ItemState, KeyItem};

/// A word token with byte offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub lower: String,
    pub start: usize,
    pub end: usize,
}

/// Alphanumeric runs; everything else separates.
pub fn tokens(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            out.push(make_token(text, s, i));
        }
    }
    if let Some(s) = start {
        out.push(make_token(text, s, text.len()));
    }
    out
}

fn make_token(text: &str, start: usize, end: usize) -> Token<'_> {
    let t = &text[start..end];
    Token {
        text: t,
        lower: t.to_lowercase(),
        start,
        end,
    }
}

/// Case-folded words, in order.
pub fn words(text: &str) -> Vec<String> {
    tokens(text).into_iter().map(|t| t.lower).collect()
}

pub fn is_boundary_char(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n')
}

/// Sentence spans as byte ranges, whitespace-trimmed, empty spans dropped.
/// A sentence ends after a run of `.`, `!`, `?` (plus closing quotes or
/// brackets) or at a newline.
pub fn sentences(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !is_boundary_char(c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        if c != '\n' {
            while let Some(&(j, d)) = chars.peek() {
                if matches!(d, '.' | '!' | '?' | '"' | '\'' | ')' | '\u{201d}' | '\u{2019}') {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
        }
        push_trimmed(text, start, end, &mut spans);
        start = end;
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if !trimmed.is_empty() {
        spans.push((start + lead, start + lead + trimmed.len()));
    }
}

/// Finds the token index ranges where any alias of `item` occurs,
/// comparing case-folded token sequences.
pub fn alias_matches(toks: &[Token<'_>], item: &KeyItem) -> Vec<(usize, usize)> {
    let mut hits = Vec::new();
    for name in &item.names {
        let alias = words(name);
        if alias.is_empty() || alias.len() > toks.len() {
            continue;
        }
        for i in 0..=toks.len() - alias.len() {
            if toks[i..i + alias.len()].iter().zip(&alias).all(|(t, a)| &t.lower == a) {
                hits.push((i, i + alias.len()));
            }
        }
    }
    hits.sort_unstable();
    hits.dedup();
    hits
}

pub fn mentions(text: &str, item: &KeyItem) -> bool {
    !alias_matches(&tokens(text), item).is_empty()
}

/// What a verb says about the item it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateCue {
    Destroyed,
    Lost,
    /// Narrative reintroduction: active and explained.
    Restored,
    Active,
}

impl StateCue {
    pub fn state(self) -> ItemState {
        match self {
            StateCue::Destroyed => ItemState::Destroyed,
            StateCue::Lost => ItemState::Lost,
            StateCue::Restored | StateCue::Active => ItemState::Active,
        }
    }
}

#[derive(Deserialize)]
struct StateLexiconFile {
    destroyed: Vec<String>,
    lost: Vec<String>,
    restored: Vec<String>,
    active: Vec<String>,
}

#[derive(Deserialize)]
struct SentimentLexiconFile {
    positive: Vec<String>,
    negative: Vec<String>,
}

pub struct Lexicons {
    pub state: HashMap<String, StateCue>,
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
    pub relationship: BTreeSet<String>,
}

pub fn lexicons() -> &'static Lexicons {
    static LEXICONS: OnceLock<Lexicons> = OnceLock::new();
    LEXICONS.get_or_init(|| {
        let st: StateLexiconFile =
            serde_json::from_str(include_str!("../data/state_lexicon.json")).expect("state lexicon");
        let se: SentimentLexiconFile =
            serde_json::from_str(include_str!("../data/sentiment_lexicon.json")).expect("sentiment lexicon");
        let rel: Vec<String> =
            serde_json::from_str(include_str!("../data/relationship_lexicon.json")).expect("relationship lexicon");
        let mut state = HashMap::new();
        for (words, cue) in [
            (st.destroyed, StateCue::Destroyed),
            (st.lost, StateCue::Lost),
            (st.restored, StateCue::Restored),
            (st.active, StateCue::Active),
        ] {
            for w in words {
                state.insert(w, cue);
            }
        }
        Lexicons {
            state,
            positive: se.positive.into_iter().collect(),
            negative: se.negative.into_iter().collect(),
            relationship: rel.into_iter().collect(),
        }
    })
}

/// The last state cue among `toks`, if any.
pub fn last_state_cue(toks: &[Token<'_>]) -> Option<StateCue> {
    let lex = lexicons();
    toks.iter().rev().find_map(|t| lex.state.get(&t.lower).copied())
}

pub fn has_restoration_cue(toks: &[Token<'_>]) -> bool {
    let lex = lexicons();
    toks.iter()
        .any(|t| lex.state.get(&t.lower) == Some(&StateCue::Restored))
}

/// (positive, negative) lexicon hit counts.
pub fn sentiment_hits(text: &str) -> (usize, usize) {
    let lex = lexicons();
    let mut pos = 0;
    let mut neg = 0;
    for w in words(text) {
        if lex.positive.contains(&w) {
            pos += 1;
        }
        if lex.negative.contains(&w) {
            neg += 1;
        }
    }
    (pos, neg)
}

/// Maps lexicon hits to [0, 1]; 0.5 when no hits.
pub fn lexicon_sentiment(text: &str) -> f64 {
    let (pos, neg) = sentiment_hits(text);
    let balance = (pos as f64 - neg as f64) / (pos as f64 + neg as f64 + 1.0);
    0.5 + 0.5 * balance
}

const NOT_NAMES: &[&str] = &[
    "The", "A", "An", "It", "He", "She", "They", "We", "I", "You", "His", "Her", "Their", "Its", "This", "That",
    "These", "Those", "Then", "When", "After", "Before", "But", "And", "Or", "So", "In", "On", "At", "By", "With",
    "For", "From", "Of", "To", "As", "If", "No", "Yes", "There", "Here", "Later", "Now", "Soon", "Once", "While",
    "Everyone", "Nobody", "Someone", "Night", "Morning", "Evening", "Episode", "Chapter",
];

pub fn looks_like_name(tok: &Token<'_>) -> bool {
    let mut chars = tok.text.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    first_upper && tok.text.chars().all(char::is_alphabetic) && !NOT_NAMES.contains(&tok.text)
}

/// Verb-like token: lower-case and either a known state verb or ending in `ed`.
pub fn looks_like_action_verb(tok: &Token<'_>) -> bool {
    let lowercase = tok.text.chars().next().is_some_and(char::is_lowercase);
    lowercase && (tok.lower.ends_with("ed") && tok.lower.len() > 3 || lexicons().state.contains_key(&tok.lower))
}

/// `Name verb` pairs inside a sentence, as (name token index, verb token index).
pub fn name_verb_pairs(toks: &[Token<'_>]) -> Vec<(usize, usize)> {
    (0..toks.len().saturating_sub(1))
        .filter(|&i| looks_like_name(&toks[i]) && looks_like_action_verb(&toks[i + 1]))
        .map(|i| (i, i + 1))
        .collect()
}

/// First sentence of `text`, or the whole trimmed text.
pub fn first_sentence(text: &str) -> &str {
    match sentences(text).first() {
        Some(&(s, e)) => &text[s..e],
        None => text.trim(),
    }
}
