//! Story data model and its JSON persistence format.
//!
//! A story file looks like
//!
//! ```json
//! { "story_id": "s1", "title": "...", "genre": "fantasy",
//!   "key_items": [{"item_id": "sword", "names": ["sword", "blade"]}],
//!   "episodes": [{"index": 0, "text": "..."}] }
//! ```
//!
//! Episodes must be listed in order with indices `0..n`. Token estimates are
//! derived from the text and are not part of the file.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoryError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl StoryError {
    fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        StoryError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Genre {
    ScienceFiction,
    Drama,
    Fantasy,
    Comedy,
    Other,
}

/// State of a key item at one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemState {
    Active,
    Lost,
    Destroyed,
}

impl ItemState {
    pub const ALL: [ItemState; 3] = [ItemState::Active, ItemState::Lost, ItemState::Destroyed];

    /// Lost or destroyed.
    pub fn is_terminal(self) -> bool {
        !matches!(self, ItemState::Active)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ItemState::Active => "active",
            ItemState::Lost => "lost",
            ItemState::Destroyed => "destroyed",
        }
    }

    pub fn parse(s: &str) -> Option<ItemState> {
        match s.trim().to_ascii_lowercase().as_str() {
            "active" => Some(ItemState::Active),
            "lost" => Some(ItemState::Lost),
            "destroyed" => Some(ItemState::Destroyed),
            _ => None,
        }
    }
}

impl fmt::Display for ItemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyItem {
    pub item_id: String,
    pub names: Vec<String>,
}

impl KeyItem {
    pub fn new<S: Into<String>>(item_id: impl Into<String>, names: impl IntoIterator<Item = S>) -> Self {
        KeyItem {
            item_id: item_id.into(),
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    /// Case-folded aliases.
    pub fn folded_names(&self) -> Vec<String> {
        self.names.iter().map(|n| n.to_lowercase()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub index: usize,
    pub text: String,
    pub token_estimate: usize,
}

impl Episode {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        let token_estimate = estimate_tokens(&text);
        Episode {
            index,
            text,
            token_estimate,
        }
    }
}

/// ceil(words * 4 / 3), with words split on whitespace.
pub fn estimate_tokens(text: &str) -> usize {
    let words = text.split_whitespace().count();
    (words * 4).div_ceil(3)
}

/// An action taken by a character in one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterAction {
    pub character: String,
    pub episode_index: usize,
    pub description: String,
}

/// An interaction with a key item in one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemInteraction {
    pub item_id: String,
    pub episode_index: usize,
    #[serde(default)]
    pub actor: Option<String>,
    pub description: String,
    #[serde(default)]
    pub implied_state: Option<ItemState>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Story {
    pub story_id: String,
    pub title: String,
    pub genre: Genre,
    pub key_items: Vec<KeyItem>,
    pub episodes: Vec<Episode>,
}

impl Story {
    pub fn item(&self, item_id: &str) -> Option<&KeyItem> {
        self.key_items.iter().find(|i| i.item_id == item_id)
    }

    pub fn episode(&self, index: usize) -> Option<&Episode> {
        self.episodes.get(index)
    }

    /// Checks every invariant of the model.
    pub fn validate(&self) -> Result<(), StoryError> {
        if self.story_id.trim().is_empty() {
            return Err(StoryError::validation("story_id", "must not be empty"));
        }
        if self.episodes.is_empty() {
            return Err(StoryError::validation("episodes", "episode list is empty"));
        }
        for (pos, ep) in self.episodes.iter().enumerate() {
            if ep.index != pos {
                return Err(StoryError::validation(
                    format!("episodes[{pos}].index"),
                    format!("non-contiguous episode index: expected {pos}, found {}", ep.index),
                ));
            }
            if ep.text.trim().is_empty() {
                return Err(StoryError::validation(
                    format!("episodes[{pos}].text"),
                    "episode text is empty",
                ));
            }
        }
        let mut ids = BTreeSet::new();
        for (pos, item) in self.key_items.iter().enumerate() {
            if item.item_id.trim().is_empty() {
                return Err(StoryError::validation(
                    format!("key_items[{pos}].item_id"),
                    "must not be empty",
                ));
            }
            if !ids.insert(item.item_id.as_str()) {
                return Err(StoryError::validation(
                    format!("key_items[{pos}].item_id"),
                    format!("duplicate item id `{}`", item.item_id),
                ));
            }
            if item.names.is_empty() {
                return Err(StoryError::validation(
                    format!("key_items[{pos}].names"),
                    "at least one name is required",
                ));
            }
            let mut seen = BTreeSet::new();
            for (npos, name) in item.names.iter().enumerate() {
                if name.trim().is_empty() {
                    return Err(StoryError::validation(
                        format!("key_items[{pos}].names[{npos}]"),
                        "name is empty",
                    ));
                }
                if !seen.insert(name.to_lowercase()) {
                    return Err(StoryError::validation(
                        format!("key_items[{pos}].names[{npos}]"),
                        format!("duplicate alias `{name}` after case-folding"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct StoryFile {
    story_id: String,
    title: String,
    genre: Genre,
    #[serde(default)]
    key_items: Vec<KeyItem>,
    episodes: Vec<EpisodeFile>,
}

#[derive(Serialize, Deserialize)]
struct EpisodeFile {
    index: usize,
    text: String,
}

/// Parses and validates a story document.
pub fn parse_story(bytes: &[u8]) -> Result<Story, StoryError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let file: StoryFile = match serde_path_to_error::deserialize(de) {
        Ok(f) => f,
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Data => StoryError::Validation {
                    field: path,
                    message: inner.to_string(),
                },
                _ => StoryError::Parse {
                    offset: byte_offset(bytes, inner.line(), inner.column()),
                    message: inner.to_string(),
                },
            });
        }
    };
    let story = Story {
        story_id: file.story_id,
        title: file.title,
        genre: file.genre,
        key_items: file.key_items,
        episodes: file
            .episodes
            .into_iter()
            .map(|e| Episode::new(e.index, e.text))
            .collect(),
    };
    story.validate()?;
    Ok(story)
}

/// Canonical JSON encoding: sorted keys, two-space indent, no trailing newline.
pub fn serialize_story(story: &Story) -> Vec<u8> {
    let file = StoryFile {
        story_id: story.story_id.clone(),
        title: story.title.clone(),
        genre: story.genre,
        key_items: story.key_items.clone(),
        episodes: story
            .episodes
            .iter()
            .map(|e| EpisodeFile {
                index: e.index,
                text: e.text.clone(),
            })
            .collect(),
    };
    canonical::to_vec(&file)
}

// serde_json reports 1-based line and column; column counts bytes.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for _ in 1..line {
        match bytes[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => return bytes.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(bytes.len())
}

/// A set of stories loaded from one directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub stories: Vec<Story>,
}

#[derive(Deserialize)]
struct Manifest {
    files: Vec<String>,
}

impl Corpus {
    pub fn new(stories: Vec<Story>) -> Result<Self, StoryError> {
        let mut ids = BTreeSet::new();
        for (pos, s) in stories.iter().enumerate() {
            if !ids.insert(s.story_id.as_str()) {
                return Err(StoryError::validation(
                    format!("stories[{pos}].story_id"),
                    format!("duplicate story id `{}` in corpus", s.story_id),
                ));
            }
        }
        Ok(Corpus { stories })
    }

    pub fn story(&self, story_id: &str) -> Option<&Story> {
        self.stories.iter().find(|s| s.story_id == story_id)
    }

    /// Loads a directory of story files. When `corpus.json` exists it lists
    /// the files to read (`{"files": [...]}`); otherwise every `*.json` file
    /// is read in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, StoryError> {
        let io_err = |path: &Path, e: std::io::Error| StoryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let manifest_path = dir.join("corpus.json");
        let files: Vec<std::path::PathBuf> = if manifest_path.exists() {
            let raw = std::fs::read(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
            let manifest: Manifest = serde_json::from_slice(&raw).map_err(|e| StoryError::Validation {
                field: "corpus.json".into(),
                message: e.to_string(),
            })?;
            manifest.files.iter().map(|f| dir.join(f)).collect()
        } else {
            let mut files = Vec::new();
            let rd = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
            for entry in rd {
                let path = entry.map_err(|e| io_err(dir, e))?.path();
                if path.extension().is_some_and(|x| x == "json") {
                    files.push(path);
                }
            }
            files.sort();
            files
        };
        let mut stories = Vec::with_capacity(files.len());
        for path in files {
            let raw = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            let story = parse_story(&raw).map_err(|e| match e {
                StoryError::Validation { field, message } => StoryError::Validation {
                    field: format!("{}: {field}", path.display()),
                    message,
                },
                StoryError::Parse { offset, message } => StoryError::Parse {
                    offset,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })?;
            stories.push(story);
        }
        Corpus::new(stories)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(episodes: &str, items: &str) -> String {
        format!(r#"{{"story_id":"s1","title":"T","genre":"fantasy","key_items":{items},"episodes":{episodes}}}"#)
    }

    #[test]
    fn parses_three_episodes() {
        let raw = doc(
            r#"[{"index":0,"text":"A."},{"index":1,"text":"B c."},{"index":2,"text":"D."}]"#,
            r#"[{"item_id":"sword","names":["sword"]}]"#,
        );
        let story = parse_story(raw.as_bytes()).unwrap();
        let idx: Vec<_> = story.episodes.iter().map(|e| e.index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(story.genre, Genre::Fantasy);
    }

    #[test]
    fn rejects_gap_in_indices() {
        let raw = doc(r#"[{"index":0,"text":"A."},{"index":2,"text":"B."}]"#, "[]");
        let err = parse_story(raw.as_bytes()).unwrap_err();
        match err {
            StoryError::Validation { field, message } => {
                assert_eq!(field, "episodes[1].index");
                assert!(message.contains("non-contiguous episode index"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_case_folded_duplicate_alias() {
        let raw = doc(
            r#"[{"index":0,"text":"A."}]"#,
            r#"[{"item_id":"sword","names":["sword","Sword"]}]"#,
        );
        let err = parse_story(raw.as_bytes()).unwrap_err();
        assert!(matches!(err, StoryError::Validation { ref field, .. } if field == "key_items[0].names[1]"));
    }

    #[test]
    fn rejects_empty_episode_list_and_blank_text() {
        let err = parse_story(doc("[]", "[]").as_bytes()).unwrap_err();
        assert!(matches!(err, StoryError::Validation { ref field, .. } if field == "episodes"));
        let err = parse_story(doc(r#"[{"index":0,"text":"  \n"}]"#, "[]").as_bytes()).unwrap_err();
        assert!(matches!(err, StoryError::Validation { ref field, .. } if field == "episodes[0].text"));
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let raw = b"{\"story_id\": \"s1\",\n  \"title\": }";
        match parse_story(raw).unwrap_err() {
            StoryError::Parse { offset, .. } => assert_eq!(raw[offset], b'}'),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_violation_names_field() {
        let raw = doc(r#"[{"index":0,"text":5}]"#, "[]");
        match parse_story(raw.as_bytes()).unwrap_err() {
            StoryError::Validation { field, .. } => assert_eq!(field, "episodes[0].text"),
            other => panic!("unexpected {other:?}"),
        }
        let raw = r#"{"story_id":"s","title":"t","genre":"horror","episodes":[{"index":0,"text":"x"}]}"#;
        match parse_story(raw.as_bytes()).unwrap_err() {
            StoryError::Validation { field, .. } => assert_eq!(field, "genre"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn token_estimate_rounds_up() {
        assert_eq!(estimate_tokens("one two three"), 4);
        assert_eq!(estimate_tokens("one"), 2);
        assert_eq!(estimate_tokens("a b c d e f"), 8);
        assert_eq!(Episode::new(0, "x").token_estimate, 2);
    }

    #[test]
    fn serialization_is_canonical() {
        let raw = doc(r#"[{"index":0,"text":"A."}]"#, r#"[{"names":["x"],"item_id":"x"}]"#);
        let story = parse_story(raw.as_bytes()).unwrap();
        let a = serialize_story(&story);
        let b = serialize_story(&story.clone());
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let e = text.find("\"episodes\"").unwrap();
        let g = text.find("\"genre\"").unwrap();
        let k = text.find("\"key_items\"").unwrap();
        assert!(e < g && g < k);
        assert!(!text.ends_with(char::is_whitespace));
        assert_eq!(parse_story(text.as_bytes()).unwrap(), story);
    }

    #[test]
    fn duplicate_story_ids_rejected_in_corpus() {
        let s = parse_story(doc(r#"[{"index":0,"text":"A."}]"#, "[]").as_bytes()).unwrap();
        assert!(Corpus::new(vec![s.clone(), s]).is_err());
    }
}
