//! Project directory layout, locking and artifact I/O.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use score_core::canonical;
use score_core::gateway::{LlmGateway, PromptSet};
use score_core::pipeline::ScoreConfig;
use score_core::story::{serialize_story, Corpus, Story};

use crate::error::{CliError, Result};

pub const SUBDIRS: [&str; 7] = ["stories", "summaries", "states", "index", "cache", "reports", "prompts"];
const LOCK_FILE: &str = ".score.lock";

pub struct Project {
    root: PathBuf,
}

/// Held for the duration of a command; removes the lock file on drop.
pub struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

impl Project {
    /// Opens `root`, creating it and the standard subdirectories as needed.
    pub fn open(root: &Path) -> Result<Self> {
        for sub in SUBDIRS {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        Ok(Project {
            root: root.to_path_buf(),
        })
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.root.join(sub)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn lock(&self) -> Result<LockGuard> {
        let path = self.root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::validation(format!(
                "project is locked by another invocation ({}); remove it if stale",
                path.display()
            ))),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }

    /// Reads `config.json`, writing the default configuration when absent.
    pub fn config(&self) -> Result<ScoreConfig> {
        let path = self.file("config.json");
        match read_json::<ScoreConfig>(&path)? {
            Some(c) => Ok(c),
            None => {
                let c = ScoreConfig::default();
                write_json(&path, &c)?;
                Ok(c)
            }
        }
    }

    pub fn gateway(&self, config: &ScoreConfig) -> Result<LlmGateway> {
        let prompts = PromptSet::load_dir(&self.dir("prompts"))?;
        Ok(LlmGateway::new(config.gateway.clone(), Some(&self.dir("cache")))?.with_prompts(prompts))
    }

    pub fn corpus(&self) -> Result<Corpus> {
        let corpus = Corpus::load_dir(&self.dir("stories"))?;
        if corpus.stories.is_empty() {
            return Err(CliError::validation("no stories in project; run `score ingest` first"));
        }
        Ok(corpus)
    }

    pub fn story_path(&self, story_id: &str) -> Result<PathBuf> {
        Ok(self.dir("stories").join(artifact_name(story_id)?))
    }

    /// Writes a story canonically. Returns whether the file changed.
    pub fn write_story(&self, story: &Story) -> Result<bool> {
        let path = self.story_path(&story.story_id)?;
        canonical::write_if_changed(&path, &serialize_story(story)).map_err(|e| CliError::io(&path, e))
    }

    pub fn artifact(&self, sub: &str, story_id: &str) -> Result<PathBuf> {
        Ok(self.dir(sub).join(artifact_name(story_id)?))
    }
}

/// File name for a per-story artifact. Ids that could escape the project
/// directory are rejected.
pub fn artifact_name(story_id: &str) -> Result<String> {
    let bad = story_id.is_empty()
        || story_id.starts_with('.')
        || story_id.chars().any(|c| matches!(c, '/' | '\\' | ':' | '\0'));
    if bad {
        return Err(CliError::validation(format!(
            "story id `{story_id}` cannot be used as a file name"
        )));
    }
    Ok(format!("{story_id}.json"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(CliError::io(path, e)),
    };
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Canonical JSON with a trailing newline; untouched when unchanged.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<bool> {
    let mut bytes = canonical::to_vec(value);
    bytes.push(b'\n');
    canonical::write_if_changed(path, &bytes).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_creates_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("p");
        Project::open(&root).unwrap();
        for sub in SUBDIRS {
            assert!(root.join(sub).is_dir(), "{sub}");
        }
    }

    #[test]
    fn second_lock_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let p = Project::open(tmp.path()).unwrap();
        let g = p.lock().unwrap();
        assert!(p.lock().is_err());
        drop(g);
        assert!(p.lock().is_ok());
    }

    #[test]
    fn escaping_ids_rejected() {
        assert!(artifact_name("../x").is_err());
        assert!(artifact_name(".hidden").is_err());
        assert_eq!(artifact_name("fuzz-7-001").unwrap(), "fuzz-7-001.json");
    }

    #[test]
    fn write_json_is_idempotent() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("a.json");
        assert!(write_json(&path, &vec![1, 2]).unwrap());
        assert!(!write_json(&path, &vec![1, 2]).unwrap());
    }
}
