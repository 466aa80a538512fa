//! Sliding-window segmentation of episode text.
//!
//! Sizes are measured in characters. Each chunk ends at the last sentence
//! boundary (`.`, `!`, `?` or newline) found in the final 20% of the window,
//! or at the window edge when there is none. The next chunk starts exactly
//! `overlap_chars` characters before the previous end.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::story::Episode;
use crate::text::is_boundary_char;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("overlap_chars ({overlap}) must be smaller than max_chars ({max})")]
    OverlapTooLarge { max: usize, overlap: usize },
    #[error("max_chars must be positive")]
    ZeroMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkerConfig {
    pub max_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        ChunkerConfig {
            max_chars: 1200,
            overlap_chars: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub story_id: String,
    pub episode_index: usize,
    pub seq: usize,
    pub text: String,
    /// Byte range into the episode text.
    pub byte_range: (usize, usize),
}

impl Chunk {
    pub fn entry_id(&self) -> String {
        format!("{}#{}/{}", self.story_id, self.episode_index, self.seq)
    }
}

pub fn segment(story_id: &str, episode: &Episode, config: ChunkerConfig) -> Result<Vec<Chunk>, ChunkError> {
    let ChunkerConfig {
        max_chars: max,
        overlap_chars: overlap,
    } = config;
    if max == 0 {
        return Err(ChunkError::ZeroMax);
    }
    if overlap >= max {
        return Err(ChunkError::OverlapTooLarge { max, overlap });
    }
    let text = episode.text.as_str();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let byte_at = |i: usize| if i == n { text.len() } else { chars[i].0 };
    let window = max / 5;

    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = if n - start <= max {
            n
        } else {
            let hard = start + max;
            // the split must leave room for progress after stepping back by `overlap`
            let lo = (hard - window).max(start + overlap + 1);
            (lo..=hard)
                .rev()
                .find(|&e| is_boundary_char(chars[e - 1].1))
                .unwrap_or(hard)
        };
        let (b0, b1) = (byte_at(start), byte_at(end));
        chunks.push(Chunk {
            story_id: story_id.to_string(),
            episode_index: episode.index,
            seq: chunks.len(),
            text: text[b0..b1].to_string(),
            byte_range: (b0, b1),
        });
        if end == n {
            break;
        }
        start = end - overlap;
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(max: usize, overlap: usize) -> ChunkerConfig {
        ChunkerConfig {
            max_chars: max,
            overlap_chars: overlap,
        }
    }

    /// Concatenates chunks with the overlapping prefix of each later chunk removed.
    fn reassemble(chunks: &[Chunk], overlap: usize) -> String {
        let mut out = String::new();
        for (i, c) in chunks.iter().enumerate() {
            if i == 0 {
                out.push_str(&c.text);
            } else {
                out.extend(c.text.chars().skip(overlap));
            }
        }
        out
    }

    #[test]
    fn short_text_is_one_chunk() {
        let ep = Episode::new(0, "A short episode.");
        let chunks = segment("s", &ep, ChunkerConfig::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, ep.text);
        assert_eq!(chunks[0].byte_range, (0, ep.text.len()));
    }

    #[test]
    fn overlap_must_be_smaller() {
        let ep = Episode::new(0, "text");
        assert_eq!(
            segment("s", &ep, cfg(10, 10)),
            Err(ChunkError::OverlapTooLarge { max: 10, overlap: 10 })
        );
    }

    #[test]
    fn prefers_sentence_boundary() {
        let ep = Episode::new(0, "aaaaaaa. bbbbbbbbbbbbbbbbbbbb");
        let chunks = segment("s", &ep, cfg(10, 2)).unwrap();
        assert_eq!(chunks[0].text, "aaaaaaa.");
        assert_eq!(reassemble(&chunks, 2), ep.text);
    }

    #[test]
    fn hard_split_without_boundary() {
        let ep = Episode::new(0, "abcdefghijklmnopqrstuvwxyz");
        let chunks = segment("s", &ep, cfg(10, 3)).unwrap();
        assert_eq!(chunks[0].text, "abcdefghij");
        assert_eq!(chunks[1].text, "hijklmnopq");
        assert_eq!(reassemble(&chunks, 3), ep.text);
    }

    fn check_invariants(text: &str, max: usize, overlap: usize) {
        let ep = Episode::new(3, text);
        let chunks = segment("story", &ep, cfg(max, overlap)).unwrap();
        assert_eq!(reassemble(&chunks, overlap), text);
        assert_eq!(chunks.first().unwrap().byte_range.0, 0);
        assert_eq!(chunks.last().unwrap().byte_range.1, text.len());
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.seq, i);
            assert_eq!(&text[c.byte_range.0..c.byte_range.1], c.text);
            assert!(c.text.chars().count() <= max);
        }
        for pair in chunks.windows(2) {
            let shared = &text[pair[1].byte_range.0..pair[0].byte_range.1];
            assert_eq!(shared.chars().count(), overlap);
        }
        assert_eq!(chunks, segment("story", &ep, cfg(max, overlap)).unwrap());
    }

    proptest! {
        #[test]
        fn lossless_coverage(
            words in prop::collection::vec("[a-zé日 ]{1,12}[.!?\n]?", 1..120),
            max in 5usize..80,
            overlap_frac in 0.0f64..0.95,
        ) {
            let text: String = words.concat();
            prop_assume!(!text.trim().is_empty());
            let overlap = ((max as f64) * overlap_frac) as usize;
            check_invariants(&text, max, overlap.min(max - 1));
        }

        #[test]
        fn ten_windows_reassemble(text in "\\PC{1200}") {
            check_invariants(&text, 120, 20);
        }
    }
}
