//! Vocabulary construction and fixed-length integer sequencing.
//!
//! Index 0 is reserved for padding and index 1 for out-of-vocabulary
//! tokens; real words receive contiguous indices from 2 in first-occurrence
//! order. Sequences are left-padded with zeros to a fixed length (default
//! 80); over-long sequences keep their tail.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text::Token;

/// Reserved padding index.
pub const PAD_INDEX: u32 = 0;
/// Reserved out-of-vocabulary index.
pub const OOV_INDEX: u32 = 1;
/// Fixed sequence length used throughout the pipeline.
pub const DEFAULT_MAX_LEN: usize = 80;

const VOCAB_FILE_VERSION: u32 = 1;

/// Bijection between stemmed words and indices `2..size+1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    word_to_index: HashMap<String, u32>,
    index_to_word: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from stemmed token sequences, assigning indices
    /// in first-occurrence order starting at 2. An empty corpus yields a
    /// vocabulary of size 0 (reserved indices only).
    pub fn build(corpus: &[Vec<Token>]) -> Vocabulary {
        let mut word_to_index = HashMap::new();
        let mut index_to_word = Vec::new();
        for tokens in corpus {
            for token in tokens {
                if !word_to_index.contains_key(token.as_str()) {
                    let index = index_to_word.len() as u32 + 2;
                    word_to_index.insert(token.as_str().to_string(), index);
                    index_to_word.push(token.as_str().to_string());
                }
            }
        }
        Vocabulary {
            word_to_index,
            index_to_word,
        }
    }

    /// Number of real words (reserved indices excluded).
    pub fn size(&self) -> usize {
        self.index_to_word.len()
    }

    /// Total rows an embedding table needs: size plus the two reserved
    /// indices.
    pub fn table_rows(&self) -> usize {
        self.index_to_word.len() + 2
    }

    pub fn index_of(&self, word: &str) -> Option<u32> {
        self.word_to_index.get(word).copied()
    }

    pub fn word_at(&self, index: u32) -> Option<&str> {
        if index < 2 {
            return None;
        }
        self.index_to_word
            .get(index as usize - 2)
            .map(String::as_str)
    }

    /// Maps tokens to indices; unseen tokens map to [`OOV_INDEX`].
    pub fn sequence(&self, tokens: &[Token]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| self.index_of(t.as_str()).unwrap_or(OOV_INDEX))
            .collect()
    }

    /// Canonical text serialization: a header line with version and size,
    /// then one word per line so that line k+2 holds the word with index
    /// k+2.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "toxdet-vocab v{} {}", VOCAB_FILE_VERSION, self.size());
        for word in &self.index_to_word {
            let _ = writeln!(out, "{word}");
        }
        out
    }

    pub fn parse_file_string(contents: &str) -> Result<Vocabulary> {
        let mut lines = contents.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty vocabulary file".into()))?;
        let mut parts = header.split_whitespace();
        let magic = parts.next().unwrap_or("");
        let version = parts.next().unwrap_or("");
        let size: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad vocabulary header: {header:?}")))?;
        if magic != "toxdet-vocab" {
            return Err(Error::Format(format!(
                "not a vocabulary file (magic {magic:?})"
            )));
        }
        let expected = format!("v{VOCAB_FILE_VERSION}");
        if version != expected {
            return Err(Error::Format(format!(
                "vocabulary version {version} unsupported, expected {expected}"
            )));
        }
        let index_to_word: Vec<String> = lines.map(str::to_string).collect();
        if index_to_word.len() != size {
            return Err(Error::Format(format!(
                "vocabulary header claims {size} words but file holds {}",
                index_to_word.len()
            )));
        }
        let mut word_to_index = HashMap::with_capacity(size);
        for (k, word) in index_to_word.iter().enumerate() {
            if word_to_index.insert(word.clone(), k as u32 + 2).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary word {word:?}")));
            }
        }
        Ok(Vocabulary {
            word_to_index,
            index_to_word,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let contents = std::fs::read_to_string(path)?;
        Vocabulary::parse_file_string(&contents)
    }

    /// SHA-256 of the canonical serialization; recorded in checkpoints so a
    /// model is never evaluated against the wrong vocabulary.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.to_file_string().as_bytes());
        hasher.finalize().into()
    }
}

/// Fixed-length index vector encoding one comment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedSequence {
    indices: Vec<u32>,
    original_length: usize,
}

impl PaddedSequence {
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Token count before padding/truncation.
    pub fn original_length(&self) -> usize {
        self.original_length
    }

    /// The non-pad tail of the sequence.
    pub fn content(&self) -> &[u32] {
        let kept = self.original_length.min(self.indices.len());
        &self.indices[self.indices.len() - kept..]
    }

    pub fn from_raw(indices: Vec<u32>, original_length: usize) -> PaddedSequence {
        PaddedSequence {
            indices,
            original_length,
        }
    }
}

/// Left-pads with zeros to `max_len`; over-long inputs keep their LAST
/// `max_len` entries (head truncation).
pub fn pad(indices: &[u32], max_len: usize) -> Result<PaddedSequence> {
    if max_len == 0 {
        return Err(Error::Argument("max_len must be at least 1".into()));
    }
    let original_length = indices.len();
    let mut padded = Vec::with_capacity(max_len);
    if original_length >= max_len {
        padded.extend_from_slice(&indices[original_length - max_len..]);
    } else {
        padded.resize(max_len - original_length, PAD_INDEX);
        padded.extend_from_slice(indices);
    }
    Ok(PaddedSequence {
        indices: padded,
        original_length,
    })
}
