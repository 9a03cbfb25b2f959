//! Bangla comment preprocessing: emoji cleanup, tokenization, and
//! rule-based suffix stemming.
//!
//! The cleaner strips emoji codepoints while leaving Bangla script intact;
//! in particular ZWJ/ZWNJ are preserved inside conjuncts and a ZWJ is only
//! dropped when it glues a removed emoji sequence together. The stemmer is
//! a single-pass longest-match suffix stripper driven by a plain-text,
//! user-extensible table; the prefix table ships empty behind the same
//! mechanism.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Default suffix table compiled into the crate.
const DEFAULT_SUFFIX_TABLE: &str = include_str!("../resources/bangla_suffixes.txt");

const ZWJ: char = '\u{200D}';

/// True for codepoints the cleaner removes outright.
fn is_removed_emoji(c: char) -> bool {
    matches!(u32::from(c),
        // Symbols & pictographs; subsumes the U+1F3FB-1F3FF skin tones.
        0x1F300..=0x1F5FF
        | 0x1F600..=0x1F64F // emoticons
        | 0x1F680..=0x1F6FF // transport & map
        | 0x1F900..=0x1F9FF // supplemental symbols
        | 0x2600..=0x26FF   // miscellaneous symbols
        | 0x2700..=0x27BF   // dingbats
        | 0xFE0E..=0xFE0F   // variation selectors
    )
}

/// Removes emoji codepoints, drops ZWJs that were part of an emoji
/// sequence, collapses whitespace runs to single spaces, and trims the
/// ends. Idempotent; may return an empty string.
pub fn clean_text(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let emoji: Vec<bool> = chars.iter().map(|&c| is_removed_emoji(c)).collect();

    let mut kept = String::with_capacity(raw.len());
    for (i, &c) in chars.iter().enumerate() {
        if emoji[i] {
            continue;
        }
        if c == ZWJ {
            let prev_emoji = i > 0 && emoji[i - 1];
            let next_emoji = i + 1 < chars.len() && emoji[i + 1];
            if prev_emoji || next_emoji {
                continue;
            }
        }
        kept.push(c);
    }

    // Collapse whitespace runs and trim.
    let mut out = String::with_capacity(kept.len());
    let mut pending_space = false;
    for c in kept.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// One whitespace-free word unit with surrounding punctuation stripped.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// True for punctuation stripped from token edges: ASCII punctuation, the
/// Bangla danda/double danda, and common general-punctuation marks.
fn is_strippable_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '\u{0964}' | '\u{0965}')
        || matches!(c, '\u{2013}' | '\u{2014}' | '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2026}')
}

/// Splits cleaned text on whitespace, strips surrounding punctuation, drops
/// tokens that become empty, and lowercases cased scripts (Bangla has no
/// case, so only Latin-script words are affected).
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .filter_map(|word| {
            let trimmed = word.trim_matches(is_strippable_punct);
            if trimmed.is_empty() {
                None
            } else {
                Some(Token(trimmed.to_lowercase()))
            }
        })
        .collect()
}

/// Rule-based affix stripper with an ordered, versioned suffix table.
#[derive(Clone, Debug)]
pub struct Stemmer {
    /// Suffixes sorted longest-first (in chars), ties in table order.
    suffixes: Vec<String>,
    /// Same mechanism as suffixes; ships empty because no safe Bangla
    /// prefix rules are bundled. User tables may populate it.
    prefixes: Vec<String>,
    version: u32,
}

impl Default for Stemmer {
    fn default() -> Self {
        Stemmer::from_table_str(DEFAULT_SUFFIX_TABLE)
            .expect("bundled suffix table must parse")
    }
}

impl Stemmer {
    /// Parses a table: one suffix per line, UTF-8, `#` comments. A comment
    /// of the form `# version: N` sets the table version.
    pub fn from_table_str(table: &str) -> Result<Stemmer> {
        let mut suffixes = Vec::new();
        let mut version = 1;
        for line in table.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = v.trim().parse().map_err(|_| {
                        Error::Format(format!("unparsable suffix table version: {line:?}"))
                    })?;
                }
                continue;
            }
            suffixes.push(line.to_string());
        }
        let mut stemmer = Stemmer {
            suffixes,
            prefixes: Vec::new(),
            version,
        };
        stemmer.sort_tables();
        Ok(stemmer)
    }

    /// Loads a suffix table from a file path.
    pub fn from_file(path: &Path) -> Result<Stemmer> {
        let table = std::fs::read_to_string(path)?;
        Stemmer::from_table_str(&table)
    }

    fn sort_tables(&mut self) {
        // Stable sort keeps file order among equal lengths.
        self.suffixes
            .sort_by(|a, b| b.chars().count().cmp(&a.chars().count()));
        self.prefixes
            .sort_by(|a, b| b.chars().count().cmp(&a.chars().count()));
    }

    pub fn table_version(&self) -> u32 {
        self.version
    }

    pub fn suffixes(&self) -> &[String] {
        &self.suffixes
    }

    /// Single-pass longest-match stem. Strips at most one suffix and one
    /// prefix, each only when the remainder keeps at least two Unicode
    /// letters; otherwise the token is returned unchanged.
    pub fn stem(&self, token: &Token) -> Token {
        let mut surface = token.as_str().to_string();
        if let Some(stripped) = strip_once(&surface, &self.suffixes, Affix::Suffix) {
            surface = stripped;
        }
        if let Some(stripped) = strip_once(&surface, &self.prefixes, Affix::Prefix) {
            surface = stripped;
        }
        Token(surface)
    }
}

enum Affix {
    Suffix,
    Prefix,
}

/// Bangla combining signs (vowel signs, nukta, virama, candrabindu...).
/// These satisfy `char::is_alphabetic` via Other_Alphabetic but are not
/// letters in their own right.
fn is_bangla_combining(c: char) -> bool {
    matches!(u32::from(c),
        0x0981..=0x0983        // candrabindu, anusvara, visarga
        | 0x09BC               // nukta
        | 0x09BE..=0x09C4      // dependent vowel signs
        | 0x09C7..=0x09C8
        | 0x09CB..=0x09CD      // incl. virama
        | 0x09D7               // au length mark
        | 0x09E2..=0x09E3      // vocalic marks
    )
}

fn letter_count(s: &str) -> usize {
    s.chars()
        .filter(|&c| c.is_alphabetic() && !is_bangla_combining(c))
        .count()
}

fn strip_once(surface: &str, table: &[String], kind: Affix) -> Option<String> {
    for affix in table {
        let remainder = match kind {
            Affix::Suffix => surface.strip_suffix(affix.as_str()),
            Affix::Prefix => surface.strip_prefix(affix.as_str()),
        };
        if let Some(rest) = remainder {
            if letter_count(rest) >= 2 {
                return Some(rest.to_string());
            }
        }
    }
    None
}

/// Full preprocessing pipeline for one comment: clean, tokenize, stem.
pub fn preprocess(raw: &str, stemmer: &Stemmer) -> Vec<Token> {
    tokenize(&clean_text(raw))
        .iter()
        .map(|t| stemmer.stem(t))
        .collect()
}
