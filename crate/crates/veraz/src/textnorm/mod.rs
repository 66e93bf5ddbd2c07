//! Text normalization: casing, character filtering, tokenization,
//! stop-word removal, stemming, and padding/truncation.

mod porter;
mod spanish;

pub use porter::porter_stem;
pub use spanish::spanish_light_stem;

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN_STOPWORDS_EN: &str = include_str!("../../data/stopwords/en.txt");
const BUILTIN_STOPWORDS_ES: &str = include_str!("../../data/stopwords/es.txt");

/// Stop-word list selector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopWords {
    None,
    En,
    Es,
    /// Custom list file: UTF-8, one token per line, `#` comment lines.
    Custom(PathBuf),
}

/// Stemming algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stemming {
    Off,
    PorterEn,
    LightEs,
}

/// Normalization configuration. Serializes byte-identically into
/// experiment fingerprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerConfig {
    pub lowercase: bool,
    pub strip_non_alnum: bool,
    pub stop_words: StopWords,
    pub stemming: Stemming,
    /// Upper bound used by sequence encoding; `None` = unlimited.
    pub max_len: Option<usize>,
    pub pad_token: String,
    pub unk_token: String,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        NormalizerConfig {
            lowercase: true,
            strip_non_alnum: true,
            stop_words: StopWords::None,
            stemming: Stemming::Off,
            max_len: None,
            pad_token: "<pad>".to_string(),
            unk_token: "<unk>".to_string(),
        }
    }
}

impl NormalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pad_token == self.unk_token {
            return Err(Error::InvalidConfig(
                "pad_token and unk_token must be distinct".to_string(),
            ));
        }
        if self.pad_token.is_empty() || self.unk_token.is_empty() {
            return Err(Error::InvalidConfig(
                "reserved tokens must be non-empty".to_string(),
            ));
        }
        if self.max_len == Some(0) {
            return Err(Error::InvalidConfig("max_len must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// A normalizer with its stop-word set resolved once up front.
#[derive(Debug, Clone)]
pub struct Normalizer {
    config: NormalizerConfig,
    stop_set: HashSet<String>,
}

impl Normalizer {
    pub fn new(config: NormalizerConfig) -> Result<Self> {
        config.validate()?;
        let stop_set = match &config.stop_words {
            StopWords::None => HashSet::new(),
            StopWords::En => parse_stopword_list(BUILTIN_STOPWORDS_EN),
            StopWords::Es => parse_stopword_list(BUILTIN_STOPWORDS_ES),
            StopWords::Custom(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                parse_stopword_list(&text)
            }
        };
        Ok(Normalizer { config, stop_set })
    }

    pub fn config(&self) -> &NormalizerConfig {
        &self.config
    }

    pub fn stop_set(&self) -> &HashSet<String> {
        &self.stop_set
    }

    /// Normalize raw text to an ordered token list: lowercase, tokenize,
    /// remove stop words, stem. Reserved pad/unk tokens can never be
    /// produced: with character stripping on they are not alphanumeric,
    /// and with it off any literal occurrence is dropped.
    pub fn normalize(&self, text: &str) -> Vec<String> {
        let cased;
        let text = if self.config.lowercase {
            cased = text.to_lowercase();
            &cased
        } else {
            text
        };
        let tokens: Vec<&str> = if self.config.strip_non_alnum {
            text.split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .collect()
        } else {
            text.split_whitespace().collect()
        };
        let mut out = Vec::with_capacity(tokens.len());
        for token in tokens {
            if token == self.config.pad_token || token == self.config.unk_token {
                continue;
            }
            if self.stop_set.contains(token) {
                continue;
            }
            let stemmed = match self.config.stemming {
                Stemming::Off => token.to_string(),
                Stemming::PorterEn => porter_stem(token),
                Stemming::LightEs => spanish_light_stem(token),
            };
            out.push(stemmed);
        }
        out
    }
}

fn parse_stopword_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Apply one stemming algorithm to a lowercased token.
pub fn stem(token: &str, algorithm: Stemming) -> String {
    match algorithm {
        Stemming::Off => token.to_string(),
        Stemming::PorterEn => porter_stem(token),
        Stemming::LightEs => spanish_light_stem(token),
    }
}

/// Delete members of `stop_set` from the token list, preserving order.
pub fn remove_stopwords(tokens: &[String], stop_set: &HashSet<String>) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !stop_set.contains(t.as_str()))
        .cloned()
        .collect()
}

/// Force a fixed length: sequences longer than `max_len` keep their first
/// `max_len` ids; shorter sequences are post-padded with `pad_id`.
pub fn pad_truncate(ids: &[u32], max_len: usize, pad_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(max_len);
    out.extend_from_slice(&ids[..ids.len().min(max_len)]);
    out.resize(max_len, pad_id);
    out
}
