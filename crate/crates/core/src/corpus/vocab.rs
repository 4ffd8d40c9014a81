use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::annotation::SegmentAnnotation;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token ↔ id map. Ids are dense from 0; the four specials come first and
/// corpus tokens follow by descending frequency, then lexicographically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    max_caption_length: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    max_caption_length: usize,
    tokens: Vec<String>,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        Vocabulary::from_tokens(f.tokens, f.max_caption_length)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            max_caption_length: v.max_caption_length,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, max_caption_length: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            index,
            max_caption_length,
        }
    }

    /// Vocabulary over explicit words (specials are prepended).
    pub fn from_words<I: IntoIterator<Item = String>>(words: I, max_caption_length: usize) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for w in words {
            if !tokens.contains(&w) {
                tokens.push(w);
            }
        }
        Self::from_tokens(tokens, max_caption_length)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_caption_length(&self) -> usize {
        self.max_caption_length
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(&token.to_lowercase())
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(SPECIALS[UNK], String::as_str)
    }

    /// Truncates to the maximum caption length and appends EOS.
    pub fn encode(&self, caption: &[String]) -> Vec<usize> {
        let mut ids: Vec<usize> = caption
            .iter()
            .take(self.max_caption_length)
            .map(|t| self.id(t))
            .collect();
        ids.push(EOS);
        ids
    }

    /// Words up to the first EOS, specials dropped.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).to_string())
            .collect()
    }
}

/// Counts lowercased tokens of the truncated captions and keeps those seen at
/// least `min_count` times.
pub fn build_vocabulary(
    corpus: &[SegmentAnnotation],
    min_count: usize,
    max_len: usize,
) -> Result<Vocabulary> {
    if min_count < 1 || max_len < 1 {
        return Err(Error::Config(format!(
            "min_count ({min_count}) and max_len ({max_len}) must be at least 1"
        )));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for seg in corpus {
        for tok in seg.caption.iter().take(max_len) {
            *counts.entry(tok.to_lowercase()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !SPECIALS.contains(&t.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_words(
        kept.into_iter().map(|(t, _)| t),
        max_len,
    ))
}

/// Preset `(min_count, max_len)` pairs.
pub fn vocabulary_preset(name: &str) -> Option<(usize, usize)> {
    match name {
        "anet" | "activitynet" => Some((3, 20)),
        "flickr" | "flickr30k" => Some((5, 16)),
        _ => None,
    }
}
