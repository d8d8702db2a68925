//! Subword vocabulary and greedy longest-match (WordPiece-style)
//! tokenization. Continuation pieces carry the `##` prefix; a vocab built
//! from a corpus includes per-character fallback pieces so every in-corpus
//! name tokenizes without `[UNK]`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{KirsError, Result};

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const MASK_TOKEN: &str = "[MASK]";

const SPECIALS: [&str; 5] = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN];

#[derive(Clone, Debug)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    cls: u32,
    sep: u32,
    mask: u32,
    unk: u32,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if index.len() != tokens.len() {
            return Err(KirsError::Config("vocabulary has duplicate tokens".into()));
        }
        let need = |name: &str| -> Result<u32> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| KirsError::Config(format!("vocabulary is missing {name}")))
        };
        let cls = need(CLS_TOKEN)?;
        let sep = need(SEP_TOKEN)?;
        let mask = need(MASK_TOKEN)?;
        let unk = need(UNK_TOKEN)?;
        Ok(Vocab {
            tokens,
            index,
            cls,
            sep,
            mask,
            unk,
        })
    }

    /// Specials, per-character fallback pieces, then whole words by
    /// descending corpus frequency (alphabetical on ties) up to `max_words`.
    pub fn build_from_corpus<'a>(names: impl Iterator<Item = &'a str>, max_words: usize) -> Self {
        let mut word_freq: HashMap<String, usize> = HashMap::new();
        let mut chars: Vec<char> = Vec::new();
        for name in names {
            for word in normalize(name).split_whitespace() {
                *word_freq.entry(word.to_string()).or_default() += 1;
                for c in word.chars() {
                    if !chars.contains(&c) {
                        chars.push(c);
                    }
                }
            }
        }
        chars.sort_unstable();

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for &c in &chars {
            tokens.push(c.to_string());
            tokens.push(format!("##{c}"));
        }
        let mut words: Vec<(String, usize)> = word_freq.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for (word, _) in words.into_iter().take(max_words) {
            if word.chars().count() > 1 && !tokens.contains(&word) {
                tokens.push(word);
            }
        }
        Vocab::from_tokens(tokens).expect("specials are present by construction")
    }

    /// One token per line, the BERT vocabulary file convention.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KirsError::io(path, e))?;
        Vocab::from_tokens(text.lines().map(|l| l.to_string()).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| KirsError::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn cls(&self) -> u32 {
        self.cls
    }

    pub fn sep(&self) -> u32 {
        self.sep
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn unk(&self) -> u32 {
        self.unk
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < SPECIALS.len() && SPECIALS.contains(&self.tokens[id as usize].as_str())
    }

    /// Ids of non-special tokens, the pool for random mask replacement.
    pub fn regular_ids(&self) -> Vec<u32> {
        (0..self.tokens.len() as u32)
            .filter(|&id| !self.is_special(id))
            .collect()
    }

    /// Greedy longest-match over whitespace-split lowercase words. A word
    /// with no matching prefix piece becomes a single `[UNK]`.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in normalize(text).split_whitespace() {
            self.tokenize_word(word, &mut out);
        }
        out
    }

    fn tokenize_word(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0usize;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let piece: String = chars[start..end].iter().collect();
                let key = if start == 0 {
                    piece
                } else {
                    format!("##{piece}")
                };
                if let Some(&id) = self.index.get(&key) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk);
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

fn normalize(text: &str) -> String {
    text.to_lowercase()
}
