use std::collections::HashMap;

use super::EncoderError;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";

/// Word-level vocabulary. Ids 0, 1, 2 are `[PAD]`, `[UNK]`, `[CLS]`; the rest
/// follow first appearance in the training texts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, EncoderError> {
        if tokens.len() < 3 || tokens[0] != PAD || tokens[1] != UNK || tokens[2] != CLS {
            return Err(EncoderError::Contract(
                "vocabulary must start with [PAD], [UNK], [CLS]".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(EncoderError::Contract(format!("duplicate vocabulary entry '{}'", t)));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Builds from texts, keeping words seen at least `min_freq` times.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for text in texts {
            for w in split_words(text) {
                let c = counts.entry(w.clone()).or_insert(0);
                if *c == 0 {
                    order.push(w);
                }
                *c += 1;
            }
        }
        let mut tokens = vec![PAD.to_string(), UNK.to_string(), CLS.to_string()];
        tokens.extend(
            order
                .into_iter()
                .filter(|w| counts[w] >= min_freq && ![PAD, UNK, CLS].contains(&w.as_str())),
        );
        Vocab::from_tokens(tokens).expect("specials are unique")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(1)
    }

    pub fn cls_id(&self) -> usize {
        2
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }
}

/// Lowercases and splits on whitespace; ASCII punctuation becomes its own word.
pub fn split_words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if ch.is_ascii_punctuation() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        } else {
            cur.extend(ch.to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Token ids for `s`: `[CLS]` followed by at most `max_len - 1` word ids.
pub fn tokenize_text(s: &str, vocab: &Vocab, max_len: usize) -> Result<Vec<usize>, EncoderError> {
    let words = split_words(s);
    if words.is_empty() {
        return Err(EncoderError::Input("text is empty after tokenization".into()));
    }
    if max_len < 2 {
        return Err(EncoderError::Contract("max_text_len must be at least 2".into()));
    }
    let mut ids = Vec::with_capacity(words.len().min(max_len - 1) + 1);
    ids.push(vocab.cls_id());
    ids.extend(words.iter().take(max_len - 1).map(|w| vocab.id(w)));
    Ok(ids)
}
