use std::collections::HashMap;
use std::path::Path;

use crate::syntax::scope::{is_identifier, is_reserved};

const BUILTIN_VOCAB: &str = include_str!("../../data/vocab.txt");

/// Replacement identifiers for variable renaming, one per line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from text, skipping blank lines, duplicates and anything that is
    /// not a usable identifier.
    pub fn from_text(text: &str) -> Self {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        for line in text.lines() {
            let w = line.trim();
            if w.is_empty() || !is_identifier(w) || is_reserved(w) || index.contains_key(w) {
                continue;
            }
            index.insert(w.to_string(), words.len());
            words.push(w.to_string());
        }
        Vocabulary { words, index }
    }

    pub fn builtin() -> Self {
        Self::from_text(BUILTIN_VOCAB)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    /// The first `n` words.
    pub fn truncated(&self, n: usize) -> Self {
        let text: Vec<&str> = self.words.iter().take(n).map(String::as_str).collect();
        Self::from_text(&text.join("\n"))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn position(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.words.join("\n");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_is_curated() {
        let v = Vocabulary::builtin();
        assert!(v.len() >= 1900, "{}", v.len());
        assert!(v.words().iter().all(|w| is_identifier(w) && !is_reserved(w)));
        assert_eq!(v.position(v.word(7)), Some(7));
    }

    #[test]
    fn filters_bad_lines() {
        let v = Vocabulary::from_text("alpha\n\nfor\n2x\nalpha\nbeta\n");
        assert_eq!(v.words(), ["alpha", "beta"]);
    }
}
