use std::collections::BTreeMap;

use crate::syntax::lexer::{tokenize, Tok};
use crate::syntax::{render, SyntaxTree};
use crate::transform::{Analysis, TransformSite};

/// Sparse feature row with sorted, unique indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    pub idx: Vec<u32>,
    pub val: Vec<f32>,
}

impl SparseVec {
    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f32> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.idx.iter().zip(&self.val) {
            out[*i as usize] = *v;
        }
        out
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv_extend(FNV_OFFSET, bytes)
}

fn fnv_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn token_text(t: &Tok) -> &str {
    match t {
        Tok::Name(s) | Tok::Int(s) | Tok::Float(s) | Tok::Str(s) => s,
        Tok::Op(s) => s,
        Tok::Newline => "<nl>",
        Tok::Indent => "<in>",
        Tok::Dedent => "<de>",
        Tok::Eof => "<eof>",
    }
}

/// Hashed 1- to 3-gram counts of the rendered token stream.
pub fn ngram_counts(tree: &SyntaxTree, buckets: usize) -> BTreeMap<u32, u32> {
    let src = render(tree);
    let toks = tokenize(&src).expect("rendered code re-lexes");
    let texts: Vec<&str> = toks
        .iter()
        .filter(|t| !matches!(t.tok, Tok::Eof))
        .map(|t| token_text(&t.tok))
        .collect();
    let mut counts = BTreeMap::new();
    for i in 0..texts.len() {
        let mut h = FNV_OFFSET;
        for n in 0..3 {
            let Some(t) = texts.get(i + n) else { break };
            if n > 0 {
                h = fnv_extend(h, &[0x1f]);
            }
            h = fnv_extend(h, t.as_bytes());
            *counts.entry((h % buckets as u64) as u32).or_insert(0) += 1;
        }
    }
    counts
}

/// The syntactic sites that occupy grid slots, in site order.
pub fn grid_sites(analysis: &Analysis, max_sites: usize) -> Vec<&TransformSite> {
    analysis.syntactic_sites().take(max_sites).collect()
}

/// log1p n-gram counts followed by a one-hot of each grid slot's current
/// alternative.
pub fn code_features(
    tree: &SyntaxTree,
    analysis: &Analysis,
    buckets: usize,
    max_sites: usize,
    max_alts: usize,
) -> SparseVec {
    let counts = ngram_counts(tree, buckets);
    let mut idx: Vec<u32> = Vec::with_capacity(counts.len() + max_sites);
    let mut val = Vec::with_capacity(counts.len() + max_sites);
    for (b, c) in counts {
        idx.push(b);
        val.push((c as f32).ln_1p());
    }
    for (slot, site) in grid_sites(analysis, max_sites).into_iter().enumerate() {
        if site.current_state < max_alts {
            idx.push((buckets + slot * max_alts + site.current_state) as u32);
            val.push(1.0);
        }
    }
    SparseVec { idx, val }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn counts_cover_all_ngrams() {
        let t = parse("x = 1\n").unwrap();
        // x = 1 <nl>: 4 unigrams, 3 bigrams, 2 trigrams
        let total: u32 = ngram_counts(&t, 1 << 20).values().sum();
        assert_eq!(total, 9);
    }

    #[test]
    fn grid_marks_current_state() {
        let t = parse("for i in range(10):\n    print(i)\n").unwrap();
        let a = Analysis::new(&t);
        let f = code_features(&t, &a, 64, 16, 8);
        let grid: Vec<u32> = f.idx.iter().copied().filter(|i| *i >= 64).collect();
        assert_eq!(grid.len(), a.syntactic_sites().count().min(16));
        assert!(f.idx.windows(2).all(|w| w[0] < w[1]));
    }
}
