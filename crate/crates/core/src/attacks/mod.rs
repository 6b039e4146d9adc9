//! Watermark removal attempts that keep program behaviour.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::syntax::scope::name_key;
use crate::syntax::SyntaxTree;
use crate::transform::naming::NamingStyle;
use crate::transform::vocab::Vocabulary;
use crate::transform::{self, Analysis, Family};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    VariableRename,
    StyleNormalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Share of variables renamed; only used by `VariableRename`.
    pub fraction: f64,
    pub seed: u64,
}

/// Renames ⌈fraction·|variables|⌉ randomly chosen variables to unused
/// vocabulary words.
pub fn variable_rename_attack(tree: &SyntaxTree, fraction: f64, seed: u64, vocab: &Vocabulary) -> SyntaxTree {
    let analysis = Analysis::new(tree);
    let vars = &analysis.scope.variables;
    let k = ((fraction.clamp(0.0, 1.0) * vars.len() as f64).ceil() as usize).min(vars.len());
    if k == 0 || vocab.is_empty() {
        return tree.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, vars.len(), k).into_vec();
    chosen.sort_unstable();
    let mut taken = BTreeSet::new();
    let mut renames = BTreeMap::new();
    for i in chosen {
        let var = &vars[i];
        let start = rng.gen_range(0..vocab.len());
        let word = (0..vocab.len())
            .map(|j| vocab.word((start + j) % vocab.len()))
            .find(|w| analysis.rename_allowed(var, w, &taken));
        if let Some(w) = word {
            taken.insert(name_key(w));
            renames.insert(var.clone(), w.to_string());
        }
    }
    transform::rename_variables(tree, &renames).expect("attack renames are capture-free")
}

fn canonical(f: Family) -> Option<usize> {
    match f {
        Family::NamingStyle => Some(NamingStyle::Snake.index()),
        Family::LoopType => Some(transform::LOOP_FOR),
        Family::LoopCondition => Some(transform::COND_TRUE),
        Family::NestedConditions => Some(transform::NEST_MERGED),
        Family::OperatorSubstitution => Some(transform::OP_AUGMENTED),
        Family::ParenthesesInConditions => Some(transform::PAREN_OFF),
        Family::VariableRename => None,
    }
}

/// Rewrites every site to one fixed alternative: snake_case, for-loops,
/// `while True`, merged conditions, augmented assignment, no parentheses.
pub fn style_normalize_attack(tree: &SyntaxTree) -> SyntaxTree {
    let mut t = tree.clone();
    for _ in 0..8 {
        let analysis = Analysis::new(&t);
        let plan = transform::uniform_plan(&analysis, canonical);
        let next = transform::apply_with(&t, &analysis, &plan).expect("canonical plan is valid");
        if next == t {
            break;
        }
        t = next;
    }
    t
}

pub fn apply_attack(tree: &SyntaxTree, cfg: &AttackConfig, vocab: &Vocabulary) -> SyntaxTree {
    match cfg.kind {
        AttackKind::VariableRename => variable_rename_attack(tree, cfg.fraction, cfg.seed, vocab),
        AttackKind::StyleNormalize => style_normalize_attack(tree),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::desk_corpus;
    use crate::syntax::{normalize, parse, render};
    use crate::transform::random_plan;

    #[test]
    fn zero_fraction_is_identity() {
        let t = parse("def f(a, b):\n    total = a + b\n    return total\n").unwrap();
        assert_eq!(variable_rename_attack(&t, 0.0, 1, &Vocabulary::builtin()), t);
    }

    #[test]
    fn rename_count_is_ceiling() {
        let t = parse("def f(a, b):\n    total = a + b\n    extra = total * 2\n    return extra\n").unwrap();
        let vocab = Vocabulary::builtin();
        let before = Analysis::new(&t).scope.variables.clone();
        assert_eq!(before.len(), 4);
        let out = variable_rename_attack(&t, 0.25, 3, &vocab);
        let after = Analysis::new(&out).scope.variables;
        let kept = before.iter().filter(|v| after.contains(v)).count();
        assert_eq!(kept, 3);
        assert_eq!(normalize(&out), normalize(&t));
    }

    #[test]
    fn full_rename_preserves_normal_form() {
        let vocab = Vocabulary::builtin();
        for (i, rec) in desk_corpus().records.iter().enumerate() {
            let out = variable_rename_attack(&rec.tree, 1.0, i as u64, &vocab);
            let before = Analysis::new(&rec.tree).scope.variables;
            let after = Analysis::new(&out).scope.variables;
            assert!(before.iter().all(|v| !after.contains(v)), "{}", rec.record.task_id);
            assert_eq!(normalize(&out), normalize(&rec.tree), "{}", rec.record.task_id);
        }
    }

    #[test]
    fn attacks_are_seeded() {
        let t = parse("def f(a, b):\n    total = a + b\n    return total\n").unwrap();
        let v = Vocabulary::builtin();
        assert_eq!(variable_rename_attack(&t, 0.5, 7, &v), variable_rename_attack(&t, 0.5, 7, &v));
    }

    #[test]
    fn canonical_code_is_untouched() {
        let src = "def f(n):\n    total = 0\n    for i in range(n):\n        total += i\n    while True:\n        if total > 3 and n > 1:\n            break\n        total += 1\n    return total\n";
        let t = parse(src).unwrap();
        assert_eq!(render(&style_normalize_attack(&t)), src);
    }

    #[test]
    fn style_attack_wipes_choices_and_is_idempotent() {
        let vocab = Vocabulary::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for rec in desk_corpus().records.iter().take(120) {
            let a = Analysis::new(&rec.tree);
            let plan = random_plan(&a, &vocab, 0.3, &mut rng);
            let wm = transform::apply_with(&rec.tree, &a, &plan).unwrap();
            let out = style_normalize_attack(&wm);
            assert_eq!(style_normalize_attack(&out), out);
            assert_eq!(normalize(&out), normalize(&rec.tree));
            let after = Analysis::new(&out);
            for s in after.syntactic_sites() {
                if let Some(c) = canonical(s.family) {
                    if s.alternatives.contains(&c) {
                        assert_eq!(s.current_state, c, "{} {:?}", rec.record.task_id, s.family);
                    }
                }
            }
        }
    }
}
