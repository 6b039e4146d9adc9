use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::scope::ScopeInfo;
use crate::transform::{self, Analysis, Family};

/// Canonical form of a program. Equality compares the canonical tree only;
/// the alpha map records where each original identifier went.
#[derive(Debug, Clone)]
pub struct NormalForm {
    pub tree: SyntaxTree,
    pub alpha_map: BTreeMap<String, String>,
}

impl PartialEq for NormalForm {
    fn eq(&self, other: &Self) -> bool {
        self.tree == other.tree
    }
}

fn canonical_state(f: Family) -> Option<usize> {
    match f {
        Family::LoopType => Some(transform::LOOP_FOR),
        Family::LoopCondition => Some(transform::COND_TRUE),
        Family::NestedConditions => Some(transform::NEST_MERGED),
        Family::OperatorSubstitution => Some(transform::OP_REGULAR),
        Family::ParenthesesInConditions => Some(transform::PAREN_OFF),
        Family::NamingStyle | Family::VariableRename => None,
    }
}

pub fn normalize(tree: &SyntaxTree) -> NormalForm {
    let mut t = tree.clone();
    for _ in 0..8 {
        let analysis = Analysis::new(&t);
        let plan = transform::uniform_plan(&analysis, canonical_state);
        let next = transform::apply_with(&t, &analysis, &plan)
            .expect("canonical plan only uses listed alternatives");
        if next == t {
            break;
        }
        t = next;
    }
    t.walk_mut(&mut |s| {
        let kind = std::mem::replace(&mut s.kind, StmtKind::Pass);
        s.kind = match kind {
            StmtKind::AugAssign { target, op, value } => {
                let value = Expr::synthetic(ExprKind::BinOp {
                    left: Box::new(target.clone()),
                    op,
                    right: Box::new(value),
                });
                StmtKind::Assign { target, value }
            }
            StmtKind::If {
                test,
                body,
                orelse,
                ..
            } => StmtKind::If {
                test,
                body,
                orelse,
                paren: false,
            },
            StmtKind::While { test, body, .. } => StmtKind::While {
                test,
                body,
                paren: false,
            },
            k => k,
        };
    });

    let info = ScopeInfo::analyze(&t);
    let bound: BTreeSet<&String> = info.bound_order.iter().collect();
    let others: BTreeSet<&String> = info
        .identifiers
        .iter()
        .filter(|i| !bound.contains(i))
        .collect();
    let mut alpha_map = BTreeMap::new();
    for (k, name) in info.bound_order.iter().enumerate() {
        let mut placeholder = format!("v{k}");
        while others.iter().any(|o| **o == placeholder) {
            placeholder.insert(0, '_');
        }
        alpha_map.insert(name.clone(), placeholder);
    }
    t.walk_mut(&mut |s| {
        if let StmtKind::FunctionDef { params, .. } = &mut s.kind {
            for p in params.iter_mut() {
                if let Some(n) = alpha_map.get(&p.name) {
                    p.name = n.clone();
                }
            }
        }
        for e in s.own_exprs_mut() {
            e.walk_mut(&mut |x| {
                if let ExprKind::Name(n) = &mut x.kind {
                    if let Some(new) = alpha_map.get(n.as_str()) {
                        *n = new.clone();
                    }
                }
            });
        }
    });
    NormalForm { tree: t, alpha_map }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    fn nf(src: &str) -> NormalForm {
        normalize(&parse(src).unwrap())
    }

    #[test]
    fn augmented_equals_regular() {
        assert_eq!(nf("x = 0\nx += 1\n"), nf("x = 0\nx = x + 1\n"));
    }

    #[test]
    fn loop_conditions_equal() {
        assert_eq!(
            nf("while True:\n    print('Running')\n"),
            nf("while 1:\n    print('Running')\n")
        );
    }

    #[test]
    fn naming_styles_equal() {
        assert_eq!(nf("myVariable = 10\n"), nf("my_variable = 10\n"));
    }

    #[test]
    fn loops_and_nesting_equal() {
        let a = "def f(n, x, y):\n    for i in range(n):\n        print(i)\n    if x > 0 and y > 0:\n        print('Both positive')\n";
        let b = "def f(n, x, y):\n    i = 0\n    while i < n:\n        print(i)\n        i += 1\n    if (x > 0):\n        if y > 0:\n            print('Both positive')\n";
        assert_eq!(nf(a), nf(b));
    }

    #[test]
    fn different_programs_differ() {
        assert_ne!(nf("x = 1\n"), nf("x = 2\n"));
        assert_ne!(nf("x = a + 1\n"), nf("x = a - 1\n"));
    }

    #[test]
    fn placeholders_avoid_free_names() {
        let n = nf("x = v0\n");
        assert_eq!(n.alpha_map["x"], "_v0");
    }
}
