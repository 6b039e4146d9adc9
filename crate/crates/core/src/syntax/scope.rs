use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::parser::is_keyword;

pub const BUILTINS: &[&str] = &[
    "abs", "all", "any", "ascii", "bin", "bool", "bytearray", "bytes", "callable", "chr",
    "classmethod", "compile", "complex", "delattr", "dict", "dir", "divmod", "enumerate", "eval",
    "exec", "filter", "float", "format", "frozenset", "getattr", "globals", "hasattr", "hash",
    "help", "hex", "id", "input", "int", "isinstance", "issubclass", "iter", "len", "list",
    "locals", "map", "max", "memoryview", "min", "next", "object", "oct", "open", "ord", "pow",
    "print", "property", "range", "repr", "reversed", "round", "set", "setattr", "slice",
    "sorted", "staticmethod", "str", "sum", "super", "tuple", "type", "vars", "zip", "self",
    "cls", "math", "re", "heapq", "collections", "itertools", "functools", "string", "sys",
    "Exception", "ValueError", "TypeError", "IndexError", "KeyError", "ZeroDivisionError",
    "StopIteration", "RuntimeError", "NotImplemented", "NotImplementedError", "AssertionError",
    "ArithmeticError", "AttributeError", "OverflowError", "match", "case",
];

/// Identifiers that may never be introduced by a rewrite.
pub fn is_reserved(name: &str) -> bool {
    is_keyword(name) || BUILTINS.contains(&name) || (name.starts_with("__") && name.ends_with("__"))
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Case- and underscore-insensitive identity used for collision checks, so
/// that restyling one identifier can never make it equal to another.
pub fn name_key(name: &str) -> String {
    name.chars()
        .filter(|c| *c != '_')
        .flat_map(|c| c.to_lowercase())
        .collect()
}

/// Names bound by an assignment or loop target.
pub fn target_names<'a>(target: &'a Expr, out: &mut Vec<&'a str>) {
    match &target.kind {
        ExprKind::Name(n) => out.push(n),
        ExprKind::Tuple(items) | ExprKind::List(items) => {
            items.iter().for_each(|i| target_names(i, out))
        }
        _ => {}
    }
}

/// Names bound directly by one statement (not by nested statements).
pub fn stmt_bindings(s: &Stmt) -> Vec<&str> {
    let mut out = Vec::new();
    match &s.kind {
        StmtKind::FunctionDef { params, .. } => out.extend(params.iter().map(|p| p.name.as_str())),
        StmtKind::For { target, .. } | StmtKind::Assign { target, .. } => {
            target_names(target, &mut out)
        }
        StmtKind::AugAssign { target, .. } => {
            if let ExprKind::Name(n) = &target.kind {
                out.push(n);
            }
        }
        _ => {}
    }
    out
}

#[derive(Debug, Clone)]
pub struct ScopeInfo {
    pub function_names: BTreeSet<String>,
    pub module_bound: BTreeSet<String>,
    /// Local names per top-level function, keyed by the function's node id.
    pub locals: BTreeMap<NodeId, BTreeSet<String>>,
    /// Every bound name in order of first binding.
    pub bound_order: Vec<String>,
    /// Bound names whose every occurrence resolves to a binding and which can
    /// therefore be renamed safely.
    pub variables: Vec<String>,
    /// Names occurring without any binding in their scope.
    pub free_names: BTreeSet<String>,
    /// Every identifier spelled in the unit (names, parameters, functions).
    pub identifiers: BTreeSet<String>,
}

impl ScopeInfo {
    pub fn analyze(tree: &SyntaxTree) -> Self {
        let mut function_names = BTreeSet::new();
        let mut module_bound = BTreeSet::new();
        let mut locals = BTreeMap::new();
        let mut bound_order: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut identifiers = BTreeSet::new();

        let mut note = |n: &str, order: &mut Vec<String>| {
            if seen.insert(n.to_string()) {
                order.push(n.to_string());
            }
        };

        for top in &tree.body {
            if let StmtKind::FunctionDef { name, .. } = &top.kind {
                function_names.insert(name.clone());
                identifiers.insert(name.clone());
                let mut local = BTreeSet::new();
                top.walk(&mut |s| {
                    for n in stmt_bindings(s) {
                        local.insert(n.to_string());
                        note(n, &mut bound_order);
                    }
                });
                locals.insert(top.id, local);
            } else {
                top.walk(&mut |s| {
                    for n in stmt_bindings(s) {
                        module_bound.insert(n.to_string());
                        note(n, &mut bound_order);
                    }
                });
            }
        }

        let mut free_names = BTreeSet::new();
        let mut unresolved = BTreeSet::new();
        for top in &tree.body {
            let local = locals.get(&top.id);
            if let StmtKind::FunctionDef { params, .. } = &top.kind {
                identifiers.extend(params.iter().map(|p| p.name.clone()));
            }
            top.walk_exprs(&mut |e| {
                if let ExprKind::Name(n) = &e.kind {
                    identifiers.insert(n.clone());
                    let bound = local.is_some_and(|l| l.contains(n)) || module_bound.contains(n);
                    if !bound {
                        free_names.insert(n.clone());
                        unresolved.insert(n.clone());
                    }
                }
            });
        }

        let variables = bound_order
            .iter()
            .filter(|n| {
                !unresolved.contains(*n) && !function_names.contains(*n) && !is_reserved(n)
            })
            .cloned()
            .collect();

        ScopeInfo {
            function_names,
            module_bound,
            locals,
            bound_order,
            variables,
            free_names,
            identifiers,
        }
    }

    pub fn is_variable(&self, name: &str) -> bool {
        self.variables.iter().any(|v| v == name)
    }

    /// Whether `candidate` could be introduced without colliding with any
    /// identifier other than `except`.
    pub fn is_fresh(&self, candidate: &str, except: Option<&str>) -> bool {
        if !is_identifier(candidate) || is_reserved(candidate) {
            return false;
        }
        let key = name_key(candidate);
        self.identifiers
            .iter()
            .filter(|id| Some(id.as_str()) != except)
            .all(|id| name_key(id) != key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    #[test]
    fn variables_in_binding_order() {
        let t = parse("def f(a, b):\n    total = 0\n    for i in range(a):\n        total += i\n    return total\n").unwrap();
        let info = ScopeInfo::analyze(&t);
        assert_eq!(info.variables, vec!["a", "b", "total", "i"]);
        assert!(info.free_names.contains("range"));
        assert!(info.function_names.contains("f"));
    }

    #[test]
    fn unresolved_names_are_not_variables() {
        let t = parse("def f():\n    x = 1\n    return x\ndef g():\n    return x\n").unwrap();
        let info = ScopeInfo::analyze(&t);
        assert!(!info.is_variable("x"));
    }

    #[test]
    fn key_is_style_insensitive() {
        assert_eq!(name_key("myVariable"), name_key("_my_variable"));
        assert_eq!(name_key("MY_VARIABLE"), "myvariable");
    }

    #[test]
    fn freshness() {
        let t = parse("def f(arr):\n    total = len(arr)\n    return total\n").unwrap();
        let info = ScopeInfo::analyze(&t);
        assert!(info.is_fresh("value", None));
        assert!(!info.is_fresh("Total", None));
        assert!(info.is_fresh("Total", Some("total")));
        assert!(!info.is_fresh("len", None));
        assert!(!info.is_fresh("for", None));
        assert!(!info.is_fresh("1abc", None));
    }
}
