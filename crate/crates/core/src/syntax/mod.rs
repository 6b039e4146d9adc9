//! Parsing, rendering and normalization for the supported Python subset.

pub mod ast;
pub mod lexer;
mod normalize;
mod parser;
mod render;
pub mod scope;

pub use ast::{
    BinOpKind, BoolOpKind, CmpOp, Constant, Expr, ExprKind, NodeId, Param, Pos, Span, Stmt,
    StmtKind, SyntaxTree, UnaryOpKind,
};
pub use normalize::{normalize, NormalForm};
pub use parser::{is_keyword, parse, KEYWORDS};
pub use render::{expr_to_string, render, render_block};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("unsupported construct `{construct}` at {span}")]
    Unsupported { span: Span, construct: String },
}

/// A piece of source text together with where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub text: String,
    pub origin: String,
}

impl SourceUnit {
    /// Normalizes line endings to LF.
    pub fn new(text: impl Into<String>, origin: impl Into<String>) -> Self {
        let text = text.into().replace("\r\n", "\n").replace('\r', "\n");
        SourceUnit {
            text,
            origin: origin.into(),
        }
    }

    pub fn parse(&self) -> Result<SyntaxTree, ParseError> {
        if self.text.trim().is_empty() {
            return Err(ParseError::Syntax {
                line: 1,
                col: 1,
                message: "empty source".into(),
            });
        }
        parse(&self.text)
    }
}

/// Render a tree as a [`SourceUnit`].
pub fn render_unit(tree: &SyntaxTree, origin: &str) -> SourceUnit {
    SourceUnit::new(render(tree), origin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(src: &str) -> String {
        let t = parse(src).unwrap();
        let out = render(&t);
        let t2 = parse(&out).unwrap_or_else(|e| panic!("{e}\n{out}"));
        assert_eq!(t, t2, "{out}");
        out
    }

    #[test]
    fn minimal_assignment() {
        let t = parse("x = 1").unwrap();
        assert_eq!(t.body.len(), 1);
        match &t.body[0].kind {
            StmtKind::Assign { target, value } => {
                assert_eq!(target.as_name(), Some("x"));
                assert!(value.is_int_literal("1"));
            }
            k => panic!("{k:?}"),
        }
        assert_eq!(render(&t), "x = 1\n");
    }

    #[test]
    fn malformed_def() {
        match parse("def f(:") {
            Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn augmented_render() {
        assert_eq!(roundtrip("x *= 5"), "x *= 5\n");
    }

    #[test]
    fn precedence_parentheses() {
        assert_eq!(roundtrip("x = (a + b) * c"), "x = (a + b) * c\n");
        assert_eq!(roundtrip("x = a - (b - c)"), "x = a - (b - c)\n");
        assert_eq!(roundtrip("x = (a - b) - c"), "x = a - b - c\n");
        assert_eq!(roundtrip("x = -2 ** 2"), "x = -2 ** 2\n");
        assert_eq!(roundtrip("x = (-2) ** 2"), "x = (-2) ** 2\n");
        assert_eq!(roundtrip("x = 2 ** 3 ** 2"), "x = 2 ** 3 ** 2\n");
        assert_eq!(roundtrip("x = (2 ** 3) ** 2"), "x = (2 ** 3) ** 2\n");
        assert_eq!(roundtrip("y = not (a and b) or c"), "y = not (a and b) or c\n");
        assert_eq!(roundtrip("y = (a if b else c) + 1"), "y = (a if b else c) + 1\n");
    }

    #[test]
    fn paren_condition_flag() {
        let t = parse("if (x > 0):\n    pass\nif (a) and (b):\n    pass\n").unwrap();
        assert!(matches!(t.body[0].kind, StmtKind::If { paren: true, .. }));
        assert!(matches!(t.body[1].kind, StmtKind::If { paren: false, .. }));
        assert_eq!(
            render(&t),
            "if (x > 0):\n    pass\nif a and b:\n    pass\n"
        );
    }

    #[test]
    fn check_last_structure() {
        let src = "def check_last(arr, n, p):\n    _sum = 0\n    for i in range(n):\n        _sum = _sum + arr[i]\n    if p == 1:\n        if _sum % 2 == 0:\n            return \"ODD\"\n    return \"EVEN\"\n";
        let t = parse(src).unwrap();
        let StmtKind::FunctionDef { body, .. } = &t.body[0].kind else {
            panic!()
        };
        assert!(matches!(body[1].kind, StmtKind::For { .. }));
        let StmtKind::If { body: inner, .. } = &body[2].kind else {
            panic!()
        };
        assert!(matches!(inner[0].kind, StmtKind::If { .. }));
        assert!(matches!(body[3].kind, StmtKind::Return(_)));
        roundtrip(src);
    }

    #[test]
    fn assorted_constructs_roundtrip() {
        roundtrip("def f(a, b=2):\n    x, y = a[1:], a[::2]\n    d = {'k': [1, 2], 'j': (3,)}\n    s = {1, 2}\n    if a is not None and b not in d:\n        return x.strip().split(',')\n    elif not a:\n        raise ValueError('bad')\n    else:\n        while True:\n            break\n    assert len(a) > 0, 'empty'\n    return sorted(a, key=len, reverse=True)[0]\n");
        roundtrip("def g(m):\n    t = ()\n    u = (1,)\n    for i, (a, b) in enumerate(m):\n        t = t + (a, b)\n    return t, u\n");
        roundtrip("x = 'a' 'b'\ny = \"\"\"doc\nstring\"\"\"\nz = a[i, j]\nw = 1 < 2 < 3\n");
        roundtrip("if a: b = 1; c = 2\n");
    }

    #[test]
    fn unsupported_constructs_report_span() {
        for (src, what) in [
            ("x = [i for i in y]", "comprehension"),
            ("f = lambda x: x", "lambda"),
            ("import os", "import"),
            ("def f():\n    def g():\n        pass\n", "nested function definition"),
            ("class A:\n    pass\n", "class definition"),
            ("a = b = 1", "chained assignment"),
        ] {
            match parse(src) {
                Err(ParseError::Unsupported { construct, span }) => {
                    assert_eq!(construct, what);
                    assert!(span.start.line >= 1);
                }
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    #[test]
    fn deterministic_rendering() {
        let src = "def f(x):\n    return (x + 1) * 2\n";
        assert_eq!(render(&parse(src).unwrap()), render(&parse(src).unwrap()));
    }
}
