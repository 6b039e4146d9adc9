//! Tree types for the supported Python subset.
//!
//! Equality on [`Stmt`] and [`Expr`] is structural: spans and node ids are
//! ignored, so two trees compare equal when they have the same node kinds,
//! identifiers and constants.

use std::fmt;

/// 1-based line/column position in the source text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl Span {
    pub fn new(start: Pos, end: Pos) -> Self {
        Span { start, end }
    }

    /// Spans attached to nodes synthesized by a rewrite.
    pub fn synthetic() -> Self {
        Span::default()
    }

    pub fn is_synthetic(&self) -> bool {
        self.start.line == 0
    }

    pub fn join(self, other: Span) -> Span {
        Span::new(self.start, other.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}",
            self.start.line, self.start.col, self.end.line, self.end.col
        )
    }
}

/// Statement identifier, unique within one [`SyntaxTree`].
pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOpKind {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
    LShift,
    RShift,
    BitAnd,
    BitOr,
    BitXor,
    MatMul,
}

impl BinOpKind {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOpKind::Add => "+",
            BinOpKind::Sub => "-",
            BinOpKind::Mul => "*",
            BinOpKind::Div => "/",
            BinOpKind::FloorDiv => "//",
            BinOpKind::Mod => "%",
            BinOpKind::Pow => "**",
            BinOpKind::LShift => "<<",
            BinOpKind::RShift => ">>",
            BinOpKind::BitAnd => "&",
            BinOpKind::BitOr => "|",
            BinOpKind::BitXor => "^",
            BinOpKind::MatMul => "@",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "+" => BinOpKind::Add,
            "-" => BinOpKind::Sub,
            "*" => BinOpKind::Mul,
            "/" => BinOpKind::Div,
            "//" => BinOpKind::FloorDiv,
            "%" => BinOpKind::Mod,
            "**" => BinOpKind::Pow,
            "<<" => BinOpKind::LShift,
            ">>" => BinOpKind::RShift,
            "&" => BinOpKind::BitAnd,
            "|" => BinOpKind::BitOr,
            "^" => BinOpKind::BitXor,
            "@" => BinOpKind::MatMul,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOpKind {
    Not,
    Neg,
    Pos,
    Invert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoolOpKind {
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtE,
    Gt,
    GtE,
    In,
    NotIn,
    Is,
    IsNot,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtE => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtE => ">=",
            CmpOp::In => "in",
            CmpOp::NotIn => "not in",
            CmpOp::Is => "is",
            CmpOp::IsNot => "is not",
        }
    }
}

/// Literal constants. Numeric and string literals keep their source spelling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Constant {
    Int(String),
    Float(String),
    Str(String),
    True,
    False,
    None,
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub span: Span,
    pub kind: ExprKind,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Name(String),
    Const(Constant),
    BinOp {
        left: Box<Expr>,
        op: BinOpKind,
        right: Box<Expr>,
    },
    UnaryOp {
        op: UnaryOpKind,
        operand: Box<Expr>,
    },
    BoolOp {
        op: BoolOpKind,
        values: Vec<Expr>,
    },
    Compare {
        left: Box<Expr>,
        ops: Vec<CmpOp>,
        comparators: Vec<Expr>,
    },
    Call {
        func: Box<Expr>,
        args: Vec<Expr>,
        keywords: Vec<(String, Expr)>,
    },
    Attribute {
        value: Box<Expr>,
        attr: String,
    },
    Subscript {
        value: Box<Expr>,
        index: Box<Expr>,
    },
    Slice {
        lower: Option<Box<Expr>>,
        upper: Option<Box<Expr>>,
        step: Option<Box<Expr>>,
    },
    IfExp {
        test: Box<Expr>,
        body: Box<Expr>,
        orelse: Box<Expr>,
    },
    List(Vec<Expr>),
    Tuple(Vec<Expr>),
    Set(Vec<Expr>),
    Dict(Vec<(Expr, Expr)>),
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { span, kind }
    }

    pub fn synthetic(kind: ExprKind) -> Self {
        Expr {
            span: Span::synthetic(),
            kind,
        }
    }

    pub fn name(id: &str) -> Self {
        Expr::synthetic(ExprKind::Name(id.to_string()))
    }

    pub fn int(value: &str) -> Self {
        Expr::synthetic(ExprKind::Const(Constant::Int(value.to_string())))
    }

    pub fn as_name(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Name(n) => Some(n),
            _ => None,
        }
    }

    pub fn is_int_literal(&self, value: &str) -> bool {
        matches!(&self.kind, ExprKind::Const(Constant::Int(v)) if v == value)
    }

    /// Visit this expression and all sub-expressions in source order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Name(_) | ExprKind::Const(_) => {}
            ExprKind::BinOp { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            ExprKind::UnaryOp { operand, .. } => operand.walk(f),
            ExprKind::BoolOp { values, .. } => values.iter().for_each(|v| v.walk(f)),
            ExprKind::Compare {
                left, comparators, ..
            } => {
                left.walk(f);
                comparators.iter().for_each(|c| c.walk(f));
            }
            ExprKind::Call {
                func,
                args,
                keywords,
            } => {
                func.walk(f);
                args.iter().for_each(|a| a.walk(f));
                keywords.iter().for_each(|(_, v)| v.walk(f));
            }
            ExprKind::Attribute { value, .. } => value.walk(f),
            ExprKind::Subscript { value, index } => {
                value.walk(f);
                index.walk(f);
            }
            ExprKind::Slice { lower, upper, step } => {
                for e in [lower, upper, step].into_iter().flatten() {
                    e.walk(f);
                }
            }
            ExprKind::IfExp { test, body, orelse } => {
                body.walk(f);
                test.walk(f);
                orelse.walk(f);
            }
            ExprKind::List(items) | ExprKind::Tuple(items) | ExprKind::Set(items) => {
                items.iter().for_each(|i| i.walk(f))
            }
            ExprKind::Dict(pairs) => pairs.iter().for_each(|(k, v)| {
                k.walk(f);
                v.walk(f);
            }),
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        match &mut self.kind {
            ExprKind::Name(_) | ExprKind::Const(_) => {}
            ExprKind::BinOp { left, right, .. } => {
                left.walk_mut(f);
                right.walk_mut(f);
            }
            ExprKind::UnaryOp { operand, .. } => operand.walk_mut(f),
            ExprKind::BoolOp { values, .. } => values.iter_mut().for_each(|v| v.walk_mut(f)),
            ExprKind::Compare {
                left, comparators, ..
            } => {
                left.walk_mut(f);
                comparators.iter_mut().for_each(|c| c.walk_mut(f));
            }
            ExprKind::Call {
                func,
                args,
                keywords,
            } => {
                func.walk_mut(f);
                args.iter_mut().for_each(|a| a.walk_mut(f));
                keywords.iter_mut().for_each(|(_, v)| v.walk_mut(f));
            }
            ExprKind::Attribute { value, .. } => value.walk_mut(f),
            ExprKind::Subscript { value, index } => {
                value.walk_mut(f);
                index.walk_mut(f);
            }
            ExprKind::Slice { lower, upper, step } => {
                for e in [lower, upper, step].into_iter().flatten() {
                    e.walk_mut(f);
                }
            }
            ExprKind::IfExp { test, body, orelse } => {
                body.walk_mut(f);
                test.walk_mut(f);
                orelse.walk_mut(f);
            }
            ExprKind::List(items) | ExprKind::Tuple(items) | ExprKind::Set(items) => {
                items.iter_mut().for_each(|i| i.walk_mut(f))
            }
            ExprKind::Dict(pairs) => pairs.iter_mut().for_each(|(k, v)| {
                k.walk_mut(f);
                v.walk_mut(f);
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub default: Option<Expr>,
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub id: NodeId,
    pub span: Span,
    pub kind: StmtKind,
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    FunctionDef {
        name: String,
        params: Vec<Param>,
        body: Vec<Stmt>,
    },
    For {
        target: Expr,
        iter: Expr,
        body: Vec<Stmt>,
    },
    While {
        test: Expr,
        body: Vec<Stmt>,
        paren: bool,
    },
    If {
        test: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
        paren: bool,
    },
    Assign {
        target: Expr,
        value: Expr,
    },
    AugAssign {
        target: Expr,
        op: BinOpKind,
        value: Expr,
    },
    Return(Option<Expr>),
    Expr(Expr),
    Assert {
        test: Expr,
        msg: Option<Expr>,
    },
    Raise(Option<Expr>),
    Break,
    Continue,
    Pass,
}

impl Stmt {
    /// Expressions held directly by this statement (not those of nested
    /// statements), in source order.
    pub fn own_exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::FunctionDef { params, .. } => {
                params.iter().filter_map(|p| p.default.as_ref()).collect()
            }
            StmtKind::For { target, iter, .. } => vec![target, iter],
            StmtKind::While { test, .. } => vec![test],
            StmtKind::If { test, .. } => vec![test],
            StmtKind::Assign { target, value } => vec![target, value],
            StmtKind::AugAssign { target, value, .. } => vec![target, value],
            StmtKind::Return(v) | StmtKind::Raise(v) => v.iter().collect(),
            StmtKind::Expr(e) => vec![e],
            StmtKind::Assert { test, msg } => std::iter::once(test).chain(msg.iter()).collect(),
            StmtKind::Break | StmtKind::Continue | StmtKind::Pass => vec![],
        }
    }

    pub fn own_exprs_mut(&mut self) -> Vec<&mut Expr> {
        match &mut self.kind {
            StmtKind::FunctionDef { params, .. } => {
                params.iter_mut().filter_map(|p| p.default.as_mut()).collect()
            }
            StmtKind::For { target, iter, .. } => vec![target, iter],
            StmtKind::While { test, .. } => vec![test],
            StmtKind::If { test, .. } => vec![test],
            StmtKind::Assign { target, value } => vec![target, value],
            StmtKind::AugAssign { target, value, .. } => vec![target, value],
            StmtKind::Return(v) | StmtKind::Raise(v) => v.iter_mut().collect(),
            StmtKind::Expr(e) => vec![e],
            StmtKind::Assert { test, msg } => {
                let mut out = vec![test];
                out.extend(msg.iter_mut());
                out
            }
            StmtKind::Break | StmtKind::Continue | StmtKind::Pass => vec![],
        }
    }

    /// Child statement blocks (bodies and else-branches).
    pub fn blocks(&self) -> Vec<&Vec<Stmt>> {
        match &self.kind {
            StmtKind::FunctionDef { body, .. }
            | StmtKind::For { body, .. }
            | StmtKind::While { body, .. } => vec![body],
            StmtKind::If { body, orelse, .. } => vec![body, orelse],
            _ => vec![],
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<Stmt>> {
        match &mut self.kind {
            StmtKind::FunctionDef { body, .. }
            | StmtKind::For { body, .. }
            | StmtKind::While { body, .. } => vec![body],
            StmtKind::If { body, orelse, .. } => vec![body, orelse],
            _ => vec![],
        }
    }

    /// Pre-order walk over this statement and every nested statement.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        for block in self.blocks() {
            for s in block {
                s.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Stmt)) {
        f(self);
        for block in self.blocks_mut() {
            for s in block.iter_mut() {
                s.walk_mut(f);
            }
        }
    }

    /// Every expression reachable from this statement, nested ones included.
    pub fn walk_exprs<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        self.walk(&mut |s: &'a Stmt| {
            for e in s.own_exprs() {
                e.walk(f);
            }
        });
    }

    pub fn is_else_less_if(&self) -> bool {
        matches!(&self.kind, StmtKind::If { orelse, .. } if orelse.is_empty())
    }
}

/// A parsed code unit: module-level statements, typically one function.
#[derive(Debug, Clone)]
pub struct SyntaxTree {
    pub body: Vec<Stmt>,
    pub(crate) next_id: NodeId,
}

impl PartialEq for SyntaxTree {
    fn eq(&self, other: &Self) -> bool {
        self.body == other.body
    }
}

impl SyntaxTree {
    pub fn new(body: Vec<Stmt>) -> Self {
        let mut tree = SyntaxTree { body, next_id: 0 };
        tree.next_id = tree.max_id().map_or(0, |m| m + 1);
        tree
    }

    fn max_id(&self) -> Option<NodeId> {
        let mut max = None;
        self.walk(&mut |s| max = Some(max.map_or(s.id, |m: NodeId| m.max(s.id))));
        max
    }

    pub fn fresh_id(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        for s in &self.body {
            s.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Stmt)) {
        for s in self.body.iter_mut() {
            s.walk_mut(f);
        }
    }

    pub fn walk_exprs<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        for s in &self.body {
            s.walk_exprs(f);
        }
    }

    pub fn find(&self, id: NodeId) -> Option<&Stmt> {
        let mut found = None;
        self.walk(&mut |s| {
            if s.id == id && found.is_none() {
                found = Some(s);
            }
        });
        found
    }

    pub fn statement_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }
}
