use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn parse(src: &str) -> Result<SyntaxTree, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        toks: tokens,
        i: 0,
        next_id: 0,
        fn_depth: 0,
    };
    let body = p.file()?;
    Ok(SyntaxTree::new(body))
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    next_id: NodeId,
    fn_depth: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn tok(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_tok(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn span(&self) -> Span {
        self.toks[self.i].span
    }

    fn prev_end(&self) -> Pos {
        if self.i == 0 {
            self.toks[0].span.start
        } else {
            self.toks[self.i - 1].span.end
        }
    }

    fn advance(&mut self) -> &Token {
        let t = &self.toks[self.i];
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.tok(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.tok(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let s = self.span().start;
        ParseError::Syntax {
            line: s.line,
            col: s.col,
            message: message.into(),
        }
    }

    fn unsupported(&self, construct: &str) -> ParseError {
        ParseError::Unsupported {
            span: self.span(),
            construct: construct.to_string(),
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.error_here(format!("expected '{op}', found {}", describe(self.tok()))))
        }
    }

    fn expect_newline(&mut self) -> PResult<()> {
        match self.tok() {
            Tok::Newline => {
                self.advance();
                Ok(())
            }
            Tok::Eof => Ok(()),
            t => Err(self.error_here(format!("expected end of line, found {}", describe(t)))),
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.tok().clone() {
            Tok::Name(n) if !is_keyword(&n) => {
                self.advance();
                Ok(n)
            }
            t => Err(self.error_here(format!("expected identifier, found {}", describe(&t)))),
        }
    }

    fn new_stmt(&mut self, kind: StmtKind, start: Pos) -> Stmt {
        let id = self.next_id;
        self.next_id += 1;
        Stmt {
            id,
            span: Span::new(start, self.prev_end()),
            kind,
        }
    }

    /// Reserve an id before parsing children so ids follow pre-order.
    fn reserve_id(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn file(&mut self) -> PResult<Vec<Stmt>> {
        let mut body = Vec::new();
        loop {
            match self.tok() {
                Tok::Eof => break,
                Tok::Newline => {
                    self.advance();
                }
                Tok::Indent => return Err(self.error_here("unexpected indent")),
                _ => body.extend(self.statement()?),
            }
        }
        Ok(body)
    }

    fn statement(&mut self) -> PResult<Vec<Stmt>> {
        if let Tok::Name(n) = self.tok() {
            match n.as_str() {
                "def" => return Ok(vec![self.funcdef()?]),
                "if" => return Ok(vec![self.if_stmt()?]),
                "while" => return Ok(vec![self.while_stmt()?]),
                "for" => return Ok(vec![self.for_stmt()?]),
                "class" => return Err(self.unsupported("class definition")),
                "try" => return Err(self.unsupported("try statement")),
                "with" => return Err(self.unsupported("with statement")),
                "async" => return Err(self.unsupported("async statement")),
                "elif" | "else" => return Err(self.error_here(format!("unexpected '{n}'"))),
                _ => {}
            }
        }
        if self.is_op("@") {
            return Err(self.unsupported("decorator"));
        }
        self.simple_statements()
    }

    fn simple_statements(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = vec![self.small_statement()?];
        while self.eat_op(";") {
            if matches!(self.tok(), Tok::Newline | Tok::Eof) {
                break;
            }
            out.push(self.small_statement()?);
        }
        self.expect_newline()?;
        Ok(out)
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        if matches!(self.tok(), Tok::Newline) {
            self.advance();
            if !matches!(self.tok(), Tok::Indent) {
                return Err(self.error_here("expected an indented block"));
            }
            self.advance();
            let mut body = Vec::new();
            loop {
                match self.tok() {
                    Tok::Dedent => {
                        self.advance();
                        break;
                    }
                    Tok::Eof => break,
                    Tok::Newline => {
                        self.advance();
                    }
                    _ => body.extend(self.statement()?),
                }
            }
            Ok(body)
        } else {
            self.simple_statements()
        }
    }

    fn funcdef(&mut self) -> PResult<Stmt> {
        if self.fn_depth > 0 {
            return Err(self.unsupported("nested function definition"));
        }
        let start = self.span().start;
        self.advance();
        let id = self.reserve_id();
        let name = self.ident()?;
        self.expect_op("(")?;
        let mut params: Vec<Param> = Vec::new();
        while !self.is_op(")") {
            if self.is_op("*") || self.is_op("**") || self.is_op("/") {
                return Err(self.unsupported("variadic or positional-only parameters"));
            }
            let pname = self.ident()?;
            if self.is_op(":") {
                return Err(self.unsupported("annotation"));
            }
            if params.iter().any(|p| p.name == pname) {
                return Err(self.error_here(format!("duplicate argument '{pname}'")));
            }
            let default = if self.eat_op("=") {
                Some(self.test()?)
            } else {
                if params.iter().any(|p| p.default.is_some()) {
                    return Err(self.error_here("non-default argument follows default argument"));
                }
                None
            };
            params.push(Param {
                name: pname,
                default,
            });
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        if self.is_op("->") {
            return Err(self.unsupported("return annotation"));
        }
        self.fn_depth += 1;
        let body = self.block();
        self.fn_depth -= 1;
        let body = body?;
        Ok(Stmt {
            id,
            span: Span::new(start, self.prev_end()),
            kind: StmtKind::FunctionDef { name, params, body },
        })
    }

    /// Parse a condition, reporting whether it is wrapped as a whole in one
    /// pair of parentheses.
    fn condition(&mut self) -> PResult<(Expr, bool)> {
        let open = self.i;
        let test = self.named_test()?;
        let mut paren = false;
        if matches!(self.toks[open].tok, Tok::Op("(")) && self.i > open + 1 {
            let close = self.i - 1;
            paren = matches!(self.toks[close].tok, Tok::Op(")"))
                && matching_close(&self.toks, open) == Some(close)
                && !matches!(test.kind, ExprKind::Tuple(_));
        }
        Ok((test, paren))
    }

    fn named_test(&mut self) -> PResult<Expr> {
        let e = self.test()?;
        if self.is_op(":=") {
            return Err(self.unsupported("assignment expression"));
        }
        Ok(e)
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let start = self.span().start;
        self.advance();
        let id = self.reserve_id();
        let (test, paren) = self.condition()?;
        let body = self.block()?;
        let orelse = if self.is_kw("elif") {
            vec![self.if_stmt()?]
        } else if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        Ok(Stmt {
            id,
            span: Span::new(start, self.prev_end()),
            kind: StmtKind::If {
                test,
                body,
                orelse,
                paren,
            },
        })
    }

    fn while_stmt(&mut self) -> PResult<Stmt> {
        let start = self.span().start;
        self.advance();
        let id = self.reserve_id();
        let (test, paren) = self.condition()?;
        let body = self.block()?;
        if self.is_kw("else") {
            return Err(self.unsupported("while-else"));
        }
        Ok(Stmt {
            id,
            span: Span::new(start, self.prev_end()),
            kind: StmtKind::While { test, body, paren },
        })
    }

    fn for_stmt(&mut self) -> PResult<Stmt> {
        let start = self.span().start;
        self.advance();
        let id = self.reserve_id();
        let target = self.target_list()?;
        if !self.eat_kw("in") {
            return Err(self.error_here("expected 'in'"));
        }
        let iter = self.testlist()?;
        let body = self.block()?;
        if self.is_kw("else") {
            return Err(self.unsupported("for-else"));
        }
        Ok(Stmt {
            id,
            span: Span::new(start, self.prev_end()),
            kind: StmtKind::For { target, iter, body },
        })
    }

    /// Loop targets: a comma separated list of primaries, stopping at `in`.
    fn target_list(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        let first = self.bitor()?;
        if !self.is_op(",") {
            check_target(&first)?;
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_kw("in") {
                break;
            }
            items.push(self.bitor()?);
        }
        let e = Expr::new(ExprKind::Tuple(items), Span::new(start, self.prev_end()));
        check_target(&e)?;
        Ok(e)
    }

    fn small_statement(&mut self) -> PResult<Stmt> {
        let start = self.span().start;
        if let Tok::Name(n) = self.tok().clone() {
            match n.as_str() {
                "pass" => {
                    self.advance();
                    return Ok(self.new_stmt(StmtKind::Pass, start));
                }
                "break" => {
                    self.advance();
                    return Ok(self.new_stmt(StmtKind::Break, start));
                }
                "continue" => {
                    self.advance();
                    return Ok(self.new_stmt(StmtKind::Continue, start));
                }
                "return" => {
                    self.advance();
                    let value = if self.at_simple_end() {
                        None
                    } else {
                        Some(self.testlist()?)
                    };
                    return Ok(self.new_stmt(StmtKind::Return(value), start));
                }
                "raise" => {
                    self.advance();
                    let value = if self.at_simple_end() {
                        None
                    } else {
                        Some(self.test()?)
                    };
                    if self.is_kw("from") {
                        return Err(self.unsupported("raise-from"));
                    }
                    return Ok(self.new_stmt(StmtKind::Raise(value), start));
                }
                "assert" => {
                    self.advance();
                    let test = self.test()?;
                    let msg = if self.eat_op(",") {
                        Some(self.test()?)
                    } else {
                        None
                    };
                    return Ok(self.new_stmt(StmtKind::Assert { test, msg }, start));
                }
                "import" | "from" => return Err(self.unsupported("import")),
                "global" | "nonlocal" => return Err(self.unsupported("global declaration")),
                "del" => return Err(self.unsupported("del statement")),
                "yield" => return Err(self.unsupported("yield")),
                _ => {}
            }
        }
        let first = self.testlist_star()?;
        if self.is_op("=") {
            self.advance();
            check_target(&first)?;
            let value = self.testlist_star()?;
            if self.is_op("=") {
                return Err(self.unsupported("chained assignment"));
            }
            return Ok(self.new_stmt(
                StmtKind::Assign {
                    target: first,
                    value,
                },
                start,
            ));
        }
        if let Tok::Op(op) = self.tok() {
            if op.len() >= 2 && op.ends_with('=') && !matches!(*op, "==" | "!=" | "<=" | ">=") {
                let sym = &op[..op.len() - 1];
                let Some(bin) = BinOpKind::from_symbol(sym) else {
                    return Err(self.error_here("invalid augmented assignment"));
                };
                if !matches!(
                    first.kind,
                    ExprKind::Name(_) | ExprKind::Subscript { .. } | ExprKind::Attribute { .. }
                ) {
                    return Err(self.error_here("illegal expression for augmented assignment"));
                }
                self.advance();
                let value = self.testlist()?;
                return Ok(self.new_stmt(
                    StmtKind::AugAssign {
                        target: first,
                        op: bin,
                        value,
                    },
                    start,
                ));
            }
        }
        if self.is_op(":") {
            return Err(self.unsupported("annotated assignment"));
        }
        Ok(self.new_stmt(StmtKind::Expr(first), start))
    }

    fn at_simple_end(&self) -> bool {
        matches!(self.tok(), Tok::Newline | Tok::Eof | Tok::Op(";"))
    }

    fn testlist_star(&mut self) -> PResult<Expr> {
        if self.is_op("*") {
            return Err(self.unsupported("starred expression"));
        }
        self.testlist()
    }

    fn testlist(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        let first = self.test()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_simple_end() || self.is_op("=") || self.is_op(":") || self.is_op(")") {
                break;
            }
            if self.is_op("*") {
                return Err(self.unsupported("starred expression"));
            }
            items.push(self.test()?);
        }
        Ok(Expr::new(
            ExprKind::Tuple(items),
            Span::new(start, self.prev_end()),
        ))
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.is_kw("lambda") {
            return Err(self.unsupported("lambda"));
        }
        if self.is_kw("yield") {
            return Err(self.unsupported("yield"));
        }
        let start = self.span().start;
        let body = self.or_test()?;
        if self.eat_kw("if") {
            let test = self.or_test()?;
            if !self.eat_kw("else") {
                return Err(self.error_here("expected 'else' in conditional expression"));
            }
            let orelse = self.test()?;
            return Ok(Expr::new(
                ExprKind::IfExp {
                    test: Box::new(test),
                    body: Box::new(body),
                    orelse: Box::new(orelse),
                },
                Span::new(start, self.prev_end()),
            ));
        }
        Ok(body)
    }

    fn bool_chain(
        &mut self,
        kw: &str,
        op: BoolOpKind,
        next: fn(&mut Self) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let start = self.span().start;
        let first = next(self)?;
        if !self.is_kw(kw) {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw(kw) {
            values.push(next(self)?);
        }
        Ok(Expr::new(
            ExprKind::BoolOp { op, values },
            Span::new(start, self.prev_end()),
        ))
    }

    fn or_test(&mut self) -> PResult<Expr> {
        self.bool_chain("or", BoolOpKind::Or, Self::and_test)
    }

    fn and_test(&mut self) -> PResult<Expr> {
        self.bool_chain("and", BoolOpKind::And, Self::not_test)
    }

    fn not_test(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        if self.eat_kw("not") {
            let operand = self.not_test()?;
            return Ok(Expr::new(
                ExprKind::UnaryOp {
                    op: UnaryOpKind::Not,
                    operand: Box::new(operand),
                },
                Span::new(start, self.prev_end()),
            ));
        }
        self.comparison()
    }

    fn comp_op(&mut self) -> Option<CmpOp> {
        let op = match self.tok() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::NotEq,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::LtE,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::GtE,
            Tok::Name(n) if n == "in" => CmpOp::In,
            Tok::Name(n) if n == "is" => {
                if matches!(self.peek_tok(1), Tok::Name(m) if m == "not") {
                    self.advance();
                    CmpOp::IsNot
                } else {
                    CmpOp::Is
                }
            }
            Tok::Name(n) if n == "not" => {
                if matches!(self.peek_tok(1), Tok::Name(m) if m == "in") {
                    self.advance();
                    CmpOp::NotIn
                } else {
                    return None;
                }
            }
            _ => return None,
        };
        self.advance();
        Some(op)
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        let left = self.bitor()?;
        let mut ops = Vec::new();
        let mut comparators = Vec::new();
        while let Some(op) = self.comp_op() {
            ops.push(op);
            comparators.push(self.bitor()?);
        }
        if ops.is_empty() {
            return Ok(left);
        }
        Ok(Expr::new(
            ExprKind::Compare {
                left: Box::new(left),
                ops,
                comparators,
            },
            Span::new(start, self.prev_end()),
        ))
    }

    fn binary_level(
        &mut self,
        ops: &[&str],
        next: fn(&mut Self) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let start = self.span().start;
        let mut left = next(self)?;
        loop {
            let Tok::Op(op) = self.tok() else { break };
            if !ops.contains(op) {
                break;
            }
            let kind = BinOpKind::from_symbol(op).expect("binary operator");
            self.advance();
            let right = next(self)?;
            left = Expr::new(
                ExprKind::BinOp {
                    left: Box::new(left),
                    op: kind,
                    right: Box::new(right),
                },
                Span::new(start, self.prev_end()),
            );
        }
        Ok(left)
    }

    fn bitor(&mut self) -> PResult<Expr> {
        self.binary_level(&["|"], Self::bitxor)
    }

    fn bitxor(&mut self) -> PResult<Expr> {
        self.binary_level(&["^"], Self::bitand)
    }

    fn bitand(&mut self) -> PResult<Expr> {
        self.binary_level(&["&"], Self::shift)
    }

    fn shift(&mut self) -> PResult<Expr> {
        self.binary_level(&["<<", ">>"], Self::arith)
    }

    fn arith(&mut self) -> PResult<Expr> {
        self.binary_level(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Expr> {
        self.binary_level(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        let op = match self.tok() {
            Tok::Op("-") => Some(UnaryOpKind::Neg),
            Tok::Op("+") => Some(UnaryOpKind::Pos),
            Tok::Op("~") => Some(UnaryOpKind::Invert),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let operand = self.factor()?;
            return Ok(Expr::new(
                ExprKind::UnaryOp {
                    op,
                    operand: Box::new(operand),
                },
                Span::new(start, self.prev_end()),
            ));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        let base = self.atom_expr()?;
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(Expr::new(
                ExprKind::BinOp {
                    left: Box::new(base),
                    op: BinOpKind::Pow,
                    right: Box::new(exp),
                },
                Span::new(start, self.prev_end()),
            ));
        }
        Ok(base)
    }

    fn atom_expr(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        if self.is_kw("await") {
            return Err(self.unsupported("await"));
        }
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let (args, keywords) = self.call_args()?;
                e = Expr::new(
                    ExprKind::Call {
                        func: Box::new(e),
                        args,
                        keywords,
                    },
                    Span::new(start, self.prev_end()),
                );
            } else if self.eat_op("[") {
                let index = self.subscript_list()?;
                self.expect_op("]")?;
                e = Expr::new(
                    ExprKind::Subscript {
                        value: Box::new(e),
                        index: Box::new(index),
                    },
                    Span::new(start, self.prev_end()),
                );
            } else if self.eat_op(".") {
                let attr = match self.tok().clone() {
                    Tok::Name(n) => {
                        self.advance();
                        n
                    }
                    t => {
                        return Err(
                            self.error_here(format!("expected attribute name, found {}", describe(&t)))
                        )
                    }
                };
                e = Expr::new(
                    ExprKind::Attribute {
                        value: Box::new(e),
                        attr,
                    },
                    Span::new(start, self.prev_end()),
                );
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn call_args(&mut self) -> PResult<(Vec<Expr>, Vec<(String, Expr)>)> {
        let mut args = Vec::new();
        let mut keywords: Vec<(String, Expr)> = Vec::new();
        while !self.is_op(")") {
            if self.is_op("*") || self.is_op("**") {
                return Err(self.unsupported("argument unpacking"));
            }
            let is_keyword_arg = matches!(self.tok(), Tok::Name(n) if !is_keyword(n))
                && matches!(self.peek_tok(1), Tok::Op("="));
            if is_keyword_arg {
                let name = self.ident()?;
                self.advance();
                let value = self.test()?;
                keywords.push((name, value));
            } else {
                if !keywords.is_empty() {
                    return Err(self.error_here("positional argument follows keyword argument"));
                }
                let a = self.named_test()?;
                if self.is_kw("for") || self.is_kw("async") {
                    return Err(self.unsupported("comprehension"));
                }
                args.push(a);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok((args, keywords))
    }

    fn subscript_list(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        let first = self.subscript()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            items.push(self.subscript()?);
        }
        Ok(Expr::new(
            ExprKind::Tuple(items),
            Span::new(start, self.prev_end()),
        ))
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        let lower = if self.is_op(":") {
            None
        } else {
            let e = self.test()?;
            if !self.is_op(":") {
                return Ok(e);
            }
            Some(Box::new(e))
        };
        self.expect_op(":")?;
        let bound_end = |p: &Self| p.is_op(":") || p.is_op("]") || p.is_op(",");
        let upper = if bound_end(self) {
            None
        } else {
            Some(Box::new(self.test()?))
        };
        let step = if self.eat_op(":") {
            if self.is_op("]") || self.is_op(",") {
                None
            } else {
                Some(Box::new(self.test()?))
            }
        } else {
            None
        };
        Ok(Expr::new(
            ExprKind::Slice { lower, upper, step },
            Span::new(start, self.prev_end()),
        ))
    }

    fn atom(&mut self) -> PResult<Expr> {
        let start = self.span().start;
        let tok = self.tok().clone();
        let kind = match tok {
            Tok::Name(n) => match n.as_str() {
                "True" => {
                    self.advance();
                    ExprKind::Const(Constant::True)
                }
                "False" => {
                    self.advance();
                    ExprKind::Const(Constant::False)
                }
                "None" => {
                    self.advance();
                    ExprKind::Const(Constant::None)
                }
                "lambda" => return Err(self.unsupported("lambda")),
                "yield" => return Err(self.unsupported("yield")),
                _ if is_keyword(&n) => {
                    return Err(self.error_here(format!("unexpected keyword '{n}'")))
                }
                _ => {
                    self.advance();
                    ExprKind::Name(n)
                }
            },
            Tok::Int(v) => {
                self.advance();
                ExprKind::Const(Constant::Int(v))
            }
            Tok::Float(v) => {
                self.advance();
                ExprKind::Const(Constant::Float(v))
            }
            Tok::Str(s) => {
                self.advance();
                let mut text = s;
                while let Tok::Str(more) = self.tok().clone() {
                    self.advance();
                    text.push(' ');
                    text.push_str(&more);
                }
                ExprKind::Const(Constant::Str(text))
            }
            Tok::Op("(") => {
                self.advance();
                if self.eat_op(")") {
                    ExprKind::Tuple(Vec::new())
                } else {
                    if self.is_op("*") {
                        return Err(self.unsupported("starred expression"));
                    }
                    let first = self.named_test()?;
                    if self.is_kw("for") || self.is_kw("async") {
                        return Err(self.unsupported("comprehension"));
                    }
                    if self.eat_op(")") {
                        // parenthesized expression: keep the inner node
                        return Ok(Expr::new(first.kind, Span::new(start, self.prev_end())));
                    }
                    let mut items = vec![first];
                    while self.eat_op(",") {
                        if self.is_op(")") {
                            break;
                        }
                        if self.is_op("*") {
                            return Err(self.unsupported("starred expression"));
                        }
                        items.push(self.test()?);
                    }
                    self.expect_op(")")?;
                    ExprKind::Tuple(items)
                }
            }
            Tok::Op("[") => {
                self.advance();
                let items = self.seq_items("]")?;
                ExprKind::List(items)
            }
            Tok::Op("{") => {
                self.advance();
                self.brace()?
            }
            Tok::Op("...") => return Err(self.unsupported("ellipsis")),
            t => return Err(self.error_here(format!("unexpected {}", describe(&t)))),
        };
        Ok(Expr::new(kind, Span::new(start, self.prev_end())))
    }

    fn seq_items(&mut self, close: &str) -> PResult<Vec<Expr>> {
        let mut items = Vec::new();
        while !self.is_op(close) {
            if self.is_op("*") {
                return Err(self.unsupported("starred expression"));
            }
            items.push(self.named_test()?);
            if self.is_kw("for") || self.is_kw("async") {
                return Err(self.unsupported("comprehension"));
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(close)?;
        Ok(items)
    }

    fn brace(&mut self) -> PResult<ExprKind> {
        if self.eat_op("}") {
            return Ok(ExprKind::Dict(Vec::new()));
        }
        if self.is_op("**") || self.is_op("*") {
            return Err(self.unsupported("unpacking in display"));
        }
        let first = self.test()?;
        if self.eat_op(":") {
            let v = self.test()?;
            if self.is_kw("for") {
                return Err(self.unsupported("comprehension"));
            }
            let mut pairs = vec![(first, v)];
            while self.eat_op(",") {
                if self.is_op("}") {
                    break;
                }
                if self.is_op("**") {
                    return Err(self.unsupported("unpacking in display"));
                }
                let k = self.test()?;
                self.expect_op(":")?;
                let v = self.test()?;
                pairs.push((k, v));
            }
            self.expect_op("}")?;
            return Ok(ExprKind::Dict(pairs));
        }
        if self.is_kw("for") {
            return Err(self.unsupported("comprehension"));
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("}") {
                break;
            }
            items.push(self.test()?);
        }
        self.expect_op("}")?;
        Ok(ExprKind::Set(items))
    }
}

fn matching_close(toks: &[Token], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (j, t) in toks.iter().enumerate().skip(open) {
        match t.tok {
            Tok::Op("(") | Tok::Op("[") | Tok::Op("{") => depth += 1,
            Tok::Op(")") | Tok::Op("]") | Tok::Op("}") => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

fn check_target(e: &Expr) -> PResult<()> {
    match &e.kind {
        ExprKind::Name(_) | ExprKind::Subscript { .. } | ExprKind::Attribute { .. } => Ok(()),
        ExprKind::Tuple(items) | ExprKind::List(items) if !items.is_empty() => {
            items.iter().try_for_each(check_target)
        }
        _ => Err(ParseError::Syntax {
            line: e.span.start.line,
            col: e.span.start.col,
            message: "cannot assign to expression".into(),
        }),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Name(n) => format!("'{n}'"),
        Tok::Int(v) | Tok::Float(v) => format!("number {v}"),
        Tok::Str(_) => "string".into(),
        Tok::Op(o) => format!("'{o}'"),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indent".into(),
        Tok::Dedent => "dedent".into(),
        Tok::Eof => "end of input".into(),
    }
}
