use super::ast::*;

const INDENT: &str = "    ";

pub fn render(tree: &SyntaxTree) -> String {
    let mut out = String::new();
    for s in &tree.body {
        render_stmt(s, 0, &mut out);
    }
    out
}

pub fn render_block(stmts: &[Stmt]) -> String {
    let mut out = String::new();
    for s in stmts {
        render_stmt(s, 0, &mut out);
    }
    out
}

fn line(out: &mut String, depth: usize, text: &str) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
    out.push_str(text);
    out.push('\n');
}

fn body(stmts: &[Stmt], depth: usize, out: &mut String) {
    if stmts.is_empty() {
        line(out, depth, "pass");
    }
    for s in stmts {
        render_stmt(s, depth, out);
    }
}

fn condition(test: &Expr, paren: bool) -> String {
    let inner = expr_top(test);
    if paren && !matches!(test.kind, ExprKind::Tuple(_)) {
        format!("({inner})")
    } else {
        inner
    }
}

fn render_stmt(s: &Stmt, depth: usize, out: &mut String) {
    match &s.kind {
        StmtKind::FunctionDef { name, params, body: b } => {
            let ps: Vec<String> = params
                .iter()
                .map(|p| match &p.default {
                    Some(d) => format!("{}={}", p.name, expr(d, 1)),
                    None => p.name.clone(),
                })
                .collect();
            line(out, depth, &format!("def {}({}):", name, ps.join(", ")));
            body(b, depth + 1, out);
        }
        StmtKind::For { target, iter, body: b } => {
            line(
                out,
                depth,
                &format!("for {} in {}:", tuple_bare(target), tuple_bare(iter)),
            );
            body(b, depth + 1, out);
        }
        StmtKind::While { test, body: b, paren } => {
            line(out, depth, &format!("while {}:", condition(test, *paren)));
            body(b, depth + 1, out);
        }
        StmtKind::If { .. } => render_if(s, depth, out, "if"),
        StmtKind::Assign { target, value } => {
            line(
                out,
                depth,
                &format!("{} = {}", tuple_bare(target), tuple_bare(value)),
            );
        }
        StmtKind::AugAssign { target, op, value } => {
            line(
                out,
                depth,
                &format!("{} {}= {}", expr(target, 14), op.symbol(), tuple_bare(value)),
            );
        }
        StmtKind::Return(v) => match v {
            Some(v) => line(out, depth, &format!("return {}", tuple_bare(v))),
            None => line(out, depth, "return"),
        },
        StmtKind::Raise(v) => match v {
            Some(v) => line(out, depth, &format!("raise {}", expr_top(v))),
            None => line(out, depth, "raise"),
        },
        StmtKind::Expr(e) => line(out, depth, &tuple_bare(e)),
        StmtKind::Assert { test, msg } => match msg {
            Some(m) => line(
                out,
                depth,
                &format!("assert {}, {}", expr_top(test), expr_top(m)),
            ),
            None => line(out, depth, &format!("assert {}", expr_top(test))),
        },
        StmtKind::Break => line(out, depth, "break"),
        StmtKind::Continue => line(out, depth, "continue"),
        StmtKind::Pass => line(out, depth, "pass"),
    }
}

fn render_if(s: &Stmt, depth: usize, out: &mut String, keyword: &str) {
    let StmtKind::If {
        test,
        body: b,
        orelse,
        paren,
    } = &s.kind
    else {
        unreachable!()
    };
    line(
        out,
        depth,
        &format!("{keyword} {}:", condition(test, *paren)),
    );
    body(b, depth + 1, out);
    match orelse.as_slice() {
        [] => {}
        [only] if matches!(only.kind, StmtKind::If { .. }) => render_if(only, depth, out, "elif"),
        rest => {
            line(out, depth, "else:");
            body(rest, depth + 1, out);
        }
    }
}

/// Tuples are written without parentheses where the grammar allows it.
fn tuple_bare(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Tuple(items) if !items.is_empty() => {
            let parts: Vec<String> = items.iter().map(|i| expr(i, 1)).collect();
            if parts.len() == 1 {
                format!("{},", parts[0])
            } else {
                parts.join(", ")
            }
        }
        _ => expr_top(e),
    }
}

fn expr_top(e: &Expr) -> String {
    expr(e, 0)
}

pub fn expr_to_string(e: &Expr) -> String {
    expr_top(e)
}

/// Binding strength used to decide where parentheses are needed.
fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::IfExp { .. } => 1,
        ExprKind::BoolOp {
            op: BoolOpKind::Or, ..
        } => 2,
        ExprKind::BoolOp {
            op: BoolOpKind::And,
            ..
        } => 3,
        ExprKind::UnaryOp {
            op: UnaryOpKind::Not,
            ..
        } => 4,
        ExprKind::Compare { .. } => 5,
        ExprKind::BinOp { op, .. } => binop_precedence(*op),
        ExprKind::UnaryOp { .. } => 12,
        _ => 14,
    }
}

fn binop_precedence(op: BinOpKind) -> u8 {
    match op {
        BinOpKind::BitOr => 6,
        BinOpKind::BitXor => 7,
        BinOpKind::BitAnd => 8,
        BinOpKind::LShift | BinOpKind::RShift => 9,
        BinOpKind::Add | BinOpKind::Sub => 10,
        BinOpKind::Mul | BinOpKind::Div | BinOpKind::FloorDiv | BinOpKind::Mod | BinOpKind::MatMul => 11,
        BinOpKind::Pow => 13,
    }
}

/// Render `e` in a context that requires binding strength at least `min`.
fn expr(e: &Expr, min: u8) -> String {
    let s = expr_inner(e);
    if precedence(e) < min {
        format!("({s})")
    } else {
        s
    }
}

fn comma_list(items: &[Expr]) -> String {
    items.iter().map(|i| expr(i, 1)).collect::<Vec<_>>().join(", ")
}

fn expr_inner(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Name(n) => n.clone(),
        ExprKind::Const(c) => match c {
            Constant::Int(v) | Constant::Float(v) | Constant::Str(v) => v.clone(),
            Constant::True => "True".into(),
            Constant::False => "False".into(),
            Constant::None => "None".into(),
        },
        ExprKind::BinOp { left, op, right } => {
            let p = binop_precedence(*op);
            if *op == BinOpKind::Pow {
                format!("{} ** {}", expr(left, p + 1), expr(right, 12))
            } else {
                format!("{} {} {}", expr(left, p), op.symbol(), expr(right, p + 1))
            }
        }
        ExprKind::UnaryOp { op, operand } => match op {
            UnaryOpKind::Not => format!("not {}", expr(operand, 4)),
            UnaryOpKind::Neg => format!("-{}", expr(operand, 12)),
            UnaryOpKind::Pos => format!("+{}", expr(operand, 12)),
            UnaryOpKind::Invert => format!("~{}", expr(operand, 12)),
        },
        ExprKind::BoolOp { op, values } => {
            let (kw, p) = match op {
                BoolOpKind::And => ("and", 3),
                BoolOpKind::Or => ("or", 2),
            };
            values
                .iter()
                .map(|v| expr(v, p + 1))
                .collect::<Vec<_>>()
                .join(&format!(" {kw} "))
        }
        ExprKind::Compare {
            left,
            ops,
            comparators,
        } => {
            let mut s = expr(left, 6);
            for (op, c) in ops.iter().zip(comparators) {
                s.push(' ');
                s.push_str(op.symbol());
                s.push(' ');
                s.push_str(&expr(c, 6));
            }
            s
        }
        ExprKind::Call {
            func,
            args,
            keywords,
        } => {
            let mut parts: Vec<String> = args.iter().map(|a| expr(a, 1)).collect();
            parts.extend(keywords.iter().map(|(k, v)| format!("{k}={}", expr(v, 1))));
            format!("{}({})", expr(func, 14), parts.join(", "))
        }
        ExprKind::Attribute { value, attr } => {
            let base = expr(value, 14);
            // `1.real` would lex as a float
            if matches!(value.kind, ExprKind::Const(Constant::Int(_))) {
                format!("({base}).{attr}")
            } else {
                format!("{base}.{attr}")
            }
        }
        ExprKind::Subscript { value, index } => {
            let idx = match &index.kind {
                ExprKind::Tuple(items) if !items.is_empty() => {
                    let s = comma_list(items);
                    if items.len() == 1 {
                        format!("{s},")
                    } else {
                        s
                    }
                }
                _ => expr(index, 0),
            };
            format!("{}[{}]", expr(value, 14), idx)
        }
        ExprKind::Slice { lower, upper, step } => {
            let part = |p: &Option<Box<Expr>>| p.as_ref().map(|e| expr(e, 1)).unwrap_or_default();
            let mut s = format!("{}:{}", part(lower), part(upper));
            if let Some(st) = step {
                s.push(':');
                s.push_str(&expr(st, 1));
            }
            s
        }
        ExprKind::IfExp { test, body, orelse } => {
            format!("{} if {} else {}", expr(body, 2), expr(test, 2), expr(orelse, 1))
        }
        ExprKind::List(items) => format!("[{}]", comma_list(items)),
        ExprKind::Tuple(items) => {
            if items.len() == 1 {
                format!("({},)", expr(&items[0], 1))
            } else {
                format!("({})", comma_list(items))
            }
        }
        ExprKind::Set(items) => format!("{{{}}}", comma_list(items)),
        ExprKind::Dict(pairs) => {
            let parts: Vec<String> = pairs
                .iter()
                .map(|(k, v)| format!("{}: {}", expr(k, 1), expr(v, 1)))
                .collect();
            format!("{{{}}}", parts.join(", "))
        }
    }
}
