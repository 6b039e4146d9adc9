//! Applicability analysis and rewriting for counted `for`/`while` loops.

use std::collections::BTreeSet;

use crate::syntax::scope::{stmt_bindings, target_names};
use crate::syntax::*;

/// Builtins that never mutate their arguments.
const PURE_CALLS: &[&str] = &[
    "len", "abs", "min", "max", "sum", "sorted", "str", "int", "float", "range", "list", "tuple",
    "set", "enumerate", "zip", "print", "isinstance", "reversed", "any", "all", "ord", "chr",
    "bool", "round", "dict", "frozenset", "divmod", "pow", "hash", "repr", "type",
];

/// A counted loop in either form, reduced to its parts.
#[derive(Debug, Clone)]
pub struct CountedLoop {
    pub var: String,
    /// `None` means the loop starts at literal zero.
    pub start: Option<Expr>,
    pub stop: Expr,
}

fn contains_name(e: &Expr, name: &str) -> bool {
    let mut found = false;
    e.walk(&mut |x| {
        if x.as_name() == Some(name) {
            found = true;
        }
    });
    found
}

fn stmt_mentions(s: &Stmt, name: &str) -> bool {
    stmt_bindings(s).contains(&name) || s.own_exprs().iter().any(|e| contains_name(e, name))
}

fn block_binds(block: &[Stmt], name: &str) -> bool {
    let mut found = false;
    for s in block {
        s.walk(&mut |x| {
            if stmt_bindings(x).contains(&name) {
                found = true;
            }
        });
    }
    found
}

/// `continue` that would skip the increment of the enclosing loop.
fn has_own_continue(block: &[Stmt]) -> bool {
    block.iter().any(|s| match &s.kind {
        StmtKind::Continue => true,
        StmtKind::If { body, orelse, .. } => has_own_continue(body) || has_own_continue(orelse),
        _ => false,
    })
}

/// Whether `name` may be mutated in place by statements of `block`.
fn may_mutate(block: &[Stmt], name: &str) -> bool {
    let mut hit = false;
    for s in block {
        s.walk(&mut |st| {
            let mut targets = Vec::new();
            match &st.kind {
                StmtKind::Assign { target, .. } | StmtKind::AugAssign { target, .. } => {
                    targets.push(target)
                }
                _ => {}
            }
            for t in targets {
                t.walk(&mut |e| {
                    if let ExprKind::Subscript { value, .. } | ExprKind::Attribute { value, .. } =
                        &e.kind
                    {
                        if contains_name(value, name) {
                            hit = true;
                        }
                    }
                });
            }
            for e in st.own_exprs() {
                e.walk(&mut |x| {
                    if let ExprKind::Call { func, args, keywords } = &x.kind {
                        if let ExprKind::Attribute { value, .. } = &func.kind {
                            if contains_name(value, name) {
                                hit = true;
                            }
                        }
                        let pure = func.as_name().is_some_and(|f| PURE_CALLS.contains(&f));
                        let passed = args.iter().chain(keywords.iter().map(|(_, v)| v)).any(|a| {
                            contains_name(a, name)
                        });
                        if passed && !pure {
                            hit = true;
                        }
                    }
                });
            }
        });
    }
    hit
}

/// An expression whose value cannot change while `body` runs.
fn is_stable(e: &Expr, body: &[Stmt], aliased: &BTreeSet<String>, builtin_free: &dyn Fn(&str) -> bool) -> bool {
    match &e.kind {
        ExprKind::Const(Constant::Int(_)) => true,
        ExprKind::Name(n) => {
            !block_binds(body, n) && !may_mutate(body, n) && !aliased.contains(n)
        }
        ExprKind::BinOp { left, right, op } => {
            !matches!(op, BinOpKind::MatMul)
                && is_stable(left, body, aliased, builtin_free)
                && is_stable(right, body, aliased, builtin_free)
        }
        ExprKind::UnaryOp {
            op: UnaryOpKind::Neg,
            operand,
        } => is_stable(operand, body, aliased, builtin_free),
        ExprKind::Call {
            func,
            args,
            keywords,
        } => {
            func.as_name() == Some("len")
                && builtin_free("len")
                && keywords.is_empty()
                && args.len() == 1
                && args[0].as_name().is_some()
                && is_stable(&args[0], body, aliased, builtin_free)
        }
        _ => false,
    }
}

/// Names that may share their value with another name through a plain
/// `a = b` style assignment.
pub fn aliased_names(scope_body: &[Stmt]) -> BTreeSet<String> {
    fn visit(block: &[Stmt], out: &mut BTreeSet<String>) {
        for (j, st) in block.iter().enumerate() {
            if let StmtKind::Assign { target, value } = &st.kind {
                let counter_init = target.as_name().is_some_and(|v| {
                    block
                        .get(j + 1)
                        .and_then(while_shape)
                        .is_some_and(|(w, _, _)| w == v)
                });
                let mut sources = Vec::new();
                match &value.kind {
                    ExprKind::Name(n) => sources.push(n.as_str()),
                    ExprKind::Tuple(items) | ExprKind::List(items) => {
                        sources.extend(items.iter().filter_map(|i| i.as_name()))
                    }
                    _ => {}
                }
                if !sources.is_empty() && !counter_init {
                    let mut targets = Vec::new();
                    target_names(target, &mut targets);
                    out.extend(sources.into_iter().chain(targets).map(str::to_string));
                }
            }
            for b in st.blocks() {
                visit(b, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    visit(scope_body, &mut out);
    out
}

pub struct LoopContext<'a> {
    /// Statements forming the scope that owns the loop variable.
    pub scope_body: &'a [Stmt],
    /// Parameters of the owning function.
    pub params: &'a [String],
    pub aliased: &'a BTreeSet<String>,
    /// Whether a builtin name is unbound everywhere in the unit.
    pub builtin_free: &'a dyn Fn(&str) -> bool,
}

fn range_parts(iter: &Expr) -> Option<(Option<&Expr>, &Expr)> {
    let ExprKind::Call {
        func,
        args,
        keywords,
    } = &iter.kind
    else {
        return None;
    };
    if func.as_name() != Some("range") || !keywords.is_empty() {
        return None;
    }
    match args.as_slice() {
        [stop] => Some((None, stop)),
        [start, stop] if !start.is_int_literal("0") => Some((Some(start), stop)),
        _ => None,
    }
}

/// The start value is evaluated exactly once in both forms, so it only has to
/// be independent of the counter.
fn start_ok(start: Option<&Expr>, var: &str) -> bool {
    start.is_none_or(|s| {
        !contains_name(s, var) && !matches!(s.kind, ExprKind::Const(Constant::Float(_)))
    })
}

fn common_ok(var: &str, stop: &Expr, body: &[Stmt], ctx: &LoopContext) -> bool {
    !body.is_empty()
        && !has_own_continue(body)
        && !block_binds(body, var)
        && !contains_name(stop, var)
        && is_stable(stop, body, ctx.aliased, ctx.builtin_free)
        && !ctx.params.iter().any(|p| p == var)
}

/// A `for` loop usable as a loop-type site.
pub fn for_site(s: &Stmt, ctx: &LoopContext) -> Option<CountedLoop> {
    let StmtKind::For { target, iter, body } = &s.kind else {
        return None;
    };
    let var = target.as_name()?;
    if !(ctx.builtin_free)("range") {
        return None;
    }
    let (start, stop) = range_parts(iter)?;
    if !common_ok(var, stop, body, ctx) || !start_ok(start, var) {
        return None;
    }
    if !occurrences_confined(ctx.scope_body, var, &[s.id]) {
        return None;
    }
    Some(CountedLoop {
        var: var.to_string(),
        start: start.cloned(),
        stop: stop.clone(),
    })
}

/// `while var < stop:` whose last statement is the increment `var += 1`.
fn while_shape(s: &Stmt) -> Option<(&str, &Expr, &[Stmt])> {
    let StmtKind::While { test, body, .. } = &s.kind else {
        return None;
    };
    let ExprKind::Compare {
        left,
        ops,
        comparators,
    } = &test.kind
    else {
        return None;
    };
    let var = left.as_name()?;
    if ops.as_slice() != [CmpOp::Lt] {
        return None;
    }
    let (last, rest) = body.split_last()?;
    match &last.kind {
        StmtKind::AugAssign {
            target,
            op: BinOpKind::Add,
            value,
        } if target.as_name() == Some(var) && value.is_int_literal("1") => {}
        _ => return None,
    }
    Some((var, &comparators[0], rest))
}

/// Whether `s` is the trailing counter increment of a `while i < n` loop, in
/// either spelling. Such statements belong to the loop and never act as
/// operator sites.
pub fn is_counter_increment(parent_while: Option<&Stmt>, s: &Stmt) -> bool {
    let Some(w) = parent_while else { return false };
    let StmtKind::While { test, body, .. } = &w.kind else {
        return false;
    };
    if body.last().map(|l| l.id) != Some(s.id) {
        return false;
    }
    let ExprKind::Compare { left, ops, .. } = &test.kind else {
        return false;
    };
    let Some(var) = left.as_name() else { return false };
    if ops.as_slice() != [CmpOp::Lt] {
        return false;
    }
    match &s.kind {
        StmtKind::AugAssign {
            target,
            op: BinOpKind::Add,
            value,
        } => target.as_name() == Some(var) && value.is_int_literal("1"),
        StmtKind::Assign { target, value } => {
            target.as_name() == Some(var)
                && matches!(&value.kind, ExprKind::BinOp { left, op: BinOpKind::Add, right }
                    if left.as_name() == Some(var) && right.is_int_literal("1"))
        }
        _ => false,
    }
}

/// A `while` loop at `block[j]` preceded by its counter initialisation.
pub fn while_site(block: &[Stmt], j: usize, ctx: &LoopContext) -> Option<CountedLoop> {
    if j == 0 {
        return None;
    }
    let s = &block[j];
    let (var, stop, rest) = while_shape(s)?;
    let init = &block[j - 1];
    let StmtKind::Assign { target, value } = &init.kind else {
        return None;
    };
    if target.as_name() != Some(var) {
        return None;
    }
    let start = if value.is_int_literal("0") {
        None
    } else {
        Some(value)
    };
    if !(ctx.builtin_free)("range") {
        return None;
    }
    if !common_ok(var, stop, rest, ctx) || !start_ok(start, var) {
        return None;
    }
    if !occurrences_confined(ctx.scope_body, var, &[init.id, s.id]) {
        return None;
    }
    Some(CountedLoop {
        var: var.to_string(),
        start: start.cloned(),
        stop: stop.clone(),
    })
}

/// Every mention of `var` outside the statements `region` sits inside some
/// other loop that rebinds `var` before reading it.
fn occurrences_confined(scope_body: &[Stmt], var: &str, region: &[u32]) -> bool {
    fn check(block: &[Stmt], var: &str, region: &[u32]) -> bool {
        let mut j = 0;
        while j < block.len() {
            let s = &block[j];
            if region.contains(&s.id) {
                j += 1;
                continue;
            }
            // another loop over the same counter
            if let StmtKind::For { target, iter, .. } = &s.kind {
                if target.as_name() == Some(var) && !contains_name(iter, var) {
                    j += 1;
                    continue;
                }
            }
            if let (StmtKind::Assign { target, value }, Some(next)) = (&s.kind, block.get(j + 1)) {
                if target.as_name() == Some(var)
                    && !contains_name(value, var)
                    && while_shape(next).is_some_and(|(v, _, _)| v == var)
                {
                    j += 2;
                    continue;
                }
            }
            if stmt_mentions(s, var) {
                return false;
            }
            for b in s.blocks() {
                if !check(b, var, region) {
                    return false;
                }
            }
            j += 1;
        }
        true
    }
    check(scope_body, var, region)
}

pub fn for_to_while(s: Stmt, info: &CountedLoop, init_id: NodeId, inc_id: NodeId) -> [Stmt; 2] {
    let StmtKind::For { body, .. } = s.kind else {
        unreachable!("for_to_while on non-for")
    };
    let init = Stmt {
        id: init_id,
        span: Span::synthetic(),
        kind: StmtKind::Assign {
            target: Expr::name(&info.var),
            value: info.start.clone().unwrap_or_else(|| Expr::int("0")),
        },
    };
    let mut body = body;
    body.push(Stmt {
        id: inc_id,
        span: Span::synthetic(),
        kind: StmtKind::AugAssign {
            target: Expr::name(&info.var),
            op: BinOpKind::Add,
            value: Expr::int("1"),
        },
    });
    let test = Expr::synthetic(ExprKind::Compare {
        left: Box::new(Expr::name(&info.var)),
        ops: vec![CmpOp::Lt],
        comparators: vec![info.stop.clone()],
    });
    let w = Stmt {
        id: s.id,
        span: s.span,
        kind: StmtKind::While {
            test,
            body,
            paren: false,
        },
    };
    [init, w]
}

pub fn while_to_for(s: Stmt, info: &CountedLoop) -> Stmt {
    let StmtKind::While { mut body, .. } = s.kind else {
        unreachable!("while_to_for on non-while")
    };
    body.pop();
    let mut args = Vec::new();
    if let Some(start) = &info.start {
        args.push(start.clone());
    }
    args.push(info.stop.clone());
    let iter = Expr::synthetic(ExprKind::Call {
        func: Box::new(Expr::name("range")),
        args,
        keywords: Vec::new(),
    });
    Stmt {
        id: s.id,
        span: s.span,
        kind: StmtKind::For {
            target: Expr::name(&info.var),
            iter,
            body,
        },
    }
}
