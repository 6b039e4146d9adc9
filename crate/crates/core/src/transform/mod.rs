//! The watermark channel: syntactic transformation sites and variable renames.

mod loops;
pub mod naming;
pub mod vocab;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntax::scope::{name_key, ScopeInfo};
use crate::syntax::*;
use loops::{CountedLoop, LoopContext};
pub use naming::NamingStyle;
pub use vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    NamingStyle,
    VariableRename,
    LoopType,
    LoopCondition,
    OperatorSubstitution,
    NestedConditions,
    ParenthesesInConditions,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::NamingStyle,
        Family::VariableRename,
        Family::LoopType,
        Family::LoopCondition,
        Family::OperatorSubstitution,
        Family::NestedConditions,
        Family::ParenthesesInConditions,
    ];

    pub fn alternative_count(self) -> usize {
        match self {
            Family::NamingStyle => 5,
            _ => 2,
        }
    }

    pub fn is_syntactic(self) -> bool {
        self != Family::VariableRename
    }

    pub fn alternative_label(self, alt: usize) -> &'static str {
        match (self, alt) {
            (Family::NamingStyle, a) => NamingStyle::from_index(a).map_or("?", |s| s.label()),
            (Family::VariableRename, 0) => "keep",
            (Family::VariableRename, _) => "replace",
            (Family::LoopType, 0) => "for",
            (Family::LoopType, _) => "while",
            (Family::LoopCondition, 0) => "while True",
            (Family::LoopCondition, _) => "while 1",
            (Family::OperatorSubstitution, 0) => "regular",
            (Family::OperatorSubstitution, _) => "augmented",
            (Family::NestedConditions, 0) => "merged",
            (Family::NestedConditions, _) => "nested",
            (Family::ParenthesesInConditions, 0) => "without parentheses",
            (Family::ParenthesesInConditions, _) => "with parentheses",
        }
    }
}

pub const LOOP_FOR: usize = 0;
pub const LOOP_WHILE: usize = 1;
pub const COND_TRUE: usize = 0;
pub const COND_ONE: usize = 1;
pub const OP_REGULAR: usize = 0;
pub const OP_AUGMENTED: usize = 1;
pub const NEST_MERGED: usize = 0;
pub const NEST_NESTED: usize = 1;
pub const PAREN_OFF: usize = 0;
pub const PAREN_ON: usize = 1;

/// What a site is attached to. Statement anchors survive rewrites because
/// rewrites keep statement ids; variable anchors index the unit's variables
/// in order of first binding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Anchor {
    Stmt(NodeId),
    Variable(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformSite {
    pub id: usize,
    pub family: Family,
    pub anchor: Anchor,
    pub span: Span,
    pub current_state: usize,
    pub alternatives: Vec<usize>,
    /// The variable for naming and rename sites.
    pub variable: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformPlan {
    pub choices: BTreeMap<usize, usize>,
    pub renames: BTreeMap<String, String>,
}

impl TransformPlan {
    pub fn is_empty(&self) -> bool {
        self.choices.is_empty() && self.renames.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanTarget {
    Site(usize),
    Rename(String),
}

impl std::fmt::Display for PlanTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanTarget::Site(id) => write!(f, "site {id}"),
            PlanTarget::Rename(n) => write!(f, "rename of `{n}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("invalid plan entry for {target}: {reason}")]
    InvalidPlan { target: PlanTarget, reason: String },
    #[error("renaming to `{name}` would capture an existing identifier")]
    CaptureError { name: String },
}

/// Scope facts plus the site list of one tree.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub scope: ScopeInfo,
    pub sites: Vec<TransformSite>,
    loops: BTreeMap<NodeId, CountedLoop>,
}

impl Analysis {
    pub fn new(tree: &SyntaxTree) -> Self {
        let scope = ScopeInfo::analyze(tree);
        let mut sites = Vec::new();
        let mut loops_found = BTreeMap::new();

        // naming and rename sites, one per variable
        let key_counts = key_counts(&scope.identifiers);
        let mut naming = Vec::new();
        let mut renames = Vec::new();
        for (k, var) in scope.variables.iter().enumerate() {
            let span = first_binding_span(tree, var);
            renames.push(TransformSite {
                id: 0,
                family: Family::VariableRename,
                anchor: Anchor::Variable(k),
                span,
                current_state: 0,
                alternatives: vec![0, 1],
                variable: Some(var.clone()),
            });
            if key_counts.get(&name_key(var)).copied().unwrap_or(0) != 1 {
                continue;
            }
            let Some(current) = naming::stable_style(var) else {
                continue;
            };
            let alternatives: Vec<usize> = NamingStyle::ALL
                .iter()
                .filter(|s| {
                    **s == current
                        || naming::restyle(var, **s)
                            .is_some_and(|n| !scope::is_reserved(&n) && n != *var)
                })
                .map(|s| s.index())
                .collect();
            if alternatives.len() >= 2 {
                naming.push(TransformSite {
                    id: 0,
                    family: Family::NamingStyle,
                    anchor: Anchor::Variable(k),
                    span,
                    current_state: current.index(),
                    alternatives,
                    variable: Some(var.clone()),
                });
            }
        }
        sites.extend(naming);
        sites.extend(renames);

        let mut per_family: BTreeMap<Family, Vec<TransformSite>> = BTreeMap::new();
        let builtin_free = |n: &str| {
            !scope.bound_order.iter().any(|b| b == n) && !scope.function_names.contains(n)
        };
        let module_aliased = loops::aliased_names(&tree.body);
        let module_ctx = LoopContext {
            scope_body: &tree.body,
            params: &[],
            aliased: &module_aliased,
            builtin_free: &builtin_free,
        };
        let mut fn_data = BTreeMap::new();
        for top in &tree.body {
            if let StmtKind::FunctionDef { body, params, .. } = &top.kind {
                let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
                fn_data.insert(top.id, (body.as_slice(), names, loops::aliased_names(body)));
            }
        }
        let fn_ctx: BTreeMap<NodeId, LoopContext> = fn_data
            .iter()
            .map(|(id, (body, params, aliased))| {
                (
                    *id,
                    LoopContext {
                        scope_body: body,
                        params,
                        aliased,
                        builtin_free: &builtin_free,
                    },
                )
            })
            .collect();
        let mut visitor = SiteVisitor {
            ctx: &module_ctx,
            fn_ctx: &fn_ctx,
            out: &mut per_family,
            loops: &mut loops_found,
        };
        visitor.visit_block(&tree.body, None);
        for family in Family::ALL {
            if let Some(list) = per_family.remove(&family) {
                sites.extend(list);
            }
        }
        for (i, s) in sites.iter_mut().enumerate() {
            s.id = i;
        }
        Analysis {
            scope,
            sites,
            loops: loops_found,
        }
    }

    pub fn syntactic_sites(&self) -> impl Iterator<Item = &TransformSite> {
        self.sites.iter().filter(|s| s.family.is_syntactic())
    }

    pub fn rename_sites(&self) -> impl Iterator<Item = &TransformSite> {
        self.sites
            .iter()
            .filter(|s| s.family == Family::VariableRename)
    }

    /// Whether `candidate` can replace `var` given the other replacements
    /// already chosen.
    pub fn rename_allowed(&self, var: &str, candidate: &str, taken: &BTreeSet<String>) -> bool {
        self.scope.is_fresh(candidate, Some(var)) && !taken.contains(&name_key(candidate))
    }
}

fn key_counts(ids: &BTreeSet<String>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for id in ids {
        *m.entry(name_key(id)).or_insert(0) += 1;
    }
    m
}

fn first_binding_span(tree: &SyntaxTree, var: &str) -> Span {
    let mut span = None;
    tree.walk(&mut |s| {
        if span.is_none() && scope::stmt_bindings(s).contains(&var) {
            span = Some(s.span);
        }
    });
    span.unwrap_or_default()
}

use crate::syntax::scope;

struct SiteVisitor<'a, 'b> {
    ctx: &'a LoopContext<'b>,
    fn_ctx: &'a BTreeMap<NodeId, LoopContext<'b>>,
    out: &'a mut BTreeMap<Family, Vec<TransformSite>>,
    loops: &'a mut BTreeMap<NodeId, CountedLoop>,
}

impl SiteVisitor<'_, '_> {
    fn push(&mut self, family: Family, s: &Stmt, current: usize) {
        self.out.entry(family).or_default().push(TransformSite {
            id: 0,
            family,
            anchor: Anchor::Stmt(s.id),
            span: s.span,
            current_state: current,
            alternatives: vec![0, 1],
            variable: None,
        });
    }

    fn visit_block(&mut self, block: &[Stmt], parent_while: Option<&Stmt>) {
        for (j, s) in block.iter().enumerate() {
            match &s.kind {
                StmtKind::For { .. } => {
                    if let Some(info) = loops::for_site(s, self.ctx) {
                        self.push(Family::LoopType, s, LOOP_FOR);
                        self.loops.insert(s.id, info);
                    }
                }
                StmtKind::While { test, .. } => {
                    if let Some(info) = loops::while_site(block, j, self.ctx) {
                        self.push(Family::LoopType, s, LOOP_WHILE);
                        self.loops.insert(s.id, info);
                    }
                    if let Some(state) = loop_condition_state(test) {
                        self.push(Family::LoopCondition, s, state);
                    }
                }
                StmtKind::Assign { .. } | StmtKind::AugAssign { .. } => {
                    if let Some(state) = operator_state(s) {
                        if !loops::is_counter_increment(parent_while, s) {
                            self.push(Family::OperatorSubstitution, s, state);
                        }
                    }
                }
                StmtKind::If { .. } => {
                    if let Some(state) = nesting_state(s) {
                        self.push(Family::NestedConditions, s, state);
                    }
                }
                _ => {}
            }
            match &s.kind {
                StmtKind::If { test, paren, .. } | StmtKind::While { test, paren, .. }
                    if !matches!(test.kind, ExprKind::Tuple(_)) =>
                {
                    self.push(Family::ParenthesesInConditions, s, *paren as usize);
                }
                _ => {}
            }
            let next_parent = matches!(s.kind, StmtKind::While { .. }).then_some(s);
            if let Some(ctx) = self.fn_ctx.get(&s.id) {
                let outer = std::mem::replace(&mut self.ctx, ctx);
                for b in s.blocks() {
                    self.visit_block(b, next_parent);
                }
                self.ctx = outer;
            } else {
                for b in s.blocks() {
                    self.visit_block(b, next_parent);
                }
            }
        }
    }
}

fn loop_condition_state(test: &Expr) -> Option<usize> {
    match &test.kind {
        ExprKind::Const(Constant::True) => Some(COND_TRUE),
        ExprKind::Const(Constant::Int(v)) if v == "1" => Some(COND_ONE),
        _ => None,
    }
}

fn operator_state(s: &Stmt) -> Option<usize> {
    match &s.kind {
        StmtKind::Assign { target, value } => {
            let x = target.as_name()?;
            match &value.kind {
                ExprKind::BinOp { left, .. } if left.as_name() == Some(x) => Some(OP_REGULAR),
                _ => None,
            }
        }
        StmtKind::AugAssign { target, .. } => target.as_name().map(|_| OP_AUGMENTED),
        _ => None,
    }
}

fn is_and(e: &Expr) -> bool {
    matches!(
        e.kind,
        ExprKind::BoolOp {
            op: BoolOpKind::And,
            ..
        }
    )
}

fn single_else_less_if(block: &[Stmt]) -> bool {
    matches!(block, [only] if only.is_else_less_if())
}

fn nesting_state(s: &Stmt) -> Option<usize> {
    let StmtKind::If {
        test, body, orelse, ..
    } = &s.kind
    else {
        return None;
    };
    if !orelse.is_empty() {
        return None;
    }
    if let ExprKind::BoolOp {
        op: BoolOpKind::And,
        values,
    } = &test.kind
    {
        if values.len() == 2
            && !values.iter().any(is_and)
            && !single_else_less_if(body)
            && !matches!(values[0].kind, ExprKind::Tuple(_))
        {
            return Some(NEST_MERGED);
        }
        return None;
    }
    if let [inner] = body.as_slice() {
        if let StmtKind::If {
            test: inner_test,
            body: inner_body,
            orelse: inner_else,
            ..
        } = &inner.kind
        {
            if inner_else.is_empty()
                && !is_and(inner_test)
                && !single_else_less_if(inner_body)
                && !matches!(test.kind, ExprKind::Tuple(_))
            {
                return Some(NEST_NESTED);
            }
        }
    }
    None
}

/// Every site with its current alternative.
pub fn enumerate_sites(tree: &SyntaxTree) -> Vec<TransformSite> {
    Analysis::new(tree).sites
}

/// The plan that reproduces the tree as it stands.
pub fn read_state(tree: &SyntaxTree) -> TransformPlan {
    let analysis = Analysis::new(tree);
    TransformPlan {
        choices: analysis
            .syntactic_sites()
            .map(|s| (s.id, s.current_state))
            .collect(),
        renames: BTreeMap::new(),
    }
}

/// Current state keyed by anchor, used to compare trees across rewrites.
pub fn state_by_anchor(tree: &SyntaxTree) -> BTreeMap<(Family, Anchor), usize> {
    Analysis::new(tree)
        .syntactic_sites()
        .map(|s| ((s.family, s.anchor), s.current_state))
        .collect()
}

pub fn apply_plan(tree: &SyntaxTree, plan: &TransformPlan) -> Result<SyntaxTree, TransformError> {
    let analysis = Analysis::new(tree);
    apply_with(tree, &analysis, plan)
}

/// Apply `plan` using a precomputed analysis of `tree`.
pub fn apply_with(
    tree: &SyntaxTree,
    analysis: &Analysis,
    plan: &TransformPlan,
) -> Result<SyntaxTree, TransformError> {
    let mut by_stmt: BTreeMap<NodeId, Vec<(Family, usize)>> = BTreeMap::new();
    let mut naming_choice: BTreeMap<String, NamingStyle> = BTreeMap::new();
    for (&site_id, &alt) in &plan.choices {
        let site = analysis
            .sites
            .get(site_id)
            .ok_or_else(|| TransformError::InvalidPlan {
                target: PlanTarget::Site(site_id),
                reason: "no such site".into(),
            })?;
        if site.family == Family::VariableRename {
            return Err(TransformError::InvalidPlan {
                target: PlanTarget::Site(site_id),
                reason: "rename sites are driven by the rename map".into(),
            });
        }
        if !site.alternatives.contains(&alt) {
            return Err(TransformError::InvalidPlan {
                target: PlanTarget::Site(site_id),
                reason: format!("alternative {alt} is not applicable"),
            });
        }
        match site.anchor {
            Anchor::Stmt(id) => by_stmt.entry(id).or_default().push((site.family, alt)),
            Anchor::Variable(_) => {
                let var = site.variable.clone().expect("naming site has a variable");
                naming_choice.insert(var, NamingStyle::from_index(alt).expect("style index"));
            }
        }
    }
    let renames = validate_renames(analysis, &plan.renames, true)?;

    let mut out = tree.clone();
    let mut body = std::mem::take(&mut out.body);
    let mut rw = Rewriter {
        choices: &by_stmt,
        loops: &analysis.loops,
        tree: &mut out,
    };
    rw.block(&mut body);
    out.body = body;

    let mut final_names = BTreeMap::new();
    for (var, style) in naming_choice {
        if !renames.contains_key(&var) {
            if let Some(n) = naming::restyle(&var, style) {
                final_names.insert(var, n);
            }
        }
    }
    final_names.extend(renames);
    substitute_names(&mut out, &final_names);
    Ok(out)
}

fn validate_renames(
    analysis: &Analysis,
    renames: &BTreeMap<String, String>,
    as_plan: bool,
) -> Result<BTreeMap<String, String>, TransformError> {
    let mut taken = BTreeSet::new();
    for (var, new) in renames {
        if !analysis.scope.is_variable(var) {
            return Err(TransformError::InvalidPlan {
                target: PlanTarget::Rename(var.clone()),
                reason: "not a renameable variable".into(),
            });
        }
        if !analysis.rename_allowed(var, new, &taken) {
            if as_plan {
                let reason = if scope::is_reserved(new) {
                    "keyword or builtin clash"
                } else if !scope::is_identifier(new) {
                    "not an identifier"
                } else {
                    "capture of an existing identifier"
                };
                return Err(TransformError::InvalidPlan {
                    target: PlanTarget::Rename(var.clone()),
                    reason: reason.into(),
                });
            }
            return Err(TransformError::CaptureError { name: new.clone() });
        }
        taken.insert(name_key(new));
    }
    Ok(renames.clone())
}

/// Capture-avoiding renaming of bound variables.
pub fn rename_variables(
    tree: &SyntaxTree,
    renames: &BTreeMap<String, String>,
) -> Result<SyntaxTree, TransformError> {
    let analysis = Analysis::new(tree);
    validate_renames(&analysis, renames, false)?;
    let mut out = tree.clone();
    substitute_names(&mut out, renames);
    Ok(out)
}

/// Replace every `Name` node and parameter spelled as a key of `map`.
fn substitute_names(tree: &mut SyntaxTree, map: &BTreeMap<String, String>) {
    if map.is_empty() {
        return;
    }
    tree.walk_mut(&mut |s| {
        if let StmtKind::FunctionDef { params, .. } = &mut s.kind {
            for p in params.iter_mut() {
                if let Some(n) = map.get(&p.name) {
                    p.name = n.clone();
                }
            }
        }
        for e in s.own_exprs_mut() {
            e.walk_mut(&mut |x| {
                if let ExprKind::Name(n) = &mut x.kind {
                    if let Some(new) = map.get(n.as_str()) {
                        *n = new.clone();
                    }
                }
            });
        }
    });
}

struct Rewriter<'a> {
    choices: &'a BTreeMap<NodeId, Vec<(Family, usize)>>,
    loops: &'a BTreeMap<NodeId, CountedLoop>,
    tree: &'a mut SyntaxTree,
}

impl Rewriter<'_> {
    fn block(&mut self, block: &mut Vec<Stmt>) {
        let old = std::mem::take(block);
        let mut out: Vec<Stmt> = Vec::with_capacity(old.len() + 2);
        for mut s in old {
            for b in s.blocks_mut() {
                self.block(b);
            }
            let Some(choices) = self.choices.get(&s.id) else {
                out.push(s);
                continue;
            };
            let mut loop_choice = None;
            for &(family, alt) in choices {
                match family {
                    Family::ParenthesesInConditions => set_paren(&mut s, alt == PAREN_ON),
                    Family::LoopCondition => set_loop_condition(&mut s, alt),
                    Family::OperatorSubstitution => set_operator(&mut s, alt),
                    Family::NestedConditions => self.set_nesting(&mut s, alt),
                    Family::LoopType => loop_choice = Some(alt),
                    Family::NamingStyle | Family::VariableRename => {}
                }
            }
            match (loop_choice, &s.kind) {
                (Some(LOOP_WHILE), StmtKind::For { .. }) => {
                    let info = &self.loops[&s.id];
                    let init_id = self.tree.fresh_id();
                    let inc_id = self.tree.fresh_id();
                    out.extend(loops::for_to_while(s, info, init_id, inc_id));
                }
                (Some(LOOP_FOR), StmtKind::While { .. }) => {
                    let info = &self.loops[&s.id];
                    // drop the counter initialisation preceding the loop
                    out.pop();
                    out.push(loops::while_to_for(s, info));
                }
                _ => out.push(s),
            }
        }
        *block = out;
    }

    fn set_nesting(&mut self, s: &mut Stmt, alt: usize) {
        let StmtKind::If { test, body, .. } = &mut s.kind else {
            return;
        };
        match alt {
            NEST_MERGED => {
                if is_and(test) {
                    return;
                }
                let inner = body.pop().expect("nested form has an inner if");
                let StmtKind::If {
                    test: inner_test,
                    body: inner_body,
                    ..
                } = inner.kind
                else {
                    unreachable!("nested form checked at analysis")
                };
                let outer_test = std::mem::replace(test, Expr::name("_"));
                *test = Expr::synthetic(ExprKind::BoolOp {
                    op: BoolOpKind::And,
                    values: vec![outer_test, inner_test],
                });
                *body = inner_body;
            }
            _ => {
                let ExprKind::BoolOp { values, .. } = &mut test.kind else {
                    return;
                };
                let second = values.pop().expect("two operands");
                let first = values.pop().expect("two operands");
                *test = first;
                let inner_body = std::mem::take(body);
                let id = self.tree.fresh_id();
                body.push(Stmt {
                    id,
                    span: Span::synthetic(),
                    kind: StmtKind::If {
                        test: second,
                        body: inner_body,
                        orelse: Vec::new(),
                        paren: false,
                    },
                });
            }
        }
    }
}

fn set_paren(s: &mut Stmt, on: bool) {
    if let StmtKind::If { paren, .. } | StmtKind::While { paren, .. } = &mut s.kind {
        *paren = on;
    }
}

fn set_loop_condition(s: &mut Stmt, alt: usize) {
    if let StmtKind::While { test, .. } = &mut s.kind {
        test.kind = if alt == COND_TRUE {
            ExprKind::Const(Constant::True)
        } else {
            ExprKind::Const(Constant::Int("1".into()))
        };
    }
}

fn set_operator(s: &mut Stmt, alt: usize) {
    let kind = std::mem::replace(&mut s.kind, StmtKind::Pass);
    s.kind = match (kind, alt) {
        (StmtKind::Assign { target, value }, OP_AUGMENTED) => match value.kind {
            ExprKind::BinOp { op, right, .. } => StmtKind::AugAssign {
                target,
                op,
                value: *right,
            },
            other => StmtKind::Assign {
                target,
                value: Expr::new(other, value.span),
            },
        },
        (StmtKind::AugAssign { target, op, value }, OP_REGULAR) => {
            let value = Expr::synthetic(ExprKind::BinOp {
                left: Box::new(target.clone()),
                op,
                right: Box::new(value),
            });
            StmtKind::Assign { target, value }
        }
        (k, _) => k,
    };
}

/// Plan that puts every syntactic site in the given per-family state,
/// skipping sites where that state is not available.
pub fn uniform_plan(analysis: &Analysis, state: impl Fn(Family) -> Option<usize>) -> TransformPlan {
    let mut plan = TransformPlan::default();
    for s in analysis.syntactic_sites() {
        if let Some(alt) = state(s.family) {
            if s.alternatives.contains(&alt) {
                plan.choices.insert(s.id, alt);
            }
        }
    }
    plan
}

/// A uniformly random valid plan: every syntactic site gets a random
/// alternative and each variable is renamed with probability `rename_prob`.
pub fn random_plan<R: Rng + ?Sized>(
    analysis: &Analysis,
    vocab: &Vocabulary,
    rename_prob: f64,
    rng: &mut R,
) -> TransformPlan {
    let mut plan = TransformPlan::default();
    for s in analysis.syntactic_sites() {
        plan.choices
            .insert(s.id, s.alternatives[rng.gen_range(0..s.alternatives.len())]);
    }
    let mut taken = BTreeSet::new();
    for s in analysis.rename_sites() {
        if vocab.is_empty() || !rng.gen_bool(rename_prob) {
            continue;
        }
        let var = s.variable.as_deref().expect("rename site has a variable");
        for _ in 0..20 {
            let w = vocab.word(rng.gen_range(0..vocab.len()));
            if analysis.rename_allowed(var, w, &taken) {
                taken.insert(name_key(w));
                plan.renames.insert(var.to_string(), w.to_string());
                break;
            }
        }
    }
    plan
}
