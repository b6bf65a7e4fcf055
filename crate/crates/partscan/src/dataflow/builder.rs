//! Data-flow graph construction.
//!
//! One pass builds a def-use graph over the entry body (plus one level of
//! callees); role-specific slicing and tagging then carve out the
//! per-parameter graph. Propagation is direct: assignments, call arguments
//! into callee formals, callee returns back to the caller, arithmetic
//! subexpressions, and member reads.

use super::*;
use crate::frontend::ast::{
    Ast, Expr, ExprKind, SizeofArg, Stmt, StmtId, StmtNode, SwitchCase, UnaryOp,
};
use crate::frontend::cfg::build_cfg_from_body;
use crate::tee::classify::{entry_body, find_entry_points, EntryPoint};
use crate::tee::{match_param_access, AccessPath, ApiCatalog, ParamBinding, ParamField, ParamRole};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, Default)]
pub struct FlowOptions {
    /// Propagate parameter identity through raw-pointer formals in call
    /// summaries. Off by default: losing role metadata there reproduces the
    /// baseline's known false negatives.
    pub deep_pointers: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("entry function {0} not found in any parsed unit")]
    UnresolvedEntry(String),
    #[error("cannot build a flow graph for an unclassified parameter")]
    UnknownRole,
}

/// Builds the flow graph for a binding, using the binding's own role as the
/// view. InOut bindings default to the input view; use [`build_flow_view`]
/// to get both directions.
pub fn build_flow(
    binding: &ParamBinding,
    asts: &[Ast],
    catalog: &ApiCatalog,
    opts: &FlowOptions,
) -> Result<FlowGraph, FlowError> {
    let view = match binding.role {
        ParamRole::Input | ParamRole::InOut => ParamRole::Input,
        ParamRole::Output => ParamRole::Output,
        ParamRole::SharedMemory => ParamRole::SharedMemory,
        ParamRole::Unknown => return Err(FlowError::UnknownRole),
    };
    build_flow_view(binding, view, asts, catalog, opts)
}

/// Builds one directional view (`Input`, `Output`, or `SharedMemory`) of a
/// binding's flow graph.
pub fn build_flow_view(
    binding: &ParamBinding,
    view: ParamRole,
    asts: &[Ast],
    catalog: &ApiCatalog,
    opts: &FlowOptions,
) -> Result<FlowGraph, FlowError> {
    let entries = find_entry_points(asts);
    let entry = entries
        .iter()
        .find(|e| e.name == binding.entry_function)
        .ok_or_else(|| FlowError::UnresolvedEntry(binding.entry_function.clone()))?;
    let body = entry_body(asts, entry)
        .ok_or_else(|| FlowError::UnresolvedEntry(binding.entry_function.clone()))?;
    let body: Vec<StmtNode> = match binding.command_id {
        Some(cmd) => prune_to_command(body, entry.cmd_root.as_deref(), cmd),
        None => body.to_vec(),
    };

    let mut walker = Walker {
        asts,
        catalog,
        opts,
        entry,
        nodes: Vec::new(),
        edges: Vec::new(),
        dominance: Vec::new(),
    };
    walker.dominance.push(DomCtx {
        cfg: Some(build_cfg_from_body(&body)),
        callsite: None,
    });
    let mut state = FnState::new(0);
    if !entry.synthetic {
        walker.seed_globals(&mut state);
    }
    walker.walk_stmts(&body, &mut state);

    let mut graph = FlowGraph {
        binding: binding.clone(),
        effective_role: view,
        nodes: walker.nodes,
        edges: walker.edges,
        entry_sources: Vec::new(),
        exec_order: Vec::new(),
        dominance: walker.dominance,
    };
    slice_and_tag(&mut graph);
    renumber(&mut graph);
    Ok(graph)
}

/// Keeps only the statements relevant to one command id: cases of a switch
/// over the command variable with a different constant label are emptied.
fn prune_to_command(body: &[StmtNode], cmd_root: Option<&str>, cmd: u64) -> Vec<StmtNode> {
    fn prune_stmt(s: &StmtNode, cmd_root: Option<&str>, cmd: u64) -> StmtNode {
        let kind = match &s.kind {
            Stmt::Switch { scrutinee, cases } => {
                let on_cmd = cmd_root
                    .map(|c| {
                        AccessPath::of_expr(scrutinee)
                            .map(|p| p.root == c && p.segs.is_empty())
                            .unwrap_or(false)
                    })
                    .unwrap_or(false);
                let cases = cases
                    .iter()
                    .map(|case| {
                        let keep = !on_cmd || case_matches(case, cmd);
                        SwitchCase {
                            labels: case.labels.clone(),
                            body: if keep {
                                case.body
                                    .iter()
                                    .map(|b| prune_stmt(b, cmd_root, cmd))
                                    .collect()
                            } else {
                                Vec::new()
                            },
                            loc: case.loc.clone(),
                        }
                    })
                    .collect();
                Stmt::Switch {
                    scrutinee: scrutinee.clone(),
                    cases,
                }
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => Stmt::If {
                cond: cond.clone(),
                then_branch: then_branch
                    .iter()
                    .map(|b| prune_stmt(b, cmd_root, cmd))
                    .collect(),
                else_branch: else_branch
                    .as_ref()
                    .map(|e| e.iter().map(|b| prune_stmt(b, cmd_root, cmd)).collect()),
            },
            Stmt::While { cond, body } => Stmt::While {
                cond: cond.clone(),
                body: body.iter().map(|b| prune_stmt(b, cmd_root, cmd)).collect(),
            },
            Stmt::DoWhile { body, cond } => Stmt::DoWhile {
                body: body.iter().map(|b| prune_stmt(b, cmd_root, cmd)).collect(),
                cond: cond.clone(),
            },
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => Stmt::For {
                init: init.clone(),
                cond: cond.clone(),
                step: step.clone(),
                body: body.iter().map(|b| prune_stmt(b, cmd_root, cmd)).collect(),
            },
            Stmt::Block(b) => {
                Stmt::Block(b.iter().map(|x| prune_stmt(x, cmd_root, cmd)).collect())
            }
            other => other.clone(),
        };
        StmtNode {
            id: s.id,
            loc: s.loc.clone(),
            kind,
        }
    }
    fn case_matches(case: &SwitchCase, cmd: u64) -> bool {
        case.labels.iter().any(|l| match l {
            None => true, // default
            Some(e) => match e.const_value() {
                Some(v) => v as u64 == cmd,
                None => true, // unresolved label: keep conservatively
            },
        })
    }
    body.iter().map(|s| prune_stmt(s, cmd_root, cmd)).collect()
}

// -------------------------------------------------------------------
// Walk
// -------------------------------------------------------------------

struct Walker<'a> {
    asts: &'a [Ast],
    catalog: &'a ApiCatalog,
    opts: &'a FlowOptions,
    entry: &'a EntryPoint,
    nodes: Vec<FlowNode>,
    edges: Vec<FlowEdge>,
    dominance: Vec<DomCtx>,
}

struct FnState {
    fn_key: usize,
    /// Formal name -> actual path (call-summary substitution).
    subst: BTreeMap<String, AccessPath>,
    /// Resolved path display -> last def node.
    defs: BTreeMap<String, NodeId>,
    /// Variable root -> parameter member it aliases.
    alias: BTreeMap<String, (usize, ParamField)>,
    /// Local fixed-size arrays: name -> element count.
    capacities: BTreeMap<String, i64>,
    loops: Vec<LoopCtx>,
    returns: Vec<NodeId>,
    depth: usize,
}

impl FnState {
    fn new(fn_key: usize) -> Self {
        FnState {
            fn_key,
            subst: BTreeMap::new(),
            defs: BTreeMap::new(),
            alias: BTreeMap::new(),
            capacities: BTreeMap::new(),
            loops: Vec::new(),
            returns: Vec::new(),
            depth: 0,
        }
    }
}

/// Everything an expression contributes to its consumer.
#[derive(Default, Clone)]
struct ExprInfo {
    /// Def/member/call nodes whose values feed the expression.
    uses: Vec<NodeId>,
    /// The whole expression reads exactly this parameter member.
    direct_member: Option<(usize, ParamField)>,
    /// Parameter member the expression resolves to, directly or via alias.
    resolved_param: Option<(usize, ParamField)>,
    /// Bare variable root, when the expression is a plain path.
    path_root: Option<String>,
    /// Display of the resolved path, when the expression is a path.
    path_display: Option<String>,
    has_sizeof: bool,
}

impl ExprInfo {
    fn merge(&mut self, other: ExprInfo) {
        self.uses.extend(other.uses);
        self.has_sizeof |= other.has_sizeof;
    }
}

impl<'a> Walker<'a> {
    fn push_node(
        &mut self,
        state: &FnState,
        stmt: StmtId,
        loc: Loc,
        op_kind: OpKind,
        catalog_class: Option<CatalogClass>,
        symbol: Option<String>,
        detail: NodeDetail,
    ) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(FlowNode {
            id,
            loc,
            op_kind,
            catalog_class,
            tags: NodeTags::default(),
            symbol,
            isc_class: None,
            origin_class: None,
            fn_key: state.fn_key,
            stmt,
            detail,
        });
        id
    }

    fn edge(&mut self, from: NodeId, to: NodeId, fmt_arg: Option<u32>) {
        if from == to {
            return;
        }
        let e = FlowEdge { from, to, fmt_arg };
        if !self.edges.contains(&e) {
            self.edges.push(e);
        }
    }

    /// Applies the call-summary substitution to a raw path.
    fn resolve_path(&self, state: &FnState, p: &AccessPath) -> AccessPath {
        match state.subst.get(&p.root) {
            Some(base) => {
                let mut segs = base.segs.clone();
                segs.extend(p.segs.iter().cloned());
                AccessPath {
                    root: base.root.clone(),
                    segs,
                }
            }
            None => p.clone(),
        }
    }

    fn param_of(&self, path: &AccessPath) -> Option<(usize, ParamField)> {
        match_param_access(path, &self.entry.params_root)
    }

    /// Seeds file-scope declarations of the entry's own unit as assignments
    /// executed before the body.
    fn seed_globals(&mut self, state: &mut FnState) {
        let Some(ast) = self.asts.iter().find(|a| a.path == self.entry.file) else {
            return;
        };
        let globals: Vec<_> = ast.globals.clone();
        for g in &globals {
            if let Some(dim) = g.ty.array_dims.first().and_then(|d| *d) {
                state.capacities.insert(g.name.clone(), dim);
            }
            if let Some(init) = &g.init {
                // Synthetic statement id; globals never collide with body ids
                // because dominance is only queried for body statements.
                let stmt = StmtId(u32::MAX - self.nodes.len() as u32);
                self.process_assign_parts(
                    state,
                    stmt,
                    g.loc.clone(),
                    Some(AccessPath::ident(g.name.clone())),
                    init.clone(),
                );
            }
        }
    }

    fn walk_stmts(&mut self, stmts: &[StmtNode], state: &mut FnState) {
        for s in stmts {
            self.walk_stmt(s, state);
        }
    }

    fn walk_stmt(&mut self, s: &StmtNode, state: &mut FnState) {
        match &s.kind {
            Stmt::Decl(d) => {
                if let Some(dim) = d.ty.array_dims.first().and_then(|x| *x) {
                    state.capacities.insert(d.name.clone(), dim);
                }
                if let Some(init) = &d.init {
                    self.process_assign_parts(
                        state,
                        s.id,
                        s.loc.clone(),
                        Some(AccessPath::ident(d.name.clone())),
                        init.clone(),
                    );
                }
            }
            Stmt::Expr(e) => {
                self.eval_expr(e, s.id, state, true);
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let info = self.eval_expr(cond, s.id, state, false);
                let cid = self.push_node(
                    state,
                    s.id,
                    s.loc.clone(),
                    OpKind::CondExpr,
                    None,
                    None,
                    NodeDetail::CondExpr { is_loop_cond: false },
                );
                for u in &info.uses {
                    self.edge(*u, cid, None);
                }
                self.walk_stmts(then_branch, state);
                if let Some(eb) = else_branch {
                    self.walk_stmts(eb, state);
                }
            }
            Stmt::While { cond, body } | Stmt::DoWhile { body, cond } => {
                let info = self.eval_expr(cond, s.id, state, false);
                let cid = self.push_node(
                    state,
                    s.id,
                    s.loc.clone(),
                    OpKind::CondExpr,
                    None,
                    None,
                    NodeDetail::CondExpr { is_loop_cond: true },
                );
                for u in &info.uses {
                    self.edge(*u, cid, None);
                }
                state.loops.push(LoopCtx {
                    cond_node: cid,
                    induction_root: None,
                });
                self.walk_stmts(body, state);
                state.loops.pop();
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                if let Some(i) = init {
                    self.walk_stmt(i, state);
                }
                let cid = self.push_node(
                    state,
                    s.id,
                    s.loc.clone(),
                    OpKind::CondExpr,
                    None,
                    None,
                    NodeDetail::CondExpr { is_loop_cond: true },
                );
                if let Some(c) = cond {
                    let info = self.eval_expr(c, s.id, state, false);
                    for u in &info.uses {
                        self.edge(*u, cid, None);
                    }
                }
                let induction_root = step.as_ref().and_then(step_target_root);
                state.loops.push(LoopCtx {
                    cond_node: cid,
                    induction_root,
                });
                self.walk_stmts(body, state);
                if let Some(st) = step {
                    self.eval_expr(st, s.id, state, false);
                }
                state.loops.pop();
            }
            Stmt::Switch { scrutinee, cases } => {
                self.eval_expr(scrutinee, s.id, state, false);
                for case in cases {
                    for l in case.labels.iter().flatten() {
                        self.eval_expr(l, s.id, state, false);
                    }
                    self.walk_stmts(&case.body, state);
                }
            }
            Stmt::Return(e) => {
                let mut uses = Vec::new();
                if let Some(expr) = e {
                    uses = self.eval_expr(expr, s.id, state, false).uses;
                }
                let rid = self.push_node(
                    state,
                    s.id,
                    s.loc.clone(),
                    OpKind::Return,
                    None,
                    None,
                    NodeDetail::Return,
                );
                for u in uses {
                    self.edge(u, rid, None);
                }
                state.returns.push(rid);
            }
            Stmt::Block(b) => self.walk_stmts(b, state),
            Stmt::Break | Stmt::Continue | Stmt::Empty => {}
        }
    }

    /// Evaluates an expression for its data-flow contribution, creating
    /// member-read / array-access / call / assignment nodes as needed.
    /// `stmt_level` is true for full expression statements.
    fn eval_expr(&mut self, e: &Expr, stmt: StmtId, state: &mut FnState, stmt_level: bool) -> ExprInfo {
        match &e.kind {
            ExprKind::Assign { op, target, value } => {
                let mut value_expr = (**value).clone();
                if op.is_some() {
                    // Compound assignment also uses the previous value.
                    value_expr = Expr {
                        loc: value.loc.clone(),
                        kind: ExprKind::Binary {
                            op: op.unwrap_or("+"),
                            lhs: target.clone(),
                            rhs: Box::new(value_expr),
                        },
                    };
                }
                if let ExprKind::Index { base, index } = &target.kind {
                    // Subscript write: an array-access node carries the
                    // base/index structure the rules need.
                    let vinfo = self.eval_expr(&value_expr, stmt, state, false);
                    return self.array_access(
                        target,
                        base,
                        index,
                        stmt,
                        state,
                        true,
                        Some(vinfo.uses),
                    );
                }
                let tpath = AccessPath::of_expr(target).map(|p| self.resolve_path(state, &p));
                let id = self.process_assign_parts(state, stmt, e.loc.clone(), tpath, value_expr);
                ExprInfo {
                    uses: id.into_iter().collect(),
                    ..Default::default()
                }
            }
            ExprKind::Call { callee, args } => {
                let id = self.process_call(e, callee, args, stmt, state);
                ExprInfo {
                    uses: id.into_iter().collect(),
                    ..Default::default()
                }
            }
            ExprKind::Ident(_) | ExprKind::Member { .. } | ExprKind::Index { .. } => {
                self.eval_path_expr(e, stmt, state)
            }
            ExprKind::Unary { op, operand } => {
                let mut info = match op {
                    UnaryOp::Deref | UnaryOp::AddrOf => self.eval_path_expr(operand, stmt, state),
                    _ => self.eval_expr(operand, stmt, state, false),
                };
                // `&x` / `*p` / `p++` keep x's uses; identity info is dropped
                // except for address-of which preserves the alias root.
                if !matches!(op, UnaryOp::AddrOf) {
                    info.direct_member = None;
                    info.path_root = info.path_root.take();
                }
                let _ = stmt_level;
                info
            }
            ExprKind::Binary { lhs, rhs, .. } => {
                let mut a = self.eval_expr(lhs, stmt, state, false);
                let b = self.eval_expr(rhs, stmt, state, false);
                // Pointer arithmetic on an alias keeps the alias root.
                let root = match (&a.path_root, &b.path_root) {
                    (Some(r), None) => Some(r.clone()),
                    (None, Some(r)) => Some(r.clone()),
                    _ => None,
                };
                a.merge(b);
                a.direct_member = None;
                a.path_root = root;
                a.path_display = None;
                a.resolved_param = None;
                a
            }
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                let mut i = self.eval_expr(cond, stmt, state, false);
                i.merge(self.eval_expr(then_expr, stmt, state, false));
                i.merge(self.eval_expr(else_expr, stmt, state, false));
                i.direct_member = None;
                i
            }
            ExprKind::Cast { operand, .. } => self.eval_expr(operand, stmt, state, false),
            ExprKind::Sizeof(arg) => {
                let mut info = ExprInfo {
                    has_sizeof: true,
                    ..Default::default()
                };
                if let SizeofArg::Expr(inner) = arg.as_ref() {
                    // sizeof does not read the value; ignore uses.
                    let _ = inner;
                }
                info.direct_member = None;
                info
            }
            ExprKind::InitList(inits) => {
                let mut info = ExprInfo::default();
                for i in inits {
                    let v = self.eval_expr(&i.value, stmt, state, false);
                    info.merge(v);
                }
                info
            }
            ExprKind::Comma(a, b) => {
                let mut i = self.eval_expr(a, stmt, state, false);
                i.merge(self.eval_expr(b, stmt, state, false));
                i
            }
            ExprKind::IntLit(_) | ExprKind::StrLit(_) => ExprInfo::default(),
        }
    }

    /// Path-shaped expressions: identifiers, member chains, subscripts.
    fn eval_path_expr(&mut self, e: &Expr, stmt: StmtId, state: &mut FnState) -> ExprInfo {
        let raw = AccessPath::of_expr(e);
        if let Some(raw) = raw {
            let resolved = self.resolve_path(state, &raw);
            let param = self.param_of(&resolved);
            let trailing_index = matches!(resolved.segs.last(), Some(crate::tee::PathSeg::Index(_)))
                && resolved.segs.len() > 1;
            if let Some((idx, field)) = param {
                if !trailing_index || field == ParamField::Whole {
                    // Plain member read (params[i].memref.size, params[i]).
                    let id = self.member_read(state, stmt, e.loc.clone(), idx, field, &resolved);
                    return ExprInfo {
                        uses: vec![id],
                        direct_member: Some((idx, field)),
                        resolved_param: Some((idx, field)),
                        path_root: if resolved.segs.is_empty() {
                            Some(resolved.root.clone())
                        } else {
                            None
                        },
                        path_display: Some(resolved.display()),
                        ..Default::default()
                    };
                }
            }
            if let ExprKind::Index { base, index } = &e.kind {
                return self.array_access(e, base, index, stmt, state, false, None);
            }
            // Plain variable or struct path.
            let display = resolved.display();
            let mut uses = Vec::new();
            if let Some(def) = state.defs.get(&display) {
                uses.push(*def);
            } else if resolved.segs.iter().any(|s| matches!(s, crate::tee::PathSeg::Field(_))) {
                // Field read of a struct var: fall back to the root def.
                if let Some(def) = state.defs.get(&resolved.root) {
                    uses.push(*def);
                }
            }
            let resolved_param = state.alias.get(&resolved.root).copied().filter(|_| {
                resolved.segs.is_empty()
                    || matches!(resolved.segs.as_slice(), [crate::tee::PathSeg::Deref])
            });
            return ExprInfo {
                uses,
                direct_member: None,
                resolved_param,
                path_root: if resolved.segs.is_empty() {
                    Some(resolved.root.clone())
                } else {
                    None
                },
                path_display: Some(display),
                ..Default::default()
            };
        }
        // Not a plain path (e.g. call().field or (a+b)[i]).
        match &e.kind {
            ExprKind::Index { base, index } => {
                self.array_access(e, base, index, stmt, state, false, None)
            }
            ExprKind::Member { base, .. } => self.eval_expr(base, stmt, state, false),
            _ => self.eval_expr(e, stmt, state, false),
        }
    }

    fn member_read(
        &mut self,
        state: &FnState,
        stmt: StmtId,
        loc: Loc,
        index: usize,
        field: ParamField,
        path: &AccessPath,
    ) -> NodeId {
        let id = self.push_node(
            state,
            stmt,
            loc,
            OpKind::MemberRead,
            None,
            Some(path.display()),
            NodeDetail::MemberRead { index, field },
        );
        let class = if field.is_size() {
            OriginClass::LengthExpr
        } else {
            OriginClass::ParamMember
        };
        self.nodes[id.0 as usize].origin_class = Some(class);
        id
    }

    /// Subscript access `base[index]`, read or write.
    #[allow(clippy::too_many_arguments)]
    fn array_access(
        &mut self,
        whole: &Expr,
        base: &Expr,
        index: &Expr,
        stmt: StmtId,
        state: &mut FnState,
        is_write: bool,
        value_uses: Option<Vec<NodeId>>,
    ) -> ExprInfo {
        let base_info = self.eval_path_expr(base, stmt, state);
        let index_info = self.eval_expr(index, stmt, state, false);
        let base_param = base_info.direct_member.or(base_info.resolved_param);
        let base_root = base_info
            .path_root
            .clone()
            .or_else(|| AccessPath::of_expr(base).map(|p| self.resolve_path(state, &p).root));
        let base_capacity = base_root
            .as_ref()
            .and_then(|r| state.capacities.get(r).copied());
        let index_root = AccessPath::of_expr(index)
            .map(|p| self.resolve_path(state, &p))
            .filter(|p| p.segs.is_empty())
            .map(|p| p.root);
        let loop_ctx = state.loops.last().cloned();
        let id = self.push_node(
            state,
            stmt,
            whole.loc.clone(),
            OpKind::ArrayAccess,
            None,
            Some(display_of(whole)),
            NodeDetail::ArrayAccess {
                is_write,
                base_param,
                base_root,
                base_capacity,
                index_defs: index_info.uses.clone(),
                index_root,
                loop_ctx,
            },
        );
        for u in base_info.uses.iter().chain(index_info.uses.iter()) {
            self.edge(*u, id, None);
        }
        if let Some(vs) = value_uses {
            for v in vs {
                self.edge(v, id, None);
            }
        }
        ExprInfo {
            uses: vec![id],
            ..Default::default()
        }
    }

    /// Assignment or declaration-with-initializer.
    fn process_assign_parts(
        &mut self,
        state: &mut FnState,
        stmt: StmtId,
        loc: Loc,
        target: Option<AccessPath>,
        value: Expr,
    ) -> Option<NodeId> {
        let vinfo = self.eval_expr(&value, stmt, state, false);
        let param_lhs = target.as_ref().and_then(|t| self.param_of(t));
        let rhs_direct_member = vinfo.direct_member;

        // Alias bookkeeping (buffer pointers only).
        let mut alias_created = None;
        if let Some(t) = &target {
            if t.segs.is_empty() {
                let from_member = rhs_direct_member.filter(|(_, f)| f.is_buffer());
                let from_alias = vinfo
                    .path_root
                    .as_ref()
                    .and_then(|r| state.alias.get(r).copied());
                match from_member.or(from_alias) {
                    Some(a) => {
                        state.alias.insert(t.root.clone(), a);
                        alias_created = Some(a);
                    }
                    None => {
                        state.alias.remove(&t.root);
                    }
                }
            }
        }

        let symbol = target.as_ref().map(|t| t.display());
        let id = self.push_node(
            state,
            stmt,
            loc,
            OpKind::Assign,
            None,
            symbol.clone(),
            NodeDetail::Assign {
                param_lhs,
                rhs_direct_member,
                alias_created,
            },
        );
        for u in &vinfo.uses {
            self.edge(*u, id, None);
        }
        if vinfo.uses.is_empty() {
            self.nodes[id.0 as usize].origin_class = Some(if vinfo.has_sizeof {
                OriginClass::LengthExpr
            } else {
                OriginClass::Data
            });
        }
        if let Some(sym) = symbol {
            state.defs.insert(sym, id);
        }
        Some(id)
    }

    fn process_call(
        &mut self,
        whole: &Expr,
        callee: &Expr,
        args: &[Expr],
        stmt: StmtId,
        state: &mut FnState,
    ) -> Option<NodeId> {
        let name = match &callee.kind {
            ExprKind::Ident(n) => n.clone(),
            _ => {
                // Function pointers: evaluate args for effects only.
                for a in args {
                    self.eval_expr(a, stmt, state, false);
                }
                return None;
            }
        };
        let infos: Vec<ExprInfo> = args
            .iter()
            .map(|a| self.eval_path_or_value(a, stmt, state))
            .collect();

        let copy_sig = self.catalog.copy_sig(&name).copied();
        let fmt_sig = self.catalog.fmt_sig(&name).copied();
        let alloc_sig = self.catalog.alloc_sig(&name).copied();
        let catalog_class = if self.catalog.is_enc(&name) {
            Some(CatalogClass::Enc)
        } else if copy_sig.is_some() {
            Some(CatalogClass::Copy)
        } else if alloc_sig.is_some() {
            Some(CatalogClass::Alloc)
        } else if self.catalog.is_cmp(&name) {
            Some(CatalogClass::Cmp)
        } else if fmt_sig.is_some() {
            Some(CatalogClass::Fmt)
        } else {
            None
        };

        let mut arg_param_uses = Vec::new();
        for (pos, info) in infos.iter().enumerate() {
            if let Some(p) = info.direct_member.or(info.resolved_param) {
                arg_param_uses.push((pos, p));
            }
        }

        // Copy/fmt destination resolution.
        let dest_pos = copy_sig.map(|s| s.dest).or(fmt_sig.map(|s| s.dest));
        let dest_info = dest_pos.and_then(|p| infos.get(p));
        let dest_param = dest_info.and_then(|i| i.direct_member.or(i.resolved_param));
        let dest_prev_def = dest_info
            .and_then(|i| i.path_display.as_ref())
            .and_then(|d| state.defs.get(d).copied());

        let mut size_defs = Vec::new();
        if let Some(sig) = alloc_sig {
            if let Some(i) = infos.get(sig.size) {
                size_defs = i.uses.clone();
            }
        }

        let mut src_defs = Vec::new();
        let mut value_defs = Vec::new();
        if let Some(sig) = copy_sig {
            if let Some(i) = infos.get(sig.src) {
                src_defs.extend(i.uses.iter().copied());
                value_defs.extend(i.uses.iter().copied());
            }
            if let Some(l) = sig.len {
                if let Some(i) = infos.get(l) {
                    src_defs.extend(i.uses.iter().copied());
                }
            }
        }
        let mut fmt_args = Vec::new();
        if let Some(sig) = fmt_sig {
            if let Some(l) = sig.len {
                if let Some(i) = infos.get(l) {
                    src_defs.extend(i.uses.iter().copied());
                }
            }
            for (pos, (arg, info)) in args.iter().zip(infos.iter()).enumerate() {
                if pos < sig.variadic {
                    continue;
                }
                fmt_args.push(FmtArg {
                    pos,
                    symbol: display_of(arg),
                    defs: info.uses.clone(),
                });
                src_defs.extend(info.uses.iter().copied());
            }
        }

        let symbol = dest_info
            .and_then(|i| i.path_display.clone())
            .or(Some(name.clone()));
        let id = self.push_node(
            state,
            stmt,
            whole.loc.clone(),
            OpKind::Call,
            catalog_class,
            symbol,
            NodeDetail::Call {
                name: name.clone(),
                arg_param_uses,
                dest_param,
                dest_prev_def,
                size_defs,
                fmt_args: fmt_args.clone(),
                src_defs,
                value_defs,
            },
        );

        // Argument uses feed the call; variadic edges carry their position.
        for (pos, info) in infos.iter().enumerate() {
            let fmt_pos = fmt_sig
                .filter(|s| pos >= s.variadic)
                .map(|_| pos as u32);
            for u in &info.uses {
                self.edge(*u, id, fmt_pos);
            }
        }

        // Length-returning helpers mark their value non-sensitive.
        if matches!(name.as_str(), "strlen" | "strnlen" | "wcslen") {
            self.nodes[id.0 as usize].origin_class = Some(OriginClass::LengthExpr);
        }

        // A copy defines its destination; encryption re-defines every
        // pointer argument it touched.
        if copy_sig.is_some() || fmt_sig.is_some() {
            if let Some(d) = dest_info.and_then(|i| i.path_display.clone()) {
                state.defs.insert(d, id);
            }
        }
        if self.catalog.is_enc(&name) {
            for info in &infos {
                if let Some(d) = &info.path_display {
                    state.defs.insert(d.clone(), id);
                }
            }
        }

        // Depth-1 call summary into a function defined in the scan.
        if state.depth == 0 {
            self.summarize_call(&name, args, &infos, id, stmt, state);
        }
        Some(id)
    }

    /// Array-access arguments need path info; everything else is a value.
    fn eval_path_or_value(&mut self, a: &Expr, stmt: StmtId, state: &mut FnState) -> ExprInfo {
        match &a.kind {
            ExprKind::Ident(_) | ExprKind::Member { .. } | ExprKind::Index { .. } => {
                self.eval_path_expr(a, stmt, state)
            }
            ExprKind::Unary {
                op: UnaryOp::AddrOf,
                operand,
            } => {
                let mut i = self.eval_path_expr(operand, stmt, state);
                i.direct_member = i.direct_member.take();
                i
            }
            ExprKind::Cast { operand, .. } => self.eval_path_or_value(operand, stmt, state),
            _ => self.eval_expr(a, stmt, state, false),
        }
    }

    fn summarize_call(
        &mut self,
        name: &str,
        args: &[Expr],
        infos: &[ExprInfo],
        call_node: NodeId,
        call_stmt: StmtId,
        state: &mut FnState,
    ) {
        if name == self.entry.name {
            return;
        }
        let mut found: Option<(usize, usize)> = None; // (ast idx, fn idx)
        'outer: for (ai, ast) in self.asts.iter().enumerate() {
            for (fi, f) in ast.functions.iter().enumerate() {
                if f.name == name {
                    found = Some((ai, fi));
                    break 'outer;
                }
            }
        }
        let Some((ai, fi)) = found else { return };
        let callee = self.asts[ai].functions[fi].clone();

        let mut subst: BTreeMap<String, AccessPath> = BTreeMap::new();
        let mut seeded: Vec<(String, NodeId)> = Vec::new();
        for (pos, formal) in callee.params.iter().enumerate() {
            let Some(arg) = args.get(pos) else { break };
            let info = &infos[pos];
            let arg_path = AccessPath::of_address_expr(arg).map(|p| self.resolve_path(state, &p));
            let is_tee_param = formal.ty.base == "TEE_Param";
            if is_tee_param {
                if let Some(p) = &arg_path {
                    // `f(params)` or `f(&params[i])`.
                    if p.root == self.entry.params_root {
                        subst.insert(formal.name.clone(), p.clone());
                        continue;
                    }
                }
            }
            if self.opts.deep_pointers && formal.ty.pointers > 0 {
                if let Some(p) = &arg_path {
                    let direct = self.param_of(p).is_some();
                    let aliased = p.segs.is_empty() && state.alias.contains_key(&p.root);
                    if direct {
                        subst.insert(formal.name.clone(), p.clone());
                        continue;
                    }
                    if aliased {
                        let (idx, field) = state.alias[&p.root];
                        subst.insert(
                            formal.name.clone(),
                            param_member_path(&self.entry.params_root, idx, field),
                        );
                        continue;
                    }
                }
            }
            if !info.uses.is_empty() {
                seeded.push((formal.name.clone(), call_node));
            }
        }
        if subst.is_empty() && seeded.is_empty() {
            return;
        }

        let fn_key = self.dominance.len();
        self.dominance.push(DomCtx {
            cfg: Some(build_cfg_from_body(&callee.body)),
            callsite: Some((state.fn_key, call_stmt)),
        });
        let mut callee_state = FnState::new(fn_key);
        callee_state.depth = state.depth + 1;
        callee_state.subst = subst;
        for (formal, def) in seeded {
            callee_state.defs.insert(formal, def);
        }
        self.walk_stmts(&callee.body.clone(), &mut callee_state);
        // Callee returns propagate back to the call site.
        for r in callee_state.returns {
            self.edge(r, call_node, None);
        }
    }
}

fn param_member_path(root: &str, idx: usize, field: ParamField) -> AccessPath {
    use crate::tee::PathSeg::*;
    let mut segs = vec![Index(Some(idx as i64))];
    match field {
        ParamField::ValueA => segs.extend([Field("value".into()), Field("a".into())]),
        ParamField::ValueB => segs.extend([Field("value".into()), Field("b".into())]),
        ParamField::MemrefBuffer => segs.extend([Field("memref".into()), Field("buffer".into())]),
        ParamField::MemrefSize => segs.extend([Field("memref".into()), Field("size".into())]),
        ParamField::MemrefParent => segs.extend([Field("memref".into()), Field("parent".into())]),
        ParamField::Whole => {}
    }
    AccessPath {
        root: root.to_string(),
        segs,
    }
}

fn step_target_root(step: &Expr) -> Option<String> {
    match &step.kind {
        ExprKind::Unary { operand, .. } => AccessPath::of_expr(operand)
            .filter(|p| p.segs.is_empty())
            .map(|p| p.root),
        ExprKind::Assign { target, .. } => AccessPath::of_expr(target)
            .filter(|p| p.segs.is_empty())
            .map(|p| p.root),
        _ => None,
    }
}

fn display_of(e: &Expr) -> String {
    match AccessPath::of_expr(e) {
        Some(p) => p.display(),
        None => match &e.kind {
            ExprKind::IntLit(v) => v.to_string(),
            ExprKind::StrLit(_) => "<literal>".to_string(),
            ExprKind::Call { callee, .. } => display_of(callee),
            _ => "<expr>".to_string(),
        },
    }
}

// -------------------------------------------------------------------
// Slicing and tagging
// -------------------------------------------------------------------

fn slice_and_tag(graph: &mut FlowGraph) {
    let keep: std::collections::BTreeSet<NodeId> = match graph.effective_role {
        ParamRole::Input => {
            let sources = input_sources(graph);
            let mut keep = graph.forward_closure(&sources);
            // Array writes inside loops whose bound is input-derived stay in
            // the graph so the extended rule can inspect them.
            for n in &graph.nodes {
                if let NodeDetail::ArrayAccess {
                    is_write: true,
                    loop_ctx: Some(lc),
                    ..
                } = &n.detail
                {
                    if keep.contains(&lc.cond_node) {
                        keep.insert(n.id);
                    }
                }
            }
            keep
        }
        ParamRole::Output => {
            let sinks = output_sinks(graph);
            let mut keep = std::collections::BTreeSet::new();
            for s in &sinks {
                keep.extend(graph.backward_slice(*s));
            }
            keep
        }
        ParamRole::SharedMemory => {
            let sources = shared_sources(graph);
            let closure = graph.forward_closure(&sources);
            let isc: Vec<NodeId> = graph
                .nodes
                .iter()
                .filter(|n| closure.contains(&n.id))
                .filter(|n| shared_isc_class(graph, n).is_some())
                .map(|n| n.id)
                .collect();
            let mut keep: std::collections::BTreeSet<NodeId> =
                sources.iter().copied().collect();
            for i in &isc {
                for b in graph.backward_slice(*i) {
                    if closure.contains(&b) {
                        keep.insert(b);
                    }
                }
                keep.insert(*i);
            }
            keep
        }
        _ => Default::default(),
    };

    graph.nodes.retain(|n| keep.contains(&n.id));
    graph
        .edges
        .retain(|e| keep.contains(&e.from) && keep.contains(&e.to));
    // Clear dangling node references inside details.
    let alive: std::collections::BTreeSet<NodeId> = keep;
    for n in &mut graph.nodes {
        match &mut n.detail {
            NodeDetail::Call {
                dest_prev_def,
                size_defs,
                src_defs,
                value_defs,
                fmt_args,
                ..
            } => {
                if let Some(d) = dest_prev_def {
                    if !alive.contains(d) {
                        *dest_prev_def = None;
                    }
                }
                size_defs.retain(|d| alive.contains(d));
                src_defs.retain(|d| alive.contains(d));
                value_defs.retain(|d| alive.contains(d));
                for fa in fmt_args {
                    fa.defs.retain(|d| alive.contains(d));
                }
            }
            NodeDetail::ArrayAccess { index_defs, .. } => {
                index_defs.retain(|d| alive.contains(d));
            }
            _ => {}
        }
    }

    let tags = derive_tags(graph);
    for n in &mut graph.nodes {
        if let Some(t) = tags.get(&n.id) {
            n.tags = *t;
        }
        if graph.effective_role == ParamRole::SharedMemory {
            // isc_class is recomputed below once tags are in place.
        }
    }
    // ISC classes for reporting/filters.
    if graph.effective_role == ParamRole::SharedMemory {
        let classes: Vec<(NodeId, Option<IscClass>)> = graph
            .nodes
            .iter()
            .map(|n| (n.id, shared_isc_class(graph, n)))
            .collect();
        for (id, c) in classes {
            if let Some(n) = graph.nodes.iter_mut().find(|n| n.id == id) {
                n.isc_class = c;
            }
        }
    }
    graph.entry_sources = graph
        .nodes
        .iter()
        .filter(|n| n.tags.source)
        .map(|n| n.id)
        .collect();
}

fn input_sources(graph: &FlowGraph) -> Vec<NodeId> {
    graph
        .nodes
        .iter()
        .filter(|n| {
            matches!(
                n.detail,
                NodeDetail::MemberRead { index, .. } if index == graph.binding.index
            )
        })
        .map(|n| n.id)
        .collect()
}

fn shared_sources(graph: &FlowGraph) -> Vec<NodeId> {
    graph
        .nodes
        .iter()
        .filter(|n| {
            matches!(
                n.detail,
                NodeDetail::MemberRead { index, field } if index == graph.binding.index
                    && matches!(field, ParamField::MemrefBuffer | ParamField::MemrefSize | ParamField::Whole)
            )
        })
        .map(|n| n.id)
        .collect()
}

fn output_sinks(graph: &FlowGraph) -> Vec<NodeId> {
    let k = graph.binding.index;
    graph
        .nodes
        .iter()
        .filter(|n| match &n.detail {
            NodeDetail::Assign { param_lhs, .. } => {
                matches!(param_lhs, Some((i, _)) if *i == k)
            }
            NodeDetail::Call { dest_param, .. } => {
                matches!(dest_param, Some((i, f)) if *i == k && f.is_buffer())
            }
            NodeDetail::ArrayAccess {
                is_write,
                base_param,
                ..
            } => *is_write && matches!(base_param, Some((i, f)) if *i == k && f.is_buffer()),
            _ => false,
        })
        .map(|n| n.id)
        .collect()
}

fn input_sink(graph: &FlowGraph, n: &FlowNode, tainted: &std::collections::BTreeSet<NodeId>) -> bool {
    let k = graph.binding.index;
    match &n.detail {
        NodeDetail::Call {
            src_defs,
            dest_param,
            ..
        } if matches!(n.catalog_class, Some(CatalogClass::Copy | CatalogClass::Fmt)) => {
            src_defs.iter().any(|d| tainted.contains(d))
                || matches!(dest_param, Some((i, f)) if *i == k && f.is_buffer())
        }
        NodeDetail::ArrayAccess {
            base_param,
            index_defs,
            ..
        } => {
            index_defs.iter().any(|d| tainted.contains(d))
                || matches!(base_param, Some((i, f)) if *i == k && f.is_buffer())
        }
        _ => false,
    }
}

/// ISC classification for shared-memory graphs, derived from node detail.
fn shared_isc_class(graph: &FlowGraph, n: &FlowNode) -> Option<IscClass> {
    let k = graph.binding.index;
    match &n.detail {
        NodeDetail::Assign {
            rhs_direct_member,
            alias_created,
            ..
        } => {
            if matches!(alias_created, Some((i, f)) if *i == k && f.is_buffer()) {
                return Some(IscClass::AliasAssign);
            }
            if matches!(rhs_direct_member, Some((i, f)) if *i == k && f.is_size()) {
                return Some(IscClass::ScalarSizeAssign);
            }
            None
        }
        NodeDetail::Call { arg_param_uses, .. } => {
            let direct_member_pred = graph.preds(n.id).any(|p| {
                graph
                    .node(p)
                    .map(|pn| {
                        matches!(pn.detail, NodeDetail::MemberRead { index, .. } if index == k)
                    })
                    .unwrap_or(false)
            });
            if direct_member_pred
                || arg_param_uses
                    .iter()
                    .any(|(_, (i, f))| *i == k && f.is_buffer())
            {
                Some(IscClass::DirectUse)
            } else {
                None
            }
        }
        NodeDetail::ArrayAccess { base_param, .. } => {
            if matches!(base_param, Some((i, _)) if *i == k) {
                Some(IscClass::DirectUse)
            } else {
                let direct_member_pred = graph.preds(n.id).any(|p| {
                    graph
                        .node(p)
                        .map(|pn| {
                            matches!(pn.detail, NodeDetail::MemberRead { index, .. } if index == k)
                        })
                        .unwrap_or(false)
                });
                direct_member_pred.then_some(IscClass::DirectUse)
            }
        }
        _ => None,
    }
}

/// Computes tags for every node from operation kind, catalog class, the
/// graph's role and dominance. Used both to tag freshly built graphs and to
/// re-derive tags for consistency checks.
pub(super) fn derive_tags(graph: &FlowGraph) -> BTreeMap<NodeId, NodeTags> {
    let mut tags: BTreeMap<NodeId, NodeTags> = graph
        .nodes
        .iter()
        .map(|n| (n.id, NodeTags::default()))
        .collect();
    // CS: copy calls and array accesses are critical statements everywhere.
    for n in &graph.nodes {
        let cs = matches!(n.op_kind, OpKind::ArrayAccess)
            || matches!(n.catalog_class, Some(CatalogClass::Copy | CatalogClass::Fmt));
        tags.get_mut(&n.id).map(|t| t.cs = cs);
    }
    match graph.effective_role {
        ParamRole::Input => {
            let sources = input_sources(graph);
            let tainted = graph.forward_closure(&sources);
            for s in &sources {
                tags.get_mut(s).map(|t| t.source = true);
            }
            let mut sinks = Vec::new();
            for n in &graph.nodes {
                if input_sink(graph, n, &tainted) {
                    tags.get_mut(&n.id).map(|t| {
                        t.sink = true;
                        t.cs = true;
                    });
                    sinks.push(n.id);
                }
            }
            // SC: conditions over input-derived data that dominate a sink.
            for n in &graph.nodes {
                if !matches!(n.op_kind, OpKind::CondExpr) {
                    continue;
                }
                let mentions = graph.preds(n.id).any(|p| tainted.contains(&p));
                if !mentions {
                    continue;
                }
                if sinks.iter().any(|s| graph.dominates_node(n.id, *s)) {
                    tags.get_mut(&n.id).map(|t| t.sc = true);
                }
            }
        }
        ParamRole::Output => {
            let sinks = output_sinks(graph);
            for s in &sinks {
                tags.get_mut(s).map(|t| {
                    t.sink = true;
                    t.cs = true;
                });
            }
            // Sources: origins of the backward slices.
            for n in &graph.nodes {
                if graph.preds(n.id).next().is_none() {
                    tags.get_mut(&n.id).map(|t| t.source = true);
                }
            }
            // Encryption calls are the secure components of output flows.
            for n in &graph.nodes {
                if matches!(n.catalog_class, Some(CatalogClass::Enc)) {
                    tags.get_mut(&n.id).map(|t| t.sc = true);
                }
            }
        }
        ParamRole::SharedMemory => {
            let sources = shared_sources(graph);
            for s in &sources {
                tags.get_mut(s).map(|t| t.source = true);
            }
            for n in &graph.nodes {
                if shared_isc_class(graph, n).is_some() {
                    tags.get_mut(&n.id).map(|t| {
                        t.isc = true;
                        t.sink = true;
                    });
                }
            }
        }
        _ => {}
    }
    tags
}

/// Final node ids follow (file, line, column) order; execution order is
/// preserved separately.
fn renumber(graph: &mut FlowGraph) {
    let mut order: Vec<(String, u32, u32, NodeId)> = graph
        .nodes
        .iter()
        .map(|n| (n.loc.file.clone(), n.loc.line, n.loc.col, n.id))
        .collect();
    order.sort();
    let remap: BTreeMap<NodeId, NodeId> = order
        .iter()
        .enumerate()
        .map(|(new, (_, _, _, old))| (*old, NodeId(new as u32)))
        .collect();
    let mut exec: Vec<NodeId> = graph.nodes.iter().map(|n| remap[&n.id]).collect();
    for n in &mut graph.nodes {
        n.id = remap[&n.id];
        match &mut n.detail {
            NodeDetail::Call {
                dest_prev_def,
                size_defs,
                src_defs,
                value_defs,
                fmt_args,
                ..
            } => {
                *dest_prev_def = dest_prev_def.and_then(|d| remap.get(&d).copied());
                for d in size_defs
                    .iter_mut()
                    .chain(src_defs.iter_mut())
                    .chain(value_defs.iter_mut())
                {
                    *d = remap[d];
                }
                for fa in fmt_args {
                    for d in &mut fa.defs {
                        *d = remap[d];
                    }
                }
            }
            NodeDetail::ArrayAccess {
                index_defs,
                loop_ctx,
                ..
            } => {
                for d in index_defs {
                    *d = remap[d];
                }
                if let Some(lc) = loop_ctx {
                    match remap.get(&lc.cond_node) {
                        Some(nid) => lc.cond_node = *nid,
                        None => *loop_ctx = None,
                    }
                }
            }
            _ => {}
        }
    }
    for e in &mut graph.edges {
        e.from = remap[&e.from];
        e.to = remap[&e.to];
    }
    for s in &mut graph.entry_sources {
        *s = remap[s];
    }
    graph.nodes.sort_by_key(|n| n.id);
    graph.edges.sort_by_key(|e| (e.from, e.to, e.fmt_arg));
    exec.dedup();
    graph.exec_order = exec;
    graph.entry_sources.sort();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, FrontendOptions, SourceUnit};
    use crate::tee::{classify_params, load_catalog};

    fn parse(path: &str, text: &str) -> Ast {
        parse_source(
            SourceUnit::new(path, text.to_string()),
            &FrontendOptions::default(),
        )
    }

    fn graphs_for(
        files: &[(&str, &str)],
        opts: &FlowOptions,
    ) -> (Vec<FlowGraph>, Vec<Ast>) {
        let asts: Vec<Ast> = files.iter().map(|(p, t)| parse(p, t)).collect();
        let catalog = load_catalog(None).unwrap();
        let classification = classify_params(&asts, None);
        let mut graphs = Vec::new();
        for b in &classification.bindings {
            match b.role {
                ParamRole::Unknown => continue,
                ParamRole::InOut => {
                    graphs.push(
                        build_flow_view(b, ParamRole::Input, &asts, &catalog, opts).unwrap(),
                    );
                    graphs.push(
                        build_flow_view(b, ParamRole::Output, &asts, &catalog, opts).unwrap(),
                    );
                }
                _ => graphs.push(build_flow(b, &asts, &catalog, opts).unwrap()),
            }
        }
        (graphs, asts)
    }

    const FIG4_CA: &str = r#"
void aes_oper(TEEC_Session session)
{
    TEEC_Operation op;
    TEEC_Result res;
    char g_AesOutpUT[] = {0x01, 0x02, 0x03, 0x04, 0x05};
    op.params[1].tmpref.buffer = g_AesOutpUT;
    op.params[1].tmpref.size = 5;
    res = l_CryptoVerifyCa_SendCommand(&op, &session, CMD_AES_OPER);
}
"#;
    const FIG4_TA: &str = "char test[256] = {};\n\
// params[1].memref is the copy of op.params[1].tmpref in the normal world\n\
TEE_MemMove(test, params[1].memref.buffer, params[1].memref.size);\n";

    #[test]
    fn input_graph_has_sources_and_cs_sink() {
        let (graphs, _) = graphs_for(&[("ca.c", FIG4_CA), ("ta.c", FIG4_TA)], &FlowOptions::default());
        let g = graphs
            .iter()
            .find(|g| g.binding.index == 1 && g.effective_role == ParamRole::Input)
            .expect("input graph for param 1");
        let sources: Vec<_> = g
            .nodes
            .iter()
            .filter(|n| n.tags.source)
            .map(|n| n.symbol.clone().unwrap_or_default())
            .collect();
        assert!(sources.contains(&"params[1].memref.buffer".to_string()));
        assert!(sources.contains(&"params[1].memref.size".to_string()));
        let sinks: Vec<_> = g.nodes.iter().filter(|n| n.tags.sink).collect();
        assert_eq!(sinks.len(), 1);
        assert!(sinks[0].tags.cs);
        assert_eq!(sinks[0].loc.line, 3);
        assert_eq!(sinks[0].loc.col, 1);
        assert!(g.nodes.iter().all(|n| !n.tags.sc));
        // Small graph: sources (2) + sink (1).
        assert!(g.nodes.len() <= 8);
    }

    const FIG7C_TA: &str = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    char buf[64] = "status";
    unsigned int size = 64;

    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

if(params[2].memref.size > size) {
    memcpy(params[2].memref.buffer, buf, size);
}
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn guarded_copy_has_dominating_sc() {
        let (graphs, _) = graphs_for(&[("ta.c", FIG7C_TA)], &FlowOptions::default());
        let g = graphs
            .iter()
            .find(|g| g.binding.index == 2 && g.effective_role == ParamRole::Input)
            .expect("input graph for param 2");
        let sink = g
            .nodes
            .iter()
            .find(|n| n.tags.sink)
            .expect("memcpy is a sink");
        assert!(sink.tags.cs);
        let sc = g.nodes.iter().find(|n| n.tags.sc).expect("guard is SC");
        assert!(matches!(sc.op_kind, OpKind::CondExpr));
        assert!(g.dominates_node(sc.id, sink.id));
    }

    #[test]
    fn output_graph_without_writes_is_empty() {
        let ta = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_VALUE_OUTPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;
    return TEE_SUCCESS;
}
"#;
        let (graphs, _) = graphs_for(&[("ta.c", ta)], &FlowOptions::default());
        let g = graphs
            .iter()
            .find(|g| g.effective_role == ParamRole::Output)
            .unwrap();
        assert!(g.sinks().is_empty());
        assert!(g.entry_sources.is_empty());
    }

    const FIG7A_TA: &str = r#"
static uint32_t var = 42;

int function(TEE_Param params[4])
{
    params[0].value.a = var;
    return 0;
}

TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_VALUE_OUTPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;
    function(params);
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn sink_found_inside_callee_via_summary() {
        let (graphs, _) = graphs_for(&[("ta.c", FIG7A_TA)], &FlowOptions::default());
        let g = graphs
            .iter()
            .find(|g| g.effective_role == ParamRole::Output && g.binding.index == 0)
            .unwrap();
        let sinks = g.sinks();
        assert_eq!(sinks.len(), 1);
        let sink = g.node(sinks[0]).unwrap();
        // The write happens inside the callee, on its own line.
        assert_eq!(sink.loc.line, 6);
        assert_eq!(sink.symbol.as_deref(), Some("params[0].value.a"));
    }

    const FIG5_CA: &str = r#"
void fill_mem_buf(TEEC_Context ctx, TEEC_Session sess, TEEC_Operation op, uint32_t err_origin)
{
    TEEC_Result res;
    unsigned char membuf_input[] = "from_CA_to_TA";
    TEEC_SharedMemory shm = {
        .size = sizeof(membuf_input),
    };
    TEEC_AllocateSharedMemory(&ctx, &shm);
    memcpy(shm.buffer, membuf_input, shm.size);
    op.params[2].memref.parent = &shm;
    res = TEEC_InvokeCommand(&sess, TA_TEST_APP_FILL_MEM_BUF, &op, &err_origin);
}
"#;
    const FIG5_TA: &str = "// params[2].memref is shared memory\n\
void *buf = params[2].memref.buffer;\n\
unsigned int sz = params[2].memref.size;\n\
// params[2].memref may have been changed outside TEE\n\
if (!TEE_MemCompare(buf, \"from_CA_to_TA\", sz)) {\n\
    IMSG(\"membuf test : Pass!\\n\");\n\
}\n";

    #[test]
    fn shared_memory_reaches_compare_through_shallow_copy() {
        let (graphs, _) = graphs_for(&[("ca.c", FIG5_CA), ("ta.c", FIG5_TA)], &FlowOptions::default());
        let g = graphs
            .iter()
            .find(|g| g.effective_role == ParamRole::SharedMemory)
            .expect("shared graph");
        let source = g
            .nodes
            .iter()
            .find(|n| n.symbol.as_deref() == Some("params[2].memref.buffer"))
            .unwrap();
        let cmp = g
            .nodes
            .iter()
            .find(|n| matches!(n.catalog_class, Some(CatalogClass::Cmp)))
            .unwrap();
        assert!(g.reaches(source.id, cmp.id).unwrap());
        // Three insecure components: alias, scalar size, direct use.
        let isc: Vec<_> = g.nodes.iter().filter(|n| n.tags.isc).collect();
        assert_eq!(isc.len(), 3);
        assert_eq!(
            isc.iter().map(|n| n.loc.line).collect::<Vec<_>>(),
            vec![2, 3, 5]
        );
        assert!(isc.iter().any(|n| n.isc_class == Some(IscClass::AliasAssign)));
        assert!(isc
            .iter()
            .any(|n| n.isc_class == Some(IscClass::ScalarSizeAssign)));
        assert!(isc.iter().any(|n| n.isc_class == Some(IscClass::DirectUse)));
    }

    #[test]
    fn reaches_is_reflexive_and_transitive() {
        let (graphs, _) = graphs_for(&[("ca.c", FIG4_CA), ("ta.c", FIG4_TA)], &FlowOptions::default());
        let g = &graphs[0];
        let ids: Vec<NodeId> = g.nodes.iter().map(|n| n.id).collect();
        for id in &ids {
            assert!(g.reaches(*id, *id).unwrap());
        }
        assert_eq!(
            g.reaches(NodeId(9999), ids[0]),
            Err(FlowQueryError::UnknownNode(NodeId(9999)))
        );
    }

    #[test]
    fn variadic_expand_lists_arguments() {
        let ta = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    uint32_t a = 1;
    uint32_t b = 2;
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_OUTPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;
    snprintf(params[0].memref.buffer, params[0].memref.size, "%s %d", a, b);
    return TEE_SUCCESS;
}
"#;
        let (graphs, _) = graphs_for(&[("ta.c", ta)], &FlowOptions::default());
        let g = graphs
            .iter()
            .find(|g| g.effective_role == ParamRole::Output)
            .unwrap();
        let catalog = load_catalog(None).unwrap();
        let call = g
            .nodes
            .iter()
            .find(|n| matches!(n.catalog_class, Some(CatalogClass::Fmt)))
            .unwrap();
        let expanded = variadic_expand(call, &catalog);
        assert_eq!(
            expanded,
            vec![(3, "a".to_string()), (4, "b".to_string())]
        );
    }

    #[test]
    fn variadic_expand_empty_for_literal_only() {
        let ta = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_OUTPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;
    snprintf(params[0].memref.buffer, params[0].memref.size, "literal");
    return TEE_SUCCESS;
}
"#;
        let (graphs, _) = graphs_for(&[("ta.c", ta)], &FlowOptions::default());
        let g = graphs
            .iter()
            .find(|g| g.effective_role == ParamRole::Output)
            .unwrap();
        let catalog = load_catalog(None).unwrap();
        let call = g
            .nodes
            .iter()
            .find(|n| matches!(n.catalog_class, Some(CatalogClass::Fmt)))
            .unwrap();
        assert!(variadic_expand(call, &catalog).is_empty());
        // The literal-only copy still forms a sink with itself as source.
        assert!(call.tags.sink);
    }

    #[test]
    fn builds_are_deterministic() {
        let files = &[("ca.c", FIG5_CA), ("ta.c", FIG5_TA)];
        let (g1, _) = graphs_for(files, &FlowOptions::default());
        let (g2, _) = graphs_for(files, &FlowOptions::default());
        let d1: Vec<String> = g1.iter().map(|g| g.dump()).collect();
        let d2: Vec<String> = g2.iter().map(|g| g.dump()).collect();
        assert_eq!(d1, d2);
    }

    #[test]
    fn tags_are_rederivable() {
        for files in [
            vec![("ca.c", FIG4_CA), ("ta.c", FIG4_TA)],
            vec![("ta.c", FIG7C_TA)],
            vec![("ta.c", FIG7A_TA)],
            vec![("ca.c", FIG5_CA), ("ta.c", FIG5_TA)],
        ] {
            let (graphs, _) = graphs_for(&files, &FlowOptions::default());
            for g in &graphs {
                let derived = g.rederive_tags();
                for n in &g.nodes {
                    assert_eq!(n.tags, derived[&n.id], "tag mismatch at {}", n.loc);
                }
            }
        }
    }

    #[test]
    fn summary_matches_hand_inlined_twin() {
        let inlined = r#"
static uint32_t var = 42;

TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_VALUE_OUTPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;
    params[0].value.a = var;
    return TEE_SUCCESS;
}
"#;
        let (g_sum, _) = graphs_for(&[("ta.c", FIG7A_TA)], &FlowOptions::default());
        let (g_inl, _) = graphs_for(&[("ta.c", inlined)], &FlowOptions::default());
        let out_sum = g_sum
            .iter()
            .find(|g| g.effective_role == ParamRole::Output)
            .unwrap();
        let out_inl = g_inl
            .iter()
            .find(|g| g.effective_role == ParamRole::Output)
            .unwrap();
        assert_eq!(out_sum.sinks().len(), out_inl.sinks().len());
        let k_sum = out_sum.node(out_sum.sinks()[0]).unwrap().symbol.clone();
        let k_inl = out_inl.node(out_inl.sinks()[0]).unwrap().symbol.clone();
        assert_eq!(k_sum, k_inl);
    }

    #[test]
    fn unresolved_entry_is_an_error() {
        let asts = vec![parse("ta.c", "int x = 1;\n")];
        let catalog = load_catalog(None).unwrap();
        let binding = ParamBinding {
            entry_function: "TA_InvokeCommandEntryPoint".into(),
            command_id: None,
            index: 0,
            role: ParamRole::Input,
            kind: None,
            evidence: None,
            location: None,
        };
        let err = build_flow(&binding, &asts, &catalog, &FlowOptions::default());
        assert!(matches!(err, Err(FlowError::UnresolvedEntry(_))));
    }
}
