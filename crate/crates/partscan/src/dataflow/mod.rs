//! Per-parameter data-flow graphs.
//!
//! For every classified parameter binding the builder walks the TA entry
//! point (plus one level of callees) and produces a graph whose nodes are
//! operation statements and whose edges are direct propagations: an edge
//! `a -> b` means the statement at `b` uses a value defined or propagated at
//! `a`. Reachability over the edges realizes transitive propagation.
//!
//! Node tags follow the rule model: `Source`/`Sink` anchor the flow, `SC`
//! marks secure components (encryption calls, dominating input checks),
//! `ISC` marks insecure components (shallow copies and direct uses of shared
//! memory), and `CS` marks critical statements (memory copies and array
//! accesses).

mod builder;

pub use builder::{build_flow, build_flow_view, FlowError, FlowOptions};

use crate::loc::Loc;
use crate::tee::{ApiCatalog, ParamBinding, ParamField, ParamRole};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Assign,
    Call,
    ArrayAccess,
    CondExpr,
    Return,
    MemberRead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CatalogClass {
    Enc,
    Copy,
    Alloc,
    Cmp,
    Fmt,
}

/// Why a node is an insecure component (shared-memory graphs only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IscClass {
    /// `unsigned int sz = m.size;` — scalar snapshot of the size member.
    ScalarSizeAssign,
    /// `void *buf = m.buffer;` — pointer alias; contents stay attacker-mutable.
    AliasAssign,
    /// Shared buffer (or an alias) consumed by a call or subscript.
    DirectUse,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTags {
    pub source: bool,
    pub sink: bool,
    pub sc: bool,
    pub isc: bool,
    pub cs: bool,
}

/// Classification of a data origin, used by the refinement filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OriginClass {
    /// strlen/sizeof results and `.size` members.
    LengthExpr,
    /// Data read from a cross-world parameter.
    ParamMember,
    /// Anything else that originates inside the TEE.
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: NodeId,
    pub loc: Loc,
    pub op_kind: OpKind,
    pub catalog_class: Option<CatalogClass>,
    pub tags: NodeTags,
    /// Defined or used variable identity, display form.
    pub symbol: Option<String>,
    pub isc_class: Option<IscClass>,
    pub origin_class: Option<OriginClass>,
    /// Function context index (0 = entry) for dominance queries.
    pub(crate) fn_key: usize,
    pub(crate) stmt: crate::frontend::ast::StmtId,
    pub(crate) detail: NodeDetail,
}

/// Analysis payload carried by each node kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum NodeDetail {
    Assign {
        /// Parameter member written, if the target is one.
        param_lhs: Option<(usize, ParamField)>,
        /// Parameter member the whole right-hand side reads directly.
        rhs_direct_member: Option<(usize, ParamField)>,
        /// Alias created by this assignment (param buffer aliasing).
        alias_created: Option<(usize, ParamField)>,
    },
    Call {
        name: String,
        /// Per argument: direct or alias-resolved parameter member uses.
        arg_param_uses: Vec<(usize, (usize, ParamField))>,
        /// Copy/fmt destination resolved to a parameter member.
        dest_param: Option<(usize, ParamField)>,
        /// Definition of the destination in effect before this call.
        dest_prev_def: Option<NodeId>,
        /// Alloc calls: defs feeding the size argument.
        size_defs: Vec<NodeId>,
        /// Fmt calls: (arg position, symbol, defs) per variadic argument.
        fmt_args: Vec<FmtArg>,
        /// Copy/fmt calls: defs feeding the source/len arguments.
        src_defs: Vec<NodeId>,
        /// Copy calls: defs feeding the copied value (source argument only).
        value_defs: Vec<NodeId>,
    },
    ArrayAccess {
        is_write: bool,
        base_param: Option<(usize, ParamField)>,
        base_root: Option<String>,
        base_capacity: Option<i64>,
        index_defs: Vec<NodeId>,
        index_root: Option<String>,
        /// Innermost enclosing loop, when inside one.
        loop_ctx: Option<LoopCtx>,
    },
    CondExpr {
        /// Loop condition marker (its own guard never shields its body).
        is_loop_cond: bool,
    },
    Return,
    MemberRead {
        index: usize,
        field: ParamField,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct FmtArg {
    pub pos: usize,
    pub symbol: String,
    pub defs: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct LoopCtx {
    pub cond_node: NodeId,
    pub induction_root: Option<String>,
}

/// Edge `from -> to`: `to` uses a value defined or propagated at `from`.
/// `fmt_arg` labels edges that feed a specific variadic argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub fmt_arg: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct FlowGraph {
    pub binding: ParamBinding,
    /// Role this graph realizes: `Input`, `Output` or `SharedMemory`.
    /// InOut bindings produce one graph per direction.
    pub effective_role: ParamRole,
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<FlowEdge>,
    pub entry_sources: Vec<NodeId>,
    /// Node ids in program execution order.
    pub exec_order: Vec<NodeId>,
    /// Per function context: CFG for dominance plus the call-site statement
    /// linking it to its parent context.
    pub(crate) dominance: Vec<DomCtx>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct DomCtx {
    pub cfg: Option<crate::frontend::cfg::Cfg>,
    /// (parent fn_key, call-site statement in the parent).
    pub callsite: Option<(usize, crate::frontend::ast::StmtId)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum FlowQueryError {
    #[error("unknown node id {0:?}")]
    UnknownNode(NodeId),
}

impl FlowGraph {
    pub fn node(&self, id: NodeId) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn check_id(&self, id: NodeId) -> Result<(), FlowQueryError> {
        if self.nodes.iter().any(|n| n.id == id) {
            Ok(())
        } else {
            Err(FlowQueryError::UnknownNode(id))
        }
    }

    pub fn succs(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.from == id)
            .map(|e| e.to)
    }

    pub fn preds(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.to == id)
            .map(|e| e.from)
    }

    /// Reflexive-transitive reachability over the propagation edges.
    pub fn reaches(&self, from: NodeId, to: NodeId) -> Result<bool, FlowQueryError> {
        self.check_id(from)?;
        self.check_id(to)?;
        if from == to {
            return Ok(true);
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([from]);
        while let Some(cur) = queue.pop_front() {
            for next in self.succs(cur) {
                if next == to {
                    return Ok(true);
                }
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        Ok(false)
    }

    /// All nodes that can reach `id`, including `id` itself.
    pub fn backward_slice(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([id]);
        let mut queue = VecDeque::from([id]);
        while let Some(cur) = queue.pop_front() {
            for p in self.preds(cur) {
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    /// Forward closure from a set of nodes (inclusive).
    pub fn forward_closure(&self, start: &[NodeId]) -> BTreeSet<NodeId> {
        let mut seen: BTreeSet<NodeId> = start.iter().copied().collect();
        let mut queue: VecDeque<NodeId> = start.iter().copied().collect();
        while let Some(cur) = queue.pop_front() {
            for s in self.succs(cur) {
                if seen.insert(s) {
                    queue.push_back(s);
                }
            }
        }
        seen
    }

    /// Statement-level dominance lifted across one call-summary level: a
    /// guard in the entry dominates callee statements when it dominates the
    /// call site.
    pub fn dominates_node(&self, a: NodeId, b: NodeId) -> bool {
        let (Some(na), Some(nb)) = (self.node(a), self.node(b)) else {
            return false;
        };
        self.dominates_parts(na.fn_key, na.stmt, nb.fn_key, nb.stmt)
    }

    pub(crate) fn dominates_parts(
        &self,
        fn_a: usize,
        stmt_a: crate::frontend::ast::StmtId,
        fn_b: usize,
        stmt_b: crate::frontend::ast::StmtId,
    ) -> bool {
        if fn_a == fn_b {
            return self
                .dominance
                .get(fn_a)
                .and_then(|d| d.cfg.as_ref())
                .map(|c| c.stmt_dominates(stmt_a, stmt_b))
                .unwrap_or(false);
        }
        // Climb from b's context toward a's.
        let mut fk = fn_b;
        let mut stmt = stmt_b;
        let mut hops = 0;
        while fk != fn_a && hops < self.dominance.len() + 1 {
            match self.dominance.get(fk).and_then(|d| d.callsite) {
                Some((parent, cs)) => {
                    fk = parent;
                    stmt = cs;
                }
                None => return false,
            }
            hops += 1;
        }
        if fk != fn_a {
            return false;
        }
        self.dominance
            .get(fn_a)
            .and_then(|d| d.cfg.as_ref())
            .map(|c| c.stmt_dominates(stmt_a, stmt))
            .unwrap_or(false)
    }

    /// Nodes tagged as sinks, in id order.
    pub fn sinks(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.tags.sink)
            .map(|n| n.id)
            .collect()
    }

    /// Debug dump: one node per line (id, tags, location, symbol).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "graph entry={} param={} role={}\n",
            self.binding.entry_function, self.binding.index, self.effective_role
        ));
        for n in &self.nodes {
            let mut tags = Vec::new();
            if n.tags.source {
                tags.push("Source");
            }
            if n.tags.sink {
                tags.push("Sink");
            }
            if n.tags.sc {
                tags.push("SC");
            }
            if n.tags.isc {
                tags.push("ISC");
            }
            if n.tags.cs {
                tags.push("CS");
            }
            out.push_str(&format!(
                "n{} [{}] {} {} {}\n",
                n.id.0,
                tags.join(","),
                kind_name(n.op_kind),
                n.loc,
                n.symbol.as_deref().unwrap_or("-")
            ));
        }
        for e in &self.edges {
            out.push_str(&format!("e n{} -> n{}\n", e.from.0, e.to.0));
        }
        out
    }

    /// Recomputes every node's tags from its operation kind, catalog class,
    /// the graph role and dominance; used to check tag consistency.
    pub fn rederive_tags(&self) -> BTreeMap<NodeId, NodeTags> {
        builder::derive_tags(self)
    }
}

fn kind_name(k: OpKind) -> &'static str {
    match k {
        OpKind::Assign => "assign",
        OpKind::Call => "call",
        OpKind::ArrayAccess => "array",
        OpKind::CondExpr => "cond",
        OpKind::Return => "return",
        OpKind::MemberRead => "member",
    }
}

/// Expands a variadic formatter call into its independent copy sources:
/// every argument at or after the catalog's first variadic position.
pub fn variadic_expand(call: &FlowNode, catalog: &ApiCatalog) -> Vec<(usize, String)> {
    let NodeDetail::Call { name, fmt_args, .. } = &call.detail else {
        return Vec::new();
    };
    if catalog.fmt_sig(name).is_none() {
        return Vec::new();
    }
    fmt_args
        .iter()
        .map(|a| (a.pos, a.symbol.clone()))
        .collect()
}
