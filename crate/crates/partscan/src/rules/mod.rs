//! The three bad-partitioning rules and the refinement filters.
//!
//! Detection traverses each flow graph in execution order. A critical
//! statement is a violation when no matching secure component shields it:
//! encryption on the data path for output flows (R1), a dominating
//! input-dependent condition for input flows (R2). Insecure components —
//! shallow copies and direct uses of shared memory — are violations on
//! sight (R3). A copy into a buffer allocated from the same input size is
//! exempt from R2.

use crate::dataflow::{
    CatalogClass, FlowGraph, FlowNode, IscClass, NodeDetail, NodeId, OpKind, OriginClass,
};
use crate::report::{FilterId, Finding};
use crate::tee::{ApiCatalog, ParamField, ParamRole};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    /// Unencrypted data output.
    BpR1,
    /// Input validation weaknesses.
    BpR2,
    /// Direct usage of shared memory.
    BpR3,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleId::BpR1 => f.write_str("BP-R1"),
            RuleId::BpR2 => f.write_str("BP-R2"),
            RuleId::BpR3 => f.write_str("BP-R3"),
        }
    }
}

impl RuleId {
    pub fn parse(s: &str) -> Option<RuleId> {
        match s.to_ascii_uppercase().as_str() {
            "BP-R1" | "BP_R1" | "R1" => Some(RuleId::BpR1),
            "BP-R2" | "BP_R2" | "R2" => Some(RuleId::BpR2),
            "BP-R3" | "BP_R3" | "R3" => Some(RuleId::BpR3),
            _ => None,
        }
    }

    /// The parameter roles a rule applies to.
    pub fn applies_to(&self, role: ParamRole) -> bool {
        match self {
            RuleId::BpR1 => matches!(role, ParamRole::Output | ParamRole::InOut),
            RuleId::BpR2 => matches!(role, ParamRole::Input | ParamRole::InOut),
            RuleId::BpR3 => matches!(role, ParamRole::SharedMemory),
        }
    }
}

/// Rule engine switches. Defaults are the baseline behavior; `refined`
/// enables the false-positive filters, `extended_r2` the loop-bound
/// extension, and `deep_pointers` raw-pointer summaries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub refined: bool,
    pub extended_r2: bool,
    pub deep_pointers: bool,
}

pub struct RuleDoc {
    pub id: RuleId,
    pub title: &'static str,
    pub description: &'static str,
    pub fix: &'static str,
}

pub fn explain(rule: RuleId) -> &'static RuleDoc {
    match rule {
        RuleId::BpR1 => &RuleDoc {
            id: RuleId::BpR1,
            title: "Unencrypted data output",
            description: "In-TEE data reaches an output parameter without passing through an \
                          encryption API on the way. An attacker controlling the normal world \
                          reads the plaintext from the output buffer.",
            fix: "Encrypt the data (e.g. TEE_CipherUpdate) before copying or assigning it to an \
                  output parameter.",
        },
        RuleId::BpR2 => &RuleDoc {
            id: RuleId::BpR2,
            title: "Input validation weaknesses",
            description: "A cross-world input feeds a memory copy or array access that no \
                          dominating conditional check guards. The normal world controls input \
                          sizes and values, so the access can overflow in-TEE memory.",
            fix: "Add a bounds check on the input size or index before the access, or allocate \
                  the destination buffer from the input size so the copy cannot overflow.",
        },
        RuleId::BpR3 => &RuleDoc {
            id: RuleId::BpR3,
            title: "Direct usage of shared memory",
            description: "The TA reads registered shared memory in place or aliases its buffer \
                          pointer. Shared memory stays mapped in the normal world, so its \
                          contents can change under the TA at any time.",
            fix: "Deep-copy shared memory into TEE-private memory (and copy results back) \
                  instead of operating on the shared mapping directly.",
        },
    }
}

// -------------------------------------------------------------------
// Detection
// -------------------------------------------------------------------

/// Runs the rule matching over one flow graph, visiting nodes in execution
/// order. Findings are deduplicated by (rule, location, parameter) and
/// sorted by location.
pub fn detect(graph: &FlowGraph, catalog: &ApiCatalog, config: &RuleConfig) -> Vec<Finding> {
    let _ = catalog;
    let mut findings = match graph.effective_role {
        ParamRole::Output => detect_r1(graph),
        ParamRole::Input => detect_r2(graph),
        ParamRole::SharedMemory => detect_r3(graph),
        _ => Vec::new(),
    };
    if config.extended_r2 {
        findings.extend(extended_r2(graph, config));
    }
    dedup_and_sort(findings)
}

fn dedup_and_sort(findings: Vec<Finding>) -> Vec<Finding> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for f in findings {
        let key = (
            f.rule,
            f.location.clone(),
            f.param_index,
            f.entry_function.clone(),
        );
        if seen.insert(key) {
            out.push(f);
        }
    }
    out.sort_by_key(|f| f.sort_key());
    out
}

fn mk_finding(graph: &FlowGraph, node: &FlowNode, rule: RuleId, message: String) -> Finding {
    Finding {
        rule,
        location: node.loc.clone(),
        entry_function: graph.binding.entry_function.clone(),
        param_index: graph.binding.index,
        param_role: graph.binding.role,
        command_id: graph.binding.command_id,
        message,
        trace: trace_to(graph, node.id),
        suppressed_by: None,
    }
}

/// Shortest source-to-node path, as locations. Falls back to the node alone
/// when it is its own origin.
fn trace_to(graph: &FlowGraph, sink: NodeId) -> Vec<crate::loc::Loc> {
    use std::collections::{BTreeMap, VecDeque};
    let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut queue: VecDeque<NodeId> = graph.entry_sources.iter().copied().collect();
    let starts: BTreeSet<NodeId> = graph.entry_sources.iter().copied().collect();
    if starts.contains(&sink) {
        return vec![graph.node(sink).map(|n| n.loc.clone()).unwrap_or_default_loc()];
    }
    let mut found = false;
    'bfs: while let Some(cur) = queue.pop_front() {
        let mut nexts: Vec<NodeId> = graph.succs(cur).collect();
        nexts.sort();
        for n in nexts {
            if !parent.contains_key(&n) && !starts.contains(&n) {
                parent.insert(n, cur);
                if n == sink {
                    found = true;
                    break 'bfs;
                }
                queue.push_back(n);
            }
        }
    }
    if !found {
        return vec![graph.node(sink).map(|n| n.loc.clone()).unwrap_or_default_loc()];
    }
    let mut path = vec![sink];
    let mut cur = sink;
    while let Some(p) = parent.get(&cur) {
        path.push(*p);
        cur = *p;
        if starts.contains(&cur) {
            break;
        }
    }
    path.reverse();
    path.iter()
        .filter_map(|id| graph.node(*id).map(|n| n.loc.clone()))
        .collect()
}

trait LocFallback {
    fn unwrap_or_default_loc(self) -> crate::loc::Loc;
}

impl LocFallback for Option<crate::loc::Loc> {
    fn unwrap_or_default_loc(self) -> crate::loc::Loc {
        self.unwrap_or_else(|| crate::loc::Loc::new("<unknown>", 0, 0))
    }
}

/// Rule 1: a sink writing into the output parameter violates unless an
/// encryption call lies on the data route into it. Variadic formatter
/// arguments are independent routes: one unencrypted argument is enough.
fn detect_r1(graph: &FlowGraph) -> Vec<Finding> {
    let mut out = Vec::new();
    for id in &graph.exec_order {
        let Some(n) = graph.node(*id) else { continue };
        if !n.tags.sink {
            continue;
        }
        let routes = value_routes(n);
        let violating = match &routes {
            ValueRoutes::PerArg(args) => args
                .iter()
                .any(|defs| !route_has_enc(graph, defs)),
            ValueRoutes::Single(defs) => !route_has_enc(graph, defs),
        };
        if violating {
            let verb = match n.op_kind {
                OpKind::Assign => "assigned",
                _ => "copied",
            };
            out.push(mk_finding(
                graph,
                n,
                RuleId::BpR1,
                format!(
                    "in-TEE data {} to output parameter without encryption (param {})",
                    verb, graph.binding.index
                ),
            ));
        }
    }
    out
}

enum ValueRoutes {
    /// One route per variadic argument.
    PerArg(Vec<Vec<NodeId>>),
    Single(Vec<NodeId>),
}

fn value_routes(n: &FlowNode) -> ValueRoutes {
    match &n.detail {
        NodeDetail::Call {
            fmt_args,
            value_defs,
            ..
        } => {
            if matches!(n.catalog_class, Some(CatalogClass::Fmt)) {
                if fmt_args.is_empty() {
                    // Literal-only format: one constant, unencrypted route.
                    ValueRoutes::Single(Vec::new())
                } else {
                    ValueRoutes::PerArg(fmt_args.iter().map(|a| a.defs.clone()).collect())
                }
            } else {
                ValueRoutes::Single(value_defs.clone())
            }
        }
        _ => ValueRoutes::Single(Vec::new()),
    }
}

/// An empty route is a constant or opaque origin: never encrypted. For
/// assignments the route is the node's own predecessors.
fn route_has_enc(graph: &FlowGraph, defs: &[NodeId]) -> bool {
    let mut frontier: Vec<NodeId> = defs.to_vec();
    if frontier.is_empty() {
        return false;
    }
    let mut seen = BTreeSet::new();
    while let Some(d) = frontier.pop() {
        if !seen.insert(d) {
            continue;
        }
        let Some(node) = graph.node(d) else { continue };
        if matches!(node.catalog_class, Some(CatalogClass::Enc)) {
            return true;
        }
        frontier.extend(graph.preds(d));
    }
    false
}

fn assign_route(graph: &FlowGraph, n: &FlowNode) -> Vec<NodeId> {
    graph.preds(n.id).collect()
}

/// Rule 2: a critical statement over input data violates unless a
/// dominating input-dependent condition guards it, or the copy destination
/// was allocated from the same input (the allocation exception).
fn detect_r2(graph: &FlowGraph) -> Vec<Finding> {
    let mut out = Vec::new();
    let guards: Vec<NodeId> = graph
        .nodes
        .iter()
        .filter(|n| n.tags.sc)
        .map(|n| n.id)
        .collect();
    for id in &graph.exec_order {
        let Some(n) = graph.node(*id) else { continue };
        if !n.tags.sink {
            continue;
        }
        let guarded = guards.iter().any(|g| graph.dominates_node(*g, n.id));
        if guarded {
            continue;
        }
        if copy_into_input_sized_alloc(graph, n) {
            continue;
        }
        let message = match n.op_kind {
            OpKind::Call => format!(
                "input buffer used in memory copy without bounds check (param {})",
                graph.binding.index
            ),
            _ => format!(
                "input-derived value used in array access without bounds check (param {})",
                graph.binding.index
            ),
        };
        out.push(mk_finding(graph, n, RuleId::BpR2, message));
    }
    out
}

/// The allocation exception: `dest = alloc(n)` where `n` derives from the
/// same input makes a following unchecked copy into `dest` safe.
fn copy_into_input_sized_alloc(graph: &FlowGraph, sink: &FlowNode) -> bool {
    let NodeDetail::Call { dest_prev_def, .. } = &sink.detail else {
        return false;
    };
    let Some(dest_def) = dest_prev_def else {
        return false;
    };
    let candidates: Vec<NodeId> = std::iter::once(*dest_def)
        .chain(graph.preds(*dest_def))
        .collect();
    candidates.iter().any(|c| {
        graph
            .node(*c)
            .map(|n| {
                matches!(n.catalog_class, Some(CatalogClass::Alloc))
                    && matches!(&n.detail, NodeDetail::Call { size_defs, .. } if !size_defs.is_empty())
            })
            .unwrap_or(false)
    })
}

/// Rule 3: every insecure component is a violation.
fn detect_r3(graph: &FlowGraph) -> Vec<Finding> {
    let mut out = Vec::new();
    for id in &graph.exec_order {
        let Some(n) = graph.node(*id) else { continue };
        if !n.tags.isc {
            continue;
        }
        let message = match n.isc_class {
            Some(IscClass::AliasAssign) => format!(
                "shallow copy of shared memory buffer (param {})",
                graph.binding.index
            ),
            Some(IscClass::ScalarSizeAssign) => format!(
                "local assignment of shared memory size (param {})",
                graph.binding.index
            ),
            _ => format!("direct use of shared memory (param {})", graph.binding.index),
        };
        out.push(mk_finding(graph, n, RuleId::BpR3, message));
    }
    out
}

// -------------------------------------------------------------------
// Extended rule 2 (loop-bound writes)
// -------------------------------------------------------------------

/// Flags array writes indexed by a loop induction variable whose loop bound
/// is input-derived, into a fixed-size local buffer, with no separate
/// dominating guard over that input. Enabled by `extended_r2`.
pub fn extended_r2(graph: &FlowGraph, config: &RuleConfig) -> Vec<Finding> {
    if !config.extended_r2 || graph.effective_role != ParamRole::Input {
        return Vec::new();
    }
    let mut out = Vec::new();
    for n in &graph.nodes {
        let NodeDetail::ArrayAccess {
            is_write: true,
            base_capacity: Some(_),
            index_root: Some(index_root),
            loop_ctx: Some(lc),
            base_param,
            ..
        } = &n.detail
        else {
            continue;
        };
        // Writes through the input buffer itself are baseline R2 territory.
        if base_param.is_some() {
            continue;
        }
        // The loop condition must be in the graph (bound is input-derived)
        // and drive this index.
        let Some(cond) = graph.node(lc.cond_node) else {
            continue;
        };
        if lc.induction_root.as_deref() != Some(index_root.as_str()) {
            continue;
        }
        // A separate input-dependent condition dominating the loop guards it.
        let guarded = graph.nodes.iter().any(|g| {
            g.id != cond.id
                && matches!(g.op_kind, OpKind::CondExpr)
                && graph.preds(g.id).next().is_some()
                && graph.dominates_node(g.id, cond.id)
        });
        if guarded {
            continue;
        }
        out.push(mk_finding(
            graph,
            n,
            RuleId::BpR2,
            format!(
                "input-bounded loop writes fixed-size buffer without capacity check (param {})",
                graph.binding.index
            ),
        ));
    }
    dedup_and_sort(out)
}

// -------------------------------------------------------------------
// Refinement filters
// -------------------------------------------------------------------

/// Applies the false-positive filters F1-F3. Suppressed findings stay in
/// the list with `suppressed_by` set; active findings pass through
/// unchanged, so the output is always a marking of the input.
pub fn apply_filters(
    findings: Vec<Finding>,
    graph: &FlowGraph,
    config: &RuleConfig,
) -> Vec<Finding> {
    if !config.refined {
        return findings;
    }
    findings
        .into_iter()
        .map(|mut f| {
            if f.suppressed_by.is_some() {
                return f;
            }
            let node = graph
                .nodes
                .iter()
                .find(|n| n.loc == f.location && rule_matches_node(f.rule, n));
            let Some(n) = node else { return f };
            f.suppressed_by = match f.rule {
                RuleId::BpR1 => filter_f1(graph, n),
                RuleId::BpR2 => filter_f2(graph, n),
                RuleId::BpR3 => filter_f3(n),
            };
            f
        })
        .collect()
}

fn rule_matches_node(rule: RuleId, n: &FlowNode) -> bool {
    match rule {
        RuleId::BpR3 => n.tags.isc,
        _ => n.tags.sink,
    }
}

/// F1: the copied value is a length/size expression or comes from a
/// cross-world parameter; neither is sensitive in-TEE data.
fn filter_f1(graph: &FlowGraph, n: &FlowNode) -> Option<FilterId> {
    let routes = match &n.detail {
        NodeDetail::Assign { .. } => vec![assign_route(graph, n)],
        _ => match value_routes(n) {
            ValueRoutes::PerArg(args) => args,
            ValueRoutes::Single(defs) => vec![defs],
        },
    };
    let mut classes = Vec::new();
    for route in &routes {
        if route.is_empty() {
            classes.push(OriginClass::Data);
            continue;
        }
        classes.extend(origin_classes(graph, route));
    }
    let nonsensitive = !classes.is_empty()
        && classes
            .iter()
            .all(|c| matches!(c, OriginClass::LengthExpr | OriginClass::ParamMember));
    nonsensitive.then_some(FilterId::F1)
}

/// Walks back from the given defs to data origins. Length-classified nodes
/// terminate their branch: a strlen result is a length no matter what it
/// measured.
fn origin_classes(graph: &FlowGraph, defs: &[NodeId]) -> Vec<OriginClass> {
    let mut out = Vec::new();
    let mut frontier: Vec<NodeId> = defs.to_vec();
    let mut seen = BTreeSet::new();
    while let Some(d) = frontier.pop() {
        if !seen.insert(d) {
            continue;
        }
        let Some(node) = graph.node(d) else { continue };
        match node.origin_class {
            Some(c @ (OriginClass::LengthExpr | OriginClass::ParamMember)) => out.push(c),
            Some(OriginClass::Data) => out.push(OriginClass::Data),
            None => {
                let preds: Vec<NodeId> = graph.preds(d).collect();
                if preds.is_empty() {
                    out.push(OriginClass::Data);
                } else {
                    frontier.extend(preds);
                }
            }
        }
    }
    out
}

/// F2: index derives solely from `params[k].memref.size` while the base is
/// `params[k].memref.buffer` for the same k — the runtime guarantees the
/// copied-in buffer is at least that large.
fn filter_f2(graph: &FlowGraph, n: &FlowNode) -> Option<FilterId> {
    let k = graph.binding.index;
    let NodeDetail::ArrayAccess {
        base_param: Some((bi, bf)),
        index_defs,
        ..
    } = &n.detail
    else {
        return None;
    };
    if *bi != k || !bf.is_buffer() || index_defs.is_empty() {
        return None;
    }
    let origins = origin_nodes(graph, index_defs);
    let all_same_size = !origins.is_empty()
        && origins.iter().all(|id| {
            graph
                .node(*id)
                .map(|o| {
                    matches!(
                        o.detail,
                        NodeDetail::MemberRead { index, field }
                            if index == k && field == ParamField::MemrefSize
                    )
                })
                .unwrap_or(false)
        });
    all_same_size.then_some(FilterId::F2)
}

/// Origin nodes (branch terminators) of the given defs.
fn origin_nodes(graph: &FlowGraph, defs: &[NodeId]) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut frontier: Vec<NodeId> = defs.to_vec();
    let mut seen = BTreeSet::new();
    while let Some(d) = frontier.pop() {
        if !seen.insert(d) {
            continue;
        }
        let Some(node) = graph.node(d) else { continue };
        let preds: Vec<NodeId> = graph.preds(d).collect();
        if preds.is_empty() || matches!(node.op_kind, OpKind::MemberRead) {
            out.push(d);
        } else {
            frontier.extend(preds);
        }
    }
    out.sort();
    out
}

/// F3: a scalar snapshot of the shared size member is not a buffer alias.
fn filter_f3(n: &FlowNode) -> Option<FilterId> {
    matches!(n.isc_class, Some(IscClass::ScalarSizeAssign)).then_some(FilterId::F3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::{build_flow, build_flow_view, FlowOptions};
    use crate::frontend::ast::Ast;
    use crate::frontend::{parse_source, FrontendOptions, SourceUnit};
    use crate::tee::{classify_params, load_catalog};

    fn parse(path: &str, text: &str) -> Ast {
        parse_source(
            SourceUnit::new(path, text.to_string()),
            &FrontendOptions::default(),
        )
    }

    /// Scans the given files and returns all findings under `config`.
    fn scan(files: &[(&str, &str)], config: &RuleConfig) -> Vec<Finding> {
        let asts: Vec<Ast> = files.iter().map(|(p, t)| parse(p, t)).collect();
        let catalog = load_catalog(None).unwrap();
        let classification = classify_params(&asts, None);
        let opts = FlowOptions {
            deep_pointers: config.deep_pointers,
        };
        let mut findings = Vec::new();
        for b in &classification.bindings {
            let views = match b.role {
                ParamRole::Unknown => continue,
                ParamRole::InOut => vec![ParamRole::Input, ParamRole::Output],
                r => vec![match r {
                    ParamRole::Input => ParamRole::Input,
                    ParamRole::Output => ParamRole::Output,
                    _ => ParamRole::SharedMemory,
                }],
            };
            for v in views {
                let g = build_flow_view(b, v, &asts, &catalog, &opts).unwrap();
                let fs = detect(&g, &catalog, config);
                findings.extend(apply_filters(fs, &g, config));
            }
        }
        findings.sort_by_key(|f| f.sort_key());
        findings
    }

    fn active(findings: &[Finding]) -> Vec<&Finding> {
        findings.iter().filter(|f| f.is_active()).collect()
    }

    const FIG3_CA: &str = r#"
#define MAX_DUMP_SIZE 1024

void dump_status(TEEC_Session session, TEEC_Operation op, uint32_t err_origin)
{
    TEEC_Result res;
    char dump[MAX_DUMP_SIZE];
    op.params[0].tmpref.buffer = (void *)dump;
    op.params[0].tmpref.size = MAX_DUMP_SIZE - 1;
    res = TEEC_InvokeCommand(&session, TA_SDP_DUMP_STATUS, &op, &err_origin);
}
"#;
    const FIG3_TA: &str = "// params[0].memref is a memory copy of op.params[0].tmpref in the normal world\n\
snprintf(params[0].memref.buffer, params[0].memref.size, \"delta (decoder) refcount %u\\n\", delta_refcount);\n\
// params[0].memref will be copied to op.params[0].tmpref after return\n\
return TEE_SUCCESS;\n";

    #[test]
    fn fig3_unencrypted_variadic_output_is_r1() {
        let fs = scan(&[("ca.c", FIG3_CA), ("ta.c", FIG3_TA)], &RuleConfig::default());
        let act = active(&fs);
        assert_eq!(act.len(), 1);
        assert_eq!(act[0].rule, RuleId::BpR1);
        assert_eq!(act[0].location.file, "ta.c");
        assert_eq!(act[0].location.line, 2);
        // Refined mode must keep this true positive.
        let refined = scan(
            &[("ca.c", FIG3_CA), ("ta.c", FIG3_TA)],
            &RuleConfig {
                refined: true,
                ..Default::default()
            },
        );
        assert_eq!(active(&refined).len(), 1);
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
    fn fig4_unchecked_copy_is_r2() {
        let fs = scan(&[("ca.c", FIG4_CA), ("ta.c", FIG4_TA)], &RuleConfig::default());
        let act = active(&fs);
        assert_eq!(act.len(), 1);
        assert_eq!(act[0].rule, RuleId::BpR2);
        assert_eq!((act[0].location.line, act[0].location.col), (3, 1));
        assert_eq!(
            act[0].message,
            "input buffer used in memory copy without bounds check (param 1)"
        );
        let refined = scan(
            &[("ca.c", FIG4_CA), ("ta.c", FIG4_TA)],
            &RuleConfig {
                refined: true,
                ..Default::default()
            },
        );
        assert_eq!(active(&refined).len(), 1);
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
    fn fig5_shared_memory_yields_three_r3() {
        let fs = scan(&[("ca.c", FIG5_CA), ("ta.c", FIG5_TA)], &RuleConfig::default());
        let act = active(&fs);
        assert_eq!(act.len(), 3);
        assert!(act.iter().all(|f| f.rule == RuleId::BpR3));
        assert_eq!(
            act.iter().map(|f| f.location.line).collect::<Vec<_>>(),
            vec![2, 3, 5]
        );
        // Refined mode suppresses only the scalar-size snapshot.
        let refined = scan(
            &[("ca.c", FIG5_CA), ("ta.c", FIG5_TA)],
            &RuleConfig {
                refined: true,
                ..Default::default()
            },
        );
        let act_r = active(&refined);
        assert_eq!(act_r.iter().map(|f| f.location.line).collect::<Vec<_>>(), vec![2, 5]);
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
    fn fig7c_guarded_copy_is_clean() {
        let fs = scan(&[("ta.c", FIG7C_TA)], &RuleConfig::default());
        assert!(active(&fs).is_empty(), "unexpected: {fs:?}");
    }

    const MALLOC_TA: &str = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    void *dest;

    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

    dest = TEE_Malloc(params[0].memref.size, 0);
    TEE_MemMove(dest, params[0].memref.buffer, params[0].memref.size);
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn malloc_exception_suppresses_copy() {
        let fs = scan(&[("ta.c", MALLOC_TA)], &RuleConfig::default());
        assert!(active(&fs).is_empty(), "unexpected: {fs:?}");
    }

    const MALLOC_CONST_TA: &str = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    void *dest;

    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

    dest = TEE_Malloc(64, 0);
    TEE_MemMove(dest, params[0].memref.buffer, params[0].memref.size);
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn constant_sized_alloc_does_not_except() {
        let fs = scan(&[("ta.c", MALLOC_CONST_TA)], &RuleConfig::default());
        let act = active(&fs);
        assert_eq!(act.len(), 1);
        assert_eq!(act[0].rule, RuleId::BpR2);
    }

    const FIG9A_TA: &str = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_VALUE_OUTPUT, TEE_PARAM_TYPE_VALUE_INPUT, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

char buf[] = "aabbcc";
params[0].memref.size = strlen(buf);
// params[1].value.a is the output, while params[2].value.a is the input
params[1].value.a = params[2].value.a;
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn fig9a_passthrough_flagged_then_filtered_by_f1() {
        let base = scan(&[("ta.c", FIG9A_TA)], &RuleConfig::default());
        let act = active(&base);
        assert_eq!(act.len(), 1);
        assert_eq!(act[0].rule, RuleId::BpR1);
        assert_eq!(act[0].location.line, 10);

        let refined = scan(
            &[("ta.c", FIG9A_TA)],
            &RuleConfig {
                refined: true,
                ..Default::default()
            },
        );
        assert!(active(&refined).is_empty());
        let suppressed: Vec<_> = refined.iter().filter(|f| !f.is_active()).collect();
        assert_eq!(suppressed.len(), 1);
        assert_eq!(suppressed[0].suppressed_by, Some(FilterId::F1));
    }

    const FIG9B_TA: &str = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

unsigned int size = params[0].memref.size;
// obtain the third last character in the input buffer
char c = params[0].memref.buffer[size - 3];
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn fig9b_size_index_flagged_then_filtered_by_f2() {
        let base = scan(&[("ta.c", FIG9B_TA)], &RuleConfig::default());
        let act = active(&base);
        assert_eq!(act.len(), 1);
        assert_eq!(act[0].rule, RuleId::BpR2);
        assert_eq!(act[0].location.line, 9);

        let refined = scan(
            &[("ta.c", FIG9B_TA)],
            &RuleConfig {
                refined: true,
                ..Default::default()
            },
        );
        assert!(active(&refined).is_empty());
        assert_eq!(refined[0].suppressed_by, Some(FilterId::F2));
    }

    const FIG9C_CA: &str = r#"
void run(TEEC_Context ctx, TEEC_Session sess, TEEC_Operation op, uint32_t err_origin)
{
    TEEC_SharedMemory shm;
    shm.size = 4096;
    shm.flags = TEEC_MEM_INPUT | TEEC_MEM_OUTPUT;
    TEEC_AllocateSharedMemory(&ctx, &shm);
    op.params[3].memref.parent = &shm;
    TEEC_InvokeCommand(&sess, 0, &op, &err_origin);
}
"#;
    const FIG9C_TA: &str = "// variable assignment by shared memory value\n\
unsigned int size = params[3].memref.size;\n\
// shallow copy of shared memory buffer\n\
void *buf = params[3].memref.buffer;\n";

    #[test]
    fn fig9c_scalar_size_filtered_pointer_alias_kept() {
        let base = scan(&[("ca.c", FIG9C_CA), ("ta.c", FIG9C_TA)], &RuleConfig::default());
        let act = active(&base);
        assert_eq!(act.len(), 2);
        assert_eq!(act[0].location.line, 2);
        assert_eq!(act[1].location.line, 4);

        let refined = scan(
            &[("ca.c", FIG9C_CA), ("ta.c", FIG9C_TA)],
            &RuleConfig {
                refined: true,
                ..Default::default()
            },
        );
        let act_r = active(&refined);
        assert_eq!(act_r.len(), 1);
        assert_eq!(act_r[0].location.line, 4);
        let sup: Vec<_> = refined.iter().filter(|f| !f.is_active()).collect();
        assert_eq!(sup[0].suppressed_by, Some(FilterId::F3));
        assert_eq!(sup[0].location.line, 2);
    }

    const FIG10A_TA: &str = r#"
void test(char *dest, char *src)
{
    TEE_MemMove(dest, src, strlen(src));
}

TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    char key[] = "123456";
    char *str = TEE_Malloc(strlen(key) + 1, 0);

    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_MEMREF_OUTPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

    // case 1
    test(str, key);
    // case 2
    test(params[1].memref.buffer, key);
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn fig10a_raw_pointer_missed_unless_deep_pointers() {
        let base = scan(&[("ta.c", FIG10A_TA)], &RuleConfig::default());
        assert!(active(&base).is_empty(), "baseline: {base:?}");

        let deep = scan(
            &[("ta.c", FIG10A_TA)],
            &RuleConfig {
                deep_pointers: true,
                ..Default::default()
            },
        );
        let act = active(&deep);
        assert_eq!(act.len(), 1);
        assert_eq!(act[0].rule, RuleId::BpR1);
        // The sink is inside the callee.
        assert_eq!(act[0].location.line, 4);
    }

    const FIG10B_TA: &str = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

char *str[1024] = {0};
for (int i = 0; i < params[2].memref.size; i++) {
    str[i] = params[2].memref.buffer[i];
}
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn fig10b_loop_bound_missed_unless_extended() {
        let base = scan(&[("ta.c", FIG10B_TA)], &RuleConfig::default());
        assert!(active(&base).is_empty(), "baseline: {base:?}");

        let ext = scan(
            &[("ta.c", FIG10B_TA)],
            &RuleConfig {
                extended_r2: true,
                ..Default::default()
            },
        );
        let act = active(&ext);
        assert_eq!(act.len(), 1);
        assert_eq!(act[0].rule, RuleId::BpR2);
        assert_eq!(act[0].location.line, 9);
    }

    const FIG10B_GUARDED_TA: &str = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

    if (params[2].memref.size > 1024)
        return TEE_ERROR_BAD_PARAMETERS;

char *str[1024] = {0};
for (int i = 0; i < params[2].memref.size; i++) {
    str[i] = params[2].memref.buffer[i];
}
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn extended_r2_respects_dominating_guard() {
        let ext = scan(
            &[("ta.c", FIG10B_GUARDED_TA)],
            &RuleConfig {
                extended_r2: true,
                ..Default::default()
            },
        );
        assert!(active(&ext).is_empty(), "guarded: {ext:?}");
    }

    const CONST_LOOP_TA: &str = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;

char str[1024] = {0};
for (int i = 0; i < 16; i++) {
    str[i] = i;
}
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn extended_r2_ignores_constant_bounds() {
        let ext = scan(
            &[("ta.c", CONST_LOOP_TA)],
            &RuleConfig {
                extended_r2: true,
                ..Default::default()
            },
        );
        assert!(active(&ext).is_empty());
    }

    #[test]
    fn variadic_arguments_checked_independently() {
        // First variadic argument is ciphertext; the second never passed
        // through an encryption call. One unencrypted route is enough.
        let ta = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    char cipher[64];
    char plain[64] = "secret";
    uint32_t counter = 5;
    uint32_t n = 64;
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_OUTPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;
    TEE_CipherUpdate(op, plain, n, cipher, &n);
    snprintf(params[0].memref.buffer, params[0].memref.size, "%s %u", cipher, counter);
    return TEE_SUCCESS;
}
"#;
        let fs = scan(&[("ta.c", ta)], &RuleConfig::default());
        let act = active(&fs);
        assert_eq!(act.len(), 1, "{fs:?}");
        assert_eq!(act[0].rule, RuleId::BpR1);

        // Every variadic route encrypted: clean.
        let ta_clean = ta.replace("\"%s %u\", cipher, counter", "\"%s %s\", cipher, cipher");
        let fs = scan(&[("ta.c", &ta_clean)], &RuleConfig::default());
        assert!(active(&fs).is_empty(), "enc both: {fs:?}");
    }

    #[test]
    fn role_gating_holds() {
        for (files, allowed) in [
            (
                vec![("ca.c", FIG5_CA), ("ta.c", FIG5_TA)],
                RuleId::BpR3,
            ),
            (vec![("ca.c", FIG4_CA), ("ta.c", FIG4_TA)], RuleId::BpR2),
            (vec![("ca.c", FIG3_CA), ("ta.c", FIG3_TA)], RuleId::BpR1),
        ] {
            let fs = scan(&files, &RuleConfig::default());
            for f in active(&fs) {
                assert_eq!(f.rule, allowed);
                assert!(f.rule.applies_to(f.param_role), "{f:?}");
            }
        }
    }

    #[test]
    fn filters_are_monotone_markings() {
        let base = scan(&[("ca.c", FIG9C_CA), ("ta.c", FIG9C_TA)], &RuleConfig::default());
        let refined = scan(
            &[("ca.c", FIG9C_CA), ("ta.c", FIG9C_TA)],
            &RuleConfig {
                refined: true,
                ..Default::default()
            },
        );
        assert_eq!(base.len(), refined.len());
        let active_set: Vec<_> = refined.iter().filter(|f| f.is_active()).collect();
        let suppressed: Vec<_> = refined.iter().filter(|f| !f.is_active()).collect();
        assert_eq!(active_set.len() + suppressed.len(), base.len());
        for f in &refined {
            assert!(base.iter().any(|b| b.location == f.location && b.rule == f.rule));
        }
    }

    #[test]
    fn explain_covers_all_rules() {
        for r in [RuleId::BpR1, RuleId::BpR2, RuleId::BpR3] {
            let doc = explain(r);
            assert_eq!(doc.id, r);
            assert!(!doc.description.is_empty());
            assert!(!doc.fix.is_empty());
        }
        assert_eq!(RuleId::parse("BP-R2"), Some(RuleId::BpR2));
        assert_eq!(RuleId::parse("bogus"), None);
    }

    #[test]
    fn inout_participates_in_both_rules() {
        let ta = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess_ctx, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    char local[8];
    uint32_t secret = 7;
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_INOUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;
    TEE_MemMove(local, params[0].memref.buffer, params[0].memref.size);
    params[0].memref.size = secret;
    return TEE_SUCCESS;
}
"#;
        let fs = scan(&[("ta.c", ta)], &RuleConfig::default());
        let rules: BTreeSet<RuleId> = active(&fs).iter().map(|f| f.rule).collect();
        assert!(rules.contains(&RuleId::BpR2), "{fs:?}");
        assert!(rules.contains(&RuleId::BpR1), "{fs:?}");
    }
}
