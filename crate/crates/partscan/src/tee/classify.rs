//! Parameter classification: decides, for every TA entry point and command,
//! which of the four parameter slots are inputs, outputs, or shared memory.
//!
//! Evidence precedence is CA-side, then TA-side, then the annotation table.
//! CA code shows how the normal world fills `op.params[i]` before invoking;
//! TA code compares `param_types` against a packed constant. Registered
//! shared memory is only recognizable from CA evidence (or an annotation):
//! inside the TA, temporary and registered memrefs look identical.

use super::{
    match_param_access, AccessPath, Evidence, ParamBinding, ParamField, ParamKind, ParamRole,
    PathSeg,
};
use crate::frontend::ast::{
    walk_stmts, Ast, Expr, ExprKind, FunctionDef, Stmt, StmtNode, WorldKind,
};
use crate::frontend::visit_stmt_exprs;
use crate::loc::Loc;
use std::collections::{BTreeMap, BTreeSet};

/// Classification output: bindings sorted by (entry, command, index) plus
/// human-readable warnings (kind conflicts, unclassified-but-used slots).
#[derive(Debug, Clone)]
pub struct Classification {
    pub bindings: Vec<ParamBinding>,
    pub warnings: Vec<String>,
}

/// A resolved analysis entry: either a real TA entry function or the
/// synthetic holder for file-scope snippet statements.
#[derive(Debug, Clone)]
pub struct EntryPoint {
    pub name: String,
    pub file: String,
    pub params_root: String,
    pub param_types_root: Option<String>,
    pub cmd_root: Option<String>,
    pub synthetic: bool,
}

const INVOKE_ENTRY: &str = "TA_InvokeCommandEntryPoint";
const OPEN_SESSION_ENTRY: &str = "TA_OpenSessionEntryPoint";

/// Annotation table: `entry_function,command_id|*,index,role,kind` per line.
#[derive(Debug, Clone, Default)]
pub struct AnnotationTable {
    records: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone)]
struct AnnotationRecord {
    entry: String,
    command: Option<u64>,
    index: usize,
    role: ParamRole,
    kind: Option<ParamKind>,
}

impl AnnotationTable {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(|p| p.trim()).collect();
            if parts.len() != 5 {
                return Err(format!("annotation line {}: expected 5 fields", lineno + 1));
            }
            let command = if parts[1] == "*" {
                None
            } else {
                Some(
                    parse_u64(parts[1])
                        .ok_or_else(|| format!("annotation line {}: bad command id", lineno + 1))?,
                )
            };
            let index: usize = parts[2]
                .parse()
                .map_err(|_| format!("annotation line {}: bad index", lineno + 1))?;
            if index > 3 {
                return Err(format!("annotation line {}: index out of range", lineno + 1));
            }
            let role = match parts[3] {
                "input" => ParamRole::Input,
                "output" => ParamRole::Output,
                "inout" => ParamRole::InOut,
                "shared" => ParamRole::SharedMemory,
                other => return Err(format!("annotation line {}: unknown role {other}", lineno + 1)),
            };
            let kind = match parts[4] {
                "value" => Some(ParamKind::Value),
                "temp" => Some(ParamKind::TempMemref),
                "registered" => Some(ParamKind::RegisteredMemref),
                "-" => None,
                other => return Err(format!("annotation line {}: unknown kind {other}", lineno + 1)),
            };
            records.push(AnnotationRecord {
                entry: parts[0].to_string(),
                command,
                index,
                role,
                kind,
            });
        }
        Ok(AnnotationTable { records })
    }

    fn lookup(&self, entry: &str, command: Option<u64>, index: usize) -> Option<&AnnotationRecord> {
        self.records
            .iter()
            .find(|r| r.entry == entry && r.index == index && (r.command.is_none() || r.command == command))
    }
}

fn parse_u64(s: &str) -> Option<u64> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

// ---------------------------------------------------------------------
// Entry point discovery
// ---------------------------------------------------------------------

fn is_tee_param_array(ty: &crate::frontend::ast::TypeName) -> bool {
    ty.base == "TEE_Param" && (ty.is_array() || ty.pointers > 0)
}

fn entry_from_named(f: &FunctionDef, file: &str) -> Option<EntryPoint> {
    if f.name != INVOKE_ENTRY && f.name != OPEN_SESSION_ENTRY {
        return None;
    }
    let params_root = f
        .params
        .iter()
        .find(|p| is_tee_param_array(&p.ty))
        .map(|p| p.name.clone())?;
    let param_types_root = f
        .params
        .iter()
        .find(|p| p.name.contains("param_types") || p.name.contains("ptypes"))
        .or_else(|| {
            // GP signature: the uint32 immediately before the params array.
            let idx = f.params.iter().position(|p| is_tee_param_array(&p.ty))?;
            idx.checked_sub(1).map(|i| &f.params[i])
        })
        .map(|p| p.name.clone());
    let cmd_root = if f.name == INVOKE_ENTRY {
        f.params
            .iter()
            .find(|p| p.name.contains("cmd"))
            .or_else(|| f.params.get(1))
            .map(|p| p.name.clone())
    } else {
        None
    };
    Some(EntryPoint {
        name: f.name.clone(),
        file: file.to_string(),
        params_root,
        param_types_root,
        cmd_root,
        synthetic: false,
    })
}

/// Root identifier used like a TA parameter array in loose statements
/// (`<root>[i].memref...` / `<root>[i].value...`).
fn snippet_params_root(stmts: &[StmtNode]) -> Option<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    walk_stmts(stmts, &mut |s| {
        visit_stmt_exprs(s, &mut |e| {
            if let Some(p) = AccessPath::of_expr(e) {
                if matches!(p.segs.first(), Some(PathSeg::Index(Some(_))))
                    && matches!(p.segs.get(1), Some(PathSeg::Field(f)) if f == "memref" || f == "value" || f == "tmpref")
                {
                    *counts.entry(p.root.clone()).or_default() += 1;
                }
            }
        });
    });
    counts
        .into_iter()
        .max_by_key(|(name, c)| (*c, std::cmp::Reverse(name.clone())))
        .map(|(name, _)| name)
}

/// All analysis entries in the scan, sorted by (file, name).
pub fn find_entry_points(asts: &[Ast]) -> Vec<EntryPoint> {
    let mut entries = Vec::new();
    let mut have_named = false;
    for ast in asts {
        if ast.kind == WorldKind::Ca {
            continue;
        }
        for f in &ast.functions {
            if let Some(ep) = entry_from_named(f, &ast.path) {
                entries.push(ep);
                have_named = true;
            }
        }
    }
    if !have_named {
        // Fallback: TEE_Param-typed functions that nothing in the scan calls.
        let mut called: BTreeSet<String> = BTreeSet::new();
        for ast in asts {
            for f in &ast.functions {
                walk_stmts(&f.body, &mut |s| {
                    visit_stmt_exprs(s, &mut |e| {
                        if let ExprKind::Call { callee, .. } = &e.kind {
                            if let ExprKind::Ident(n) = &callee.kind {
                                called.insert(n.clone());
                            }
                        }
                    });
                });
            }
        }
        for ast in asts {
            if ast.kind == WorldKind::Ca {
                continue;
            }
            for f in &ast.functions {
                if called.contains(&f.name) {
                    continue;
                }
                if let Some(p) = f.params.iter().find(|p| is_tee_param_array(&p.ty)) {
                    entries.push(EntryPoint {
                        name: f.name.clone(),
                        file: ast.path.clone(),
                        params_root: p.name.clone(),
                        param_types_root: f
                            .params
                            .iter()
                            .find(|q| q.name.contains("param_types") || q.name.contains("ptypes"))
                            .map(|q| q.name.clone()),
                        cmd_root: f
                            .params
                            .iter()
                            .find(|q| q.name.contains("cmd"))
                            .map(|q| q.name.clone()),
                        synthetic: false,
                    });
                }
            }
        }
    }
    for ast in asts {
        if ast.kind == WorldKind::Ca || ast.top_stmts.is_empty() {
            continue;
        }
        if let Some(root) = snippet_params_root(&ast.top_stmts) {
            entries.push(EntryPoint {
                name: format!("<file-scope:{}>", ast.path),
                file: ast.path.clone(),
                params_root: root,
                param_types_root: None,
                cmd_root: None,
                synthetic: true,
            });
        }
    }
    entries.sort_by(|a, b| (&a.file, &a.name).cmp(&(&b.file, &b.name)));
    entries.dedup_by(|a, b| a.file == b.file && a.name == b.name);
    entries
}

/// Resolves an entry's body statements by classification name.
pub fn entry_body<'a>(asts: &'a [Ast], entry: &EntryPoint) -> Option<&'a [StmtNode]> {
    let ast = asts.iter().find(|a| a.path == entry.file)?;
    if entry.synthetic {
        Some(&ast.top_stmts)
    } else {
        ast.function(&entry.name).map(|f| f.body.as_slice())
    }
}

// ---------------------------------------------------------------------
// CA-side evidence
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CaKind {
    Value,
    Memref,
    Registered,
}

#[derive(Debug, Clone)]
struct CaSlot {
    kind: CaKind,
    role: Option<ParamRole>,
    loc: Loc,
    /// (file, line, col) ordering key for order-independent merging.
    order: (String, u32, u32),
}

#[derive(Debug, Default, Clone)]
struct CaEvidence {
    /// command (None = unresolved) -> slot index -> evidence
    per_command: BTreeMap<Option<u64>, BTreeMap<usize, CaSlot>>,
}

/// Statement list of a function body or file-scope snippet, flattened in
/// source order with sequence numbers.
fn flatten<'a>(stmts: &'a [StmtNode]) -> Vec<&'a StmtNode> {
    let mut out = Vec::new();
    walk_stmts(stmts, &mut |s| out.push(s));
    out
}

struct OpWrite {
    index: usize,
    field: ParamField,
    rhs_root: Option<String>,
    rhs_is_shared: bool,
    seq: usize,
    loc: Loc,
}

fn collect_ca_evidence(asts: &[Ast], evidence: &mut CaEvidence, warnings: &mut Vec<String>) {
    for ast in asts {
        let mut scopes: Vec<Vec<&StmtNode>> = ast
            .functions
            .iter()
            .map(|f| flatten(&f.body))
            .collect();
        if !ast.top_stmts.is_empty() {
            scopes.push(flatten(&ast.top_stmts));
        }
        for stmts in scopes {
            collect_ca_scope(ast, &stmts, evidence, warnings);
        }
    }
}

fn collect_ca_scope(
    ast: &Ast,
    stmts: &[&StmtNode],
    evidence: &mut CaEvidence,
    _warnings: &mut Vec<String>,
) {
    // Shared-memory variables: declared TEEC_SharedMemory or passed by
    // address to the allocate/register client APIs.
    let mut shared_vars: BTreeSet<String> = BTreeSet::new();
    // Variables "filled" with data (initializer or written) by sequence point.
    let mut filled: BTreeMap<String, usize> = BTreeMap::new();
    let mut op_writes: Vec<(String, OpWrite)> = Vec::new();
    let mut param_types: BTreeMap<String, i64> = BTreeMap::new();
    let mut invokes: Vec<(String, Option<u64>, usize)> = Vec::new();
    let mut value_reads: Vec<(String, usize, usize)> = Vec::new(); // (op var, index, seq)
    let mut buffer_reads_after: Vec<(String, usize)> = Vec::new(); // (var, seq)

    for g in &ast.globals {
        if g.ty.base == "TEEC_SharedMemory" {
            shared_vars.insert(g.name.clone());
        }
        if matches!(&g.init, Some(i) if !matches!(&i.kind, ExprKind::InitList(l) if l.is_empty())) {
            filled.insert(g.name.clone(), 0);
        }
    }

    for (seq, s) in stmts.iter().enumerate() {
        match &s.kind {
            Stmt::Decl(d) => {
                if d.ty.base == "TEEC_SharedMemory" {
                    shared_vars.insert(d.name.clone());
                }
                if matches!(&d.init, Some(i) if !matches!(&i.kind, ExprKind::InitList(l) if l.is_empty()))
                {
                    filled.insert(d.name.clone(), seq);
                }
            }
            _ => {}
        }
        visit_stmt_exprs(s, &mut |e| match &e.kind {
            ExprKind::Assign { target, value, .. } => {
                if let Some(path) = AccessPath::of_expr(target) {
                    record_ca_write(
                        &path, value, seq, &e.loc, &shared_vars, &mut op_writes, &mut param_types,
                        &mut filled,
                    );
                }
            }
            ExprKind::Call { callee, args } => {
                let name = match &callee.kind {
                    ExprKind::Ident(n) => n.as_str(),
                    _ => return,
                };
                match name {
                    "TEEC_AllocateSharedMemory" | "TEEC_RegisterSharedMemory" => {
                        if let Some(arg) = args.get(1) {
                            if let Some(p) = AccessPath::of_address_expr(arg) {
                                shared_vars.insert(p.root);
                            }
                        }
                    }
                    "TEEC_InvokeCommand" => {
                        let op_var = args
                            .get(2)
                            .and_then(AccessPath::of_address_expr)
                            .map(|p| p.root);
                        if let Some(var) = op_var {
                            let cmd = args.get(1).and_then(|a| a.const_value()).map(|v| v as u64);
                            invokes.push((var, cmd, seq));
                        }
                    }
                    "memcpy" | "strcpy" | "strncpy" | "TEE_MemMove" => {
                        // Copy into a local buffer marks it filled.
                        if let Some(p) = args.first().and_then(AccessPath::of_expr) {
                            filled.entry(p.root).or_insert(seq);
                        }
                    }
                    _ => {
                        // Wrapper invoke: any call taking &op for a var with
                        // recorded op.params writes.
                        for a in args {
                            if let Some(p) = AccessPath::of_address_expr(a) {
                                if p.segs.is_empty()
                                    && op_writes.iter().any(|(v, _)| *v == p.root)
                                {
                                    invokes.push((p.root, None, seq));
                                }
                            }
                        }
                    }
                }
            }
            _ => {
                if let Some(p) = AccessPath::of_expr(e) {
                    if p.segs.is_empty() {
                        buffer_reads_after.push((p.root.clone(), seq));
                    } else if let Some((var, rest)) = split_op_param_path(&p) {
                        if let Some((idx, ParamField::ValueA | ParamField::ValueB)) =
                            match_param_access_tail(rest)
                        {
                            value_reads.push((var.to_string(), idx, seq));
                        }
                    }
                }
            }
        });
    }

    for (op_var, cmd, inv_seq) in &invokes {
        let slots = evidence.per_command.entry(*cmd).or_default();
        for (var, w) in &op_writes {
            if var != op_var || w.seq >= *inv_seq {
                continue;
            }
            let packed = param_types.get(op_var).copied();
            let (kind, role) = ca_slot_classify(
                w,
                packed,
                &filled,
                &value_reads,
                &buffer_reads_after,
                *inv_seq,
                op_var,
            );
            let Some(kind) = kind else { continue };
            let order = (ast.path.clone(), w.loc.line, w.loc.col);
            let slot = CaSlot {
                kind,
                role,
                loc: w.loc.clone(),
                order,
            };
            match slots.get_mut(&w.index) {
                Some(existing) => {
                    // Registered evidence beats memref/value; otherwise the
                    // earliest location wins so file order cannot matter.
                    let replace = (slot.kind == CaKind::Registered
                        && existing.kind != CaKind::Registered)
                        || (slot.kind == existing.kind && slot.order < existing.order);
                    if replace {
                        let role = existing.role.or(slot.role);
                        *existing = CaSlot { role, ..slot.clone() };
                    } else if existing.role.is_none() {
                        existing.role = slot.role;
                    }
                }
                None => {
                    slots.insert(w.index, slot);
                }
            }
        }
    }
}

/// Splits `op.params[i]rest` into the op variable and the `[i]rest` tail.
fn split_op_param_path(p: &AccessPath) -> Option<(&str, &[PathSeg])> {
    match p.segs.first() {
        Some(PathSeg::Field(f)) if f == "params" => Some((&p.root, &p.segs[1..])),
        _ => None,
    }
}

fn match_param_access_tail(segs: &[PathSeg]) -> Option<(usize, ParamField)> {
    let fake = AccessPath {
        root: "params".into(),
        segs: segs.to_vec(),
    };
    let full = AccessPath {
        root: "params".into(),
        segs: {
            let mut v = Vec::new();
            v.extend(fake.segs.iter().cloned());
            v
        },
    };
    match_param_access(&full, "params")
}

#[allow(clippy::too_many_arguments)]
fn record_ca_write(
    path: &AccessPath,
    value: &Expr,
    seq: usize,
    loc: &Loc,
    shared_vars: &BTreeSet<String>,
    op_writes: &mut Vec<(String, OpWrite)>,
    param_types: &mut BTreeMap<String, i64>,
    filled: &mut BTreeMap<String, usize>,
) {
    if let Some((var, tail)) = split_op_param_path(path) {
        if let Some((index, field)) = match_param_access_tail(tail) {
            let rhs_path = AccessPath::of_address_expr(value);
            let rhs_is_shared = rhs_path
                .as_ref()
                .map(|p| shared_vars.contains(&p.root))
                .unwrap_or(false);
            op_writes.push((
                var.to_string(),
                OpWrite {
                    index,
                    field,
                    rhs_root: rhs_path.map(|p| p.root),
                    rhs_is_shared,
                    seq,
                    loc: loc.clone(),
                },
            ));
            return;
        }
    }
    // op.paramTypes = <packed constant>
    if path.segs.len() == 1 {
        if let PathSeg::Field(f) = &path.segs[0] {
            if f == "paramTypes" {
                if let Some(v) = value.const_value() {
                    param_types.insert(path.root.clone(), v);
                }
                return;
            }
        }
    }
    // Plain writes mark a variable as filled.
    if path.segs.is_empty() {
        filled.entry(path.root.clone()).or_insert(seq);
    }
}

fn ca_slot_classify(
    w: &OpWrite,
    packed: Option<i64>,
    filled: &BTreeMap<String, usize>,
    value_reads: &[(String, usize, usize)],
    buffer_reads_after: &[(String, usize)],
    inv_seq: usize,
    op_var: &str,
) -> (Option<CaKind>, Option<ParamRole>) {
    if w.field == ParamField::MemrefParent {
        if w.rhs_is_shared {
            return (Some(CaKind::Registered), Some(ParamRole::SharedMemory));
        }
        return (Some(CaKind::Registered), Some(ParamRole::SharedMemory));
    }
    // Packed parameter types are authoritative when present.
    if let Some(p) = packed {
        let slot = (p >> (4 * w.index as i64)) & 0xF;
        if let Some((kind, role)) = slot_type_to_kind_role(slot) {
            let kind = match kind {
                ParamKind::Value => CaKind::Value,
                ParamKind::TempMemref => CaKind::Memref,
                ParamKind::RegisteredMemref => CaKind::Registered,
            };
            return (Some(kind), Some(role));
        }
    }
    match w.field {
        ParamField::ValueA | ParamField::ValueB => {
            let read_after = value_reads
                .iter()
                .any(|(v, i, s)| v == op_var && *i == w.index && *s > inv_seq);
            let role = match (true, read_after) {
                (true, true) => ParamRole::InOut,
                (true, false) => ParamRole::Input,
                _ => ParamRole::Output,
            };
            (Some(CaKind::Value), Some(role))
        }
        ParamField::MemrefBuffer => {
            let var_filled = w
                .rhs_root
                .as_ref()
                .map(|r| filled.get(r).map(|s| *s <= w.seq).unwrap_or(false))
                .unwrap_or(false);
            let read_after = w
                .rhs_root
                .as_ref()
                .map(|r| {
                    buffer_reads_after
                        .iter()
                        .any(|(v, s)| v == r && *s > inv_seq)
                })
                .unwrap_or(false);
            let role = match (var_filled, read_after) {
                (true, true) => ParamRole::InOut,
                (true, false) => ParamRole::Input,
                _ => ParamRole::Output,
            };
            (Some(CaKind::Memref), Some(role))
        }
        ParamField::MemrefSize => (Some(CaKind::Memref), None),
        _ => (None, None),
    }
}

/// Maps a 4-bit parameter-type slot to (kind, role).
fn slot_type_to_kind_role(slot: i64) -> Option<(ParamKind, ParamRole)> {
    match slot {
        1 => Some((ParamKind::Value, ParamRole::Input)),
        2 => Some((ParamKind::Value, ParamRole::Output)),
        3 => Some((ParamKind::Value, ParamRole::InOut)),
        5 => Some((ParamKind::TempMemref, ParamRole::Input)),
        6 => Some((ParamKind::TempMemref, ParamRole::Output)),
        7 => Some((ParamKind::TempMemref, ParamRole::InOut)),
        0xC..=0xF => Some((ParamKind::RegisteredMemref, ParamRole::SharedMemory)),
        _ => None,
    }
}

// ---------------------------------------------------------------------
// TA-side evidence
// ---------------------------------------------------------------------

#[derive(Debug, Default, Clone)]
struct TaEvidence {
    /// command context -> per-slot 4-bit type
    per_command: BTreeMap<Option<u64>, TaSlots>,
}

#[derive(Debug, Default, Clone)]
struct TaSlots {
    slots: [Option<(i64, Loc)>; 4],
}

fn collect_ta_evidence(entry: &EntryPoint, body: &[StmtNode]) -> TaEvidence {
    let mut ev = TaEvidence::default();
    let Some(ptypes) = entry.param_types_root.as_deref() else {
        return ev;
    };
    collect_ta_stmts(body, entry, ptypes, None, &mut ev);
    ev
}

fn collect_ta_stmts(
    stmts: &[StmtNode],
    entry: &EntryPoint,
    ptypes: &str,
    cmd_ctx: Option<u64>,
    ev: &mut TaEvidence,
) {
    for s in stmts {
        match &s.kind {
            Stmt::Switch { scrutinee, cases } => {
                let on_cmd = entry
                    .cmd_root
                    .as_deref()
                    .map(|c| {
                        AccessPath::of_expr(scrutinee)
                            .map(|p| p.root == c && p.segs.is_empty())
                            .unwrap_or(false)
                    })
                    .unwrap_or(false);
                for case in cases {
                    let ctx = if on_cmd {
                        case.labels
                            .iter()
                            .find_map(|l| l.as_ref().and_then(|e| e.const_value()))
                            .map(|v| v as u64)
                            .or(cmd_ctx)
                    } else {
                        cmd_ctx
                    };
                    collect_ta_stmts(&case.body, entry, ptypes, ctx, ev);
                }
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
            } => {
                scan_ptype_comparison(cond, ptypes, cmd_ctx, ev);
                collect_ta_stmts(then_branch, entry, ptypes, cmd_ctx, ev);
                if let Some(eb) = else_branch {
                    collect_ta_stmts(eb, entry, ptypes, cmd_ctx, ev);
                }
            }
            Stmt::While { cond, body } | Stmt::DoWhile { body, cond } => {
                scan_ptype_comparison(cond, ptypes, cmd_ctx, ev);
                collect_ta_stmts(body, entry, ptypes, cmd_ctx, ev);
            }
            Stmt::For { cond, body, .. } => {
                if let Some(c) = cond {
                    scan_ptype_comparison(c, ptypes, cmd_ctx, ev);
                }
                collect_ta_stmts(body, entry, ptypes, cmd_ctx, ev);
            }
            Stmt::Block(b) => collect_ta_stmts(b, entry, ptypes, cmd_ctx, ev),
            Stmt::Expr(e) => scan_ptype_comparison(e, ptypes, cmd_ctx, ev),
            _ => {}
        }
    }
}

fn scan_ptype_comparison(e: &Expr, ptypes: &str, cmd_ctx: Option<u64>, ev: &mut TaEvidence) {
    e.walk(&mut |x| {
        let ExprKind::Binary { op, lhs, rhs } = &x.kind else {
            return;
        };
        if *op != "==" && *op != "!=" {
            return;
        }
        let sides = [(lhs, rhs), (rhs, lhs)];
        for (a, b) in sides {
            let Some(konst) = b.const_value() else { continue };
            // Whole-word comparison: param_types ==/!= packed.
            if let Some(p) = AccessPath::of_expr(a) {
                if p.root == ptypes && p.segs.is_empty() {
                    let slots = ev.per_command.entry(cmd_ctx).or_default();
                    for i in 0..4 {
                        let v = (konst >> (4 * i as i64)) & 0xF;
                        if slots.slots[i].is_none() {
                            slots.slots[i] = Some((v, x.loc.clone()));
                        }
                    }
                    return;
                }
            }
            // Per-slot comparison: TEE_PARAM_TYPE_GET(param_types, k).
            if let ExprKind::Call { callee, args } = &a.kind {
                if let ExprKind::Ident(n) = &callee.kind {
                    if (n == "TEE_PARAM_TYPE_GET" || n == "TEEC_PARAM_TYPE_GET")
                        && args.len() == 2
                    {
                        let is_ptypes = AccessPath::of_expr(&args[0])
                            .map(|p| p.root == ptypes && p.segs.is_empty())
                            .unwrap_or(false);
                        if is_ptypes {
                            if let Some(k) = args[1].const_value() {
                                if (0..4).contains(&k) {
                                    let slots = ev.per_command.entry(cmd_ctx).or_default();
                                    if slots.slots[k as usize].is_none() {
                                        slots.slots[k as usize] = Some((konst, x.loc.clone()));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------
// Merge
// ---------------------------------------------------------------------

/// Classifies every parameter slot of every entry point in the scan.
///
/// Deterministic: the result is invariant under permutations of `asts`.
pub fn classify_params(asts: &[Ast], annotations: Option<&AnnotationTable>) -> Classification {
    let mut warnings: Vec<String> = Vec::new();
    let entries = find_entry_points(asts);

    let mut ca = CaEvidence::default();
    collect_ca_evidence(asts, &mut ca, &mut warnings);

    let mut bindings = Vec::new();
    for entry in &entries {
        let body = entry_body(asts, entry).unwrap_or(&[]);
        let ta = collect_ta_evidence(entry, body);

        let mut contexts: BTreeSet<Option<u64>> = BTreeSet::new();
        contexts.extend(ta.per_command.keys().copied());
        contexts.extend(ca.per_command.keys().copied());
        let specific: BTreeSet<Option<u64>> =
            contexts.iter().copied().filter(|c| c.is_some()).collect();
        let contexts: Vec<Option<u64>> = if specific.is_empty() {
            vec![None]
        } else {
            specific.into_iter().collect()
        };

        let used = used_slots(body, &entry.params_root);
        for cmd in contexts {
            for index in 0..4usize {
                let ca_slot = ca
                    .per_command
                    .get(&cmd)
                    .and_then(|m| m.get(&index))
                    .or_else(|| {
                        ca.per_command
                            .get(&None)
                            .and_then(|m| m.get(&index))
                    });
                let ta_slot = ta
                    .per_command
                    .get(&cmd)
                    .and_then(|m| m.slots[index].clone())
                    .or_else(|| ta.per_command.get(&None).and_then(|m| m.slots[index].clone()));

                let mut binding = ParamBinding {
                    entry_function: entry.name.clone(),
                    command_id: cmd,
                    index,
                    role: ParamRole::Unknown,
                    kind: None,
                    evidence: None,
                    location: None,
                };

                if let Some(slot) = ca_slot {
                    binding.kind = Some(match slot.kind {
                        CaKind::Value => ParamKind::Value,
                        CaKind::Memref => ParamKind::TempMemref,
                        CaKind::Registered => ParamKind::RegisteredMemref,
                    });
                    binding.role = slot.role.unwrap_or(ParamRole::Unknown);
                    binding.evidence = Some(Evidence::CaSide);
                    binding.location = Some(slot.loc.clone());
                    if let Some((tslot, _)) = &ta_slot {
                        if let Some((tkind, trole)) = slot_type_to_kind_role(*tslot) {
                            let ca_is_value = slot.kind == CaKind::Value;
                            let ta_is_value = tkind == ParamKind::Value;
                            if ca_is_value != ta_is_value {
                                warnings.push(format!(
                                    "conflict: CA and TA evidence disagree on value-vs-memref for {} param {} (command {:?}); CA evidence wins",
                                    entry.name, index, cmd
                                ));
                            } else if binding.role == ParamRole::Unknown {
                                binding.role = trole;
                            }
                        }
                    }
                } else if let Some((tslot, tloc)) = ta_slot {
                    if let Some((kind, role)) = slot_type_to_kind_role(tslot) {
                        binding.kind = Some(kind);
                        binding.role = role;
                        binding.evidence = Some(Evidence::TaSide);
                        binding.location = Some(tloc);
                    }
                } else if let Some(ann) =
                    annotations.and_then(|t| t.lookup(&entry.name, cmd, index))
                {
                    binding.role = ann.role;
                    binding.kind = ann.kind;
                    binding.evidence = Some(Evidence::Annotation);
                }

                if binding.role == ParamRole::Unknown && used.contains(&index) {
                    warnings.push(format!(
                        "param {} of {} is referenced but unclassified; excluded from rule checks",
                        index, entry.name
                    ));
                }
                bindings.push(binding);
            }
        }
    }
    bindings.sort_by(|a, b| {
        (&a.entry_function, a.command_id, a.index).cmp(&(&b.entry_function, b.command_id, b.index))
    });
    warnings.sort();
    warnings.dedup();
    Classification { bindings, warnings }
}

fn used_slots(body: &[StmtNode], params_root: &str) -> BTreeSet<usize> {
    let mut used = BTreeSet::new();
    walk_stmts(body, &mut |s| {
        visit_stmt_exprs(s, &mut |e| {
            if let Some(p) = AccessPath::of_expr(e) {
                if let Some((i, _)) = match_param_access(&p, params_root) {
                    used.insert(i);
                }
            }
        });
    });
    used
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, FrontendOptions, SourceUnit};

    fn parse(path: &str, text: &str) -> Ast {
        parse_source(
            SourceUnit::new(path, text.to_string()),
            &FrontendOptions::default(),
        )
    }

    const FIG5A_CA: &str = r#"
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

    #[test]
    fn shared_memory_registration_classified() {
        let ca = parse("ca.c", FIG5A_CA);
        let ta = parse(
            "ta.c",
            "void *buf = params[2].memref.buffer;\nunsigned int sz = params[2].memref.size;\n",
        );
        let c = classify_params(&[ca, ta], None);
        let b = c
            .bindings
            .iter()
            .find(|b| b.index == 2)
            .expect("binding for slot 2");
        assert_eq!(b.role, ParamRole::SharedMemory);
        assert_eq!(b.kind, Some(ParamKind::RegisteredMemref));
        assert_eq!(b.evidence, Some(Evidence::CaSide));
    }

    const FIG3A_CA: &str = r#"
void dump_status(TEEC_Session session, TEEC_Operation op, uint32_t err_origin)
{
    TEEC_Result res;
    char dump[MAX_DUMP_SIZE];
    op.params[0].tmpref.buffer = (void *)dump;
    op.params[0].tmpref.size = MAX_DUMP_SIZE - 1;
    res = TEEC_InvokeCommand(&session, TA_SDP_DUMP_STATUS, &op, &err_origin);
}
"#;

    #[test]
    fn uninitialized_tmpref_buffer_is_output() {
        let ca = parse("ca.c", &format!("#define MAX_DUMP_SIZE 1024\n{FIG3A_CA}"));
        let ta = parse("ta.c", "snprintf(params[0].memref.buffer, params[0].memref.size, \"x\");\n");
        let c = classify_params(&[ca, ta], None);
        let b = c.bindings.iter().find(|b| b.index == 0).unwrap();
        assert_eq!(b.kind, Some(ParamKind::TempMemref));
        assert_eq!(b.role, ParamRole::Output);
    }

    #[test]
    fn initialized_tmpref_buffer_is_input() {
        let ca = parse(
            "ca.c",
            r#"
void aes_oper(TEEC_Session session)
{
    TEEC_Operation op;
    TEEC_Result res;
    char g_AesOutpUT[] = {0x01, 0x02, 0x03, 0x04, 0x05};
    op.params[1].tmpref.buffer = g_AesOutpUT;
    op.params[1].tmpref.size = 5;
    res = l_CryptoVerifyCa_SendCommand(&op, &session, CMD_AES_OPER);
}
"#,
        );
        let ta = parse("ta.c", "char test[256] = {};\nTEE_MemMove(test, params[1].memref.buffer, params[1].memref.size);\n");
        let c = classify_params(&[ca, ta], None);
        let b = c.bindings.iter().find(|b| b.index == 1).unwrap();
        assert_eq!(b.kind, Some(ParamKind::TempMemref));
        assert_eq!(b.role, ParamRole::Input);
        assert_eq!(b.evidence, Some(Evidence::CaSide));
    }

    const TA_VALUE_INPUT: &str = r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess, uint32_t cmd, uint32_t param_types, TEE_Param params[4])
{
    if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_VALUE_INPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
        return TEE_ERROR_BAD_PARAMETERS;
    use_value(params[0].value.a);
    return TEE_SUCCESS;
}
"#;

    #[test]
    fn ta_side_packing_unpacked_per_slot() {
        let ta = parse("ta.c", TA_VALUE_INPUT);
        let c = classify_params(&[ta], None);
        assert_eq!(c.bindings.len(), 4);
        assert_eq!(c.bindings[0].role, ParamRole::Input);
        assert_eq!(c.bindings[0].kind, Some(ParamKind::Value));
        assert_eq!(c.bindings[0].evidence, Some(Evidence::TaSide));
        for b in &c.bindings[1..] {
            assert_eq!(b.role, ParamRole::Unknown);
            assert_eq!(b.kind, None);
        }
    }

    #[test]
    fn classification_is_order_independent() {
        let ca = parse("ca.c", FIG5A_CA);
        let ta = parse("ta.c", "void *buf = params[2].memref.buffer;\n");
        let fwd = classify_params(&[ca.clone(), ta.clone()], None);
        let rev = classify_params(&[ta, ca], None);
        assert_eq!(fwd.bindings, rev.bindings);
        assert_eq!(fwd.warnings, rev.warnings);
    }

    #[test]
    fn annotation_fallback_applies() {
        let ta = parse("ta.c", "void *buf = params[3].memref.buffer;\n");
        let table = AnnotationTable::parse("<file-scope:ta.c>,*,3,shared,registered\n").unwrap();
        let c = classify_params(&[ta], Some(&table));
        let b = c.bindings.iter().find(|b| b.index == 3).unwrap();
        assert_eq!(b.role, ParamRole::SharedMemory);
        assert_eq!(b.evidence, Some(Evidence::Annotation));
    }

    #[test]
    fn unknown_used_slot_warned() {
        let ta = parse("ta.c", "void *buf = params[3].memref.buffer;\n");
        let c = classify_params(&[ta], None);
        assert!(c.warnings.iter().any(|w| w.contains("param 3")));
    }

    #[test]
    fn per_command_bindings_from_switch() {
        let ta = parse(
            "ta.c",
            r#"
TEE_Result TA_InvokeCommandEntryPoint(void *sess, uint32_t cmd_id, uint32_t param_types, TEE_Param params[4])
{
    switch (cmd_id) {
    case 1:
        if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_MEMREF_INPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
            return TEE_ERROR_BAD_PARAMETERS;
        handle_one(params);
        break;
    case 2:
        if (param_types != TEE_PARAM_TYPES(TEE_PARAM_TYPE_VALUE_OUTPUT, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE, TEE_PARAM_TYPE_NONE))
            return TEE_ERROR_BAD_PARAMETERS;
        handle_two(params);
        break;
    }
    return TEE_SUCCESS;
}
"#,
        );
        let c = classify_params(&[ta], None);
        let one = c
            .bindings
            .iter()
            .find(|b| b.command_id == Some(1) && b.index == 0)
            .unwrap();
        let two = c
            .bindings
            .iter()
            .find(|b| b.command_id == Some(2) && b.index == 0)
            .unwrap();
        assert_eq!(one.role, ParamRole::Input);
        assert_eq!(one.kind, Some(ParamKind::TempMemref));
        assert_eq!(two.role, ParamRole::Output);
        assert_eq!(two.kind, Some(ParamKind::Value));
    }
}
