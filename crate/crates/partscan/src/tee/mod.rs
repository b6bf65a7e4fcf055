//! Cross-world parameter model: roles, bindings, API catalog, and the
//! access-path utilities shared with the data-flow builder.

pub mod catalog;
pub mod classify;

use crate::frontend::ast::{Expr, ExprKind, UnaryOp};
use crate::loc::Loc;
use serde::{Deserialize, Serialize};
use std::fmt;

pub use catalog::{load_catalog, validate_arity, ApiCatalog, ConfigError};
pub use classify::{classify_params, AnnotationTable, Classification};

/// Direction of a cross-world parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamRole {
    Input,
    Output,
    InOut,
    SharedMemory,
    Unknown,
}

impl fmt::Display for ParamRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParamRole::Input => "input",
            ParamRole::Output => "output",
            ParamRole::InOut => "inout",
            ParamRole::SharedMemory => "shared",
            ParamRole::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// How the parameter's payload crosses the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamKind {
    Value,
    TempMemref,
    RegisteredMemref,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Evidence {
    CaSide,
    TaSide,
    Annotation,
}

/// One cross-world parameter occurrence for a given entry point and
/// (when resolvable) command id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBinding {
    pub entry_function: String,
    pub command_id: Option<u64>,
    /// Parameter slot, 0..=3.
    pub index: usize,
    pub role: ParamRole,
    pub kind: Option<ParamKind>,
    pub evidence: Option<Evidence>,
    /// Location of the classifying evidence.
    pub location: Option<Loc>,
}

// ---------------------------------------------------------------------
// Access paths
// ---------------------------------------------------------------------

/// A normalized l-value path: a root identifier plus field/index segments.
/// `.size` and `.buffer` members of the same parameter are distinct paths.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccessPath {
    pub root: String,
    pub segs: Vec<PathSeg>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathSeg {
    Field(String),
    /// Constant subscript, or `None` when the index is not a constant.
    Index(Option<i64>),
    Deref,
}

impl AccessPath {
    pub fn ident(root: impl Into<String>) -> Self {
        AccessPath {
            root: root.into(),
            segs: Vec::new(),
        }
    }

    /// Extracts the path of an l-value-ish expression, looking through casts
    /// and parentheses. Returns `None` for computed expressions.
    pub fn of_expr(e: &Expr) -> Option<AccessPath> {
        match &e.kind {
            ExprKind::Ident(name) => Some(AccessPath::ident(name.clone())),
            ExprKind::Member { base, field, .. } => {
                let mut p = AccessPath::of_expr(base)?;
                p.segs.push(PathSeg::Field(field.clone()));
                Some(p)
            }
            ExprKind::Index { base, index } => {
                let mut p = AccessPath::of_expr(base)?;
                p.segs.push(PathSeg::Index(index.const_value()));
                Some(p)
            }
            ExprKind::Cast { operand, .. } => AccessPath::of_expr(operand),
            ExprKind::Unary {
                op: UnaryOp::Deref,
                operand,
            } => {
                let mut p = AccessPath::of_expr(operand)?;
                p.segs.push(PathSeg::Deref);
                Some(p)
            }
            _ => None,
        }
    }

    /// Like [`AccessPath::of_expr`] but also looks through a leading `&`.
    pub fn of_address_expr(e: &Expr) -> Option<AccessPath> {
        match &e.kind {
            ExprKind::Unary {
                op: UnaryOp::AddrOf,
                operand,
            } => AccessPath::of_expr(operand),
            _ => AccessPath::of_expr(e),
        }
    }

    pub fn display(&self) -> String {
        let mut s = self.root.clone();
        for seg in &self.segs {
            match seg {
                PathSeg::Field(f) => {
                    s.push('.');
                    s.push_str(f);
                }
                PathSeg::Index(Some(i)) => s.push_str(&format!("[{i}]")),
                PathSeg::Index(None) => s.push_str("[?]"),
                PathSeg::Deref => s.push_str(".*"),
            }
        }
        s
    }
}

/// A recognized member of `params[i]` on the TA side (or `op.params[i]` on
/// the CA side after stripping the leading `params` field).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamField {
    ValueA,
    ValueB,
    MemrefBuffer,
    MemrefSize,
    MemrefParent,
    /// `params[i]` used as a whole (passed to a callee).
    Whole,
}

impl ParamField {
    pub fn is_size(&self) -> bool {
        matches!(self, ParamField::MemrefSize)
    }

    pub fn is_buffer(&self) -> bool {
        matches!(self, ParamField::MemrefBuffer)
    }
}

/// Matches `<root>[i](.value.a | .value.b | .memref.buffer | ...)` against a
/// TA-side parameter array root. `tmpref` is accepted as a spelling of
/// `memref` so CA-side paths reuse the matcher.
pub fn match_param_access(path: &AccessPath, params_root: &str) -> Option<(usize, ParamField)> {
    if path.root != params_root {
        return None;
    }
    let mut segs = path.segs.as_slice();
    let index = match segs.first() {
        Some(PathSeg::Index(Some(i))) if (0..4).contains(i) => *i as usize,
        _ => return None,
    };
    segs = &segs[1..];
    let field = match segs {
        [] => ParamField::Whole,
        [PathSeg::Field(group), rest @ ..] => {
            let group = group.as_str();
            match (group, rest) {
                ("value", [PathSeg::Field(f)]) if f == "a" => ParamField::ValueA,
                ("value", [PathSeg::Field(f)]) if f == "b" => ParamField::ValueB,
                ("memref" | "tmpref", [PathSeg::Field(f)]) if f == "buffer" => {
                    ParamField::MemrefBuffer
                }
                ("memref" | "tmpref", [PathSeg::Field(f)]) if f == "size" => ParamField::MemrefSize,
                ("memref", [PathSeg::Field(f)]) if f == "parent" => ParamField::MemrefParent,
                // Subscript or deref of the buffer member is a buffer access.
                ("memref" | "tmpref", [PathSeg::Field(f), ..]) if f == "buffer" => {
                    ParamField::MemrefBuffer
                }
                _ => return None,
            }
        }
        _ => return None,
    };
    Some((index, field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::ast::Stmt;
    use crate::frontend::parser::parse_text;

    fn expr_of(src: &str) -> Expr {
        let ast = parse_text(&format!("{src};\n"), "t.c");
        match &ast.top_stmts[0].kind {
            Stmt::Expr(e) => e.clone(),
            other => panic!("expected expr, got {other:?}"),
        }
    }

    #[test]
    fn param_member_paths() {
        let e = expr_of("x = params[1].memref.buffer");
        let (t, v) = match &e.kind {
            ExprKind::Assign { target, value, .. } => (target, value),
            _ => panic!(),
        };
        assert_eq!(AccessPath::of_expr(t).unwrap().display(), "x");
        let p = AccessPath::of_expr(v).unwrap();
        assert_eq!(p.display(), "params[1].memref.buffer");
        assert_eq!(
            match_param_access(&p, "params"),
            Some((1, ParamField::MemrefBuffer))
        );
    }

    #[test]
    fn size_and_buffer_members_are_distinct() {
        let b = AccessPath::of_expr(&expr_of("params[2].memref.buffer")).unwrap();
        let s = AccessPath::of_expr(&expr_of("params[2].memref.size")).unwrap();
        assert_ne!(b, s);
        assert!(match_param_access(&s, "params").unwrap().1.is_size());
    }

    #[test]
    fn buffer_subscript_counts_as_buffer_access() {
        let p = AccessPath::of_expr(&expr_of("params[0].memref.buffer[7]")).unwrap();
        assert_eq!(
            match_param_access(&p, "params"),
            Some((0, ParamField::MemrefBuffer))
        );
    }

    #[test]
    fn ca_side_paths_via_op_var() {
        let p = AccessPath::of_expr(&expr_of("op.params[2].memref.parent")).unwrap();
        assert_eq!(p.root, "op");
        assert_eq!(p.segs[0], PathSeg::Field("params".into()));
    }

    #[test]
    fn out_of_range_index_rejected() {
        let p = AccessPath::of_expr(&expr_of("params[4].value.a")).unwrap();
        assert_eq!(match_param_access(&p, "params"), None);
    }
}
