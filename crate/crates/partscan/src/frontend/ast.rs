//! Syntax tree for the C subset.
//!
//! Every node carries a [`Loc`] into the original file. Statements carry a
//! unit-unique [`StmtId`] so control-flow and data-flow passes can refer to
//! them without holding tree references.

use crate::loc::{Diagnostic, Loc};
use serde::{Deserialize, Serialize};

/// Which world a source file belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorldKind {
    /// Trusted application (in-TEE) code.
    Ta,
    /// Client application (normal-world) code.
    Ca,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StmtId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct Ast {
    pub path: String,
    pub kind: WorldKind,
    pub functions: Vec<FunctionDef>,
    pub globals: Vec<Declaration>,
    /// Statements found at file scope (snippet inputs). They are analyzed
    /// as the body of a synthetic file-scope function.
    pub top_stmts: Vec<StmtNode>,
    pub includes: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Ast {
    pub fn empty(path: impl Into<String>) -> Self {
        Ast {
            path: path.into(),
            kind: WorldKind::Unknown,
            functions: Vec::new(),
            globals: Vec::new(),
            top_stmts: Vec::new(),
            includes: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub return_type: TypeName,
    pub params: Vec<ParamDecl>,
    pub variadic: bool,
    pub body: Vec<StmtNode>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub ty: TypeName,
    pub loc: Loc,
}

/// A declared type, kept as spelled: base name, pointer depth, array dims.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeName {
    pub base: String,
    pub pointers: u8,
    /// One entry per array dimension; `None` for unsized (`[]`).
    pub array_dims: Vec<Option<i64>>,
}

impl TypeName {
    pub fn named(base: impl Into<String>) -> Self {
        TypeName {
            base: base.into(),
            pointers: 0,
            array_dims: Vec::new(),
        }
    }

    pub fn is_array(&self) -> bool {
        !self.array_dims.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declaration {
    pub name: String,
    pub ty: TypeName,
    pub init: Option<Expr>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StmtNode {
    pub id: StmtId,
    pub loc: Loc,
    pub kind: Stmt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Decl(Declaration),
    Expr(Expr),
    If {
        cond: Expr,
        then_branch: Vec<StmtNode>,
        else_branch: Option<Vec<StmtNode>>,
    },
    While {
        cond: Expr,
        body: Vec<StmtNode>,
    },
    DoWhile {
        body: Vec<StmtNode>,
        cond: Expr,
    },
    For {
        init: Option<Box<StmtNode>>,
        cond: Option<Expr>,
        step: Option<Expr>,
        body: Vec<StmtNode>,
    },
    Switch {
        scrutinee: Expr,
        cases: Vec<SwitchCase>,
    },
    Return(Option<Expr>),
    Break,
    Continue,
    Block(Vec<StmtNode>),
    /// An empty statement (`;`).
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCase {
    /// `None` marks the `default:` label.
    pub labels: Vec<Option<Expr>>,
    pub body: Vec<StmtNode>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub loc: Loc,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    IntLit(i64),
    StrLit(String),
    Ident(String),
    Member {
        base: Box<Expr>,
        field: String,
        arrow: bool,
    },
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
    },
    Call {
        callee: Box<Expr>,
        args: Vec<Expr>,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Binary {
        op: &'static str,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Assign {
        /// `None` for plain `=`, otherwise the compound operator base.
        op: Option<&'static str>,
        target: Box<Expr>,
        value: Box<Expr>,
    },
    Cast {
        ty: TypeName,
        operand: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        then_expr: Box<Expr>,
        else_expr: Box<Expr>,
    },
    Sizeof(Box<SizeofArg>),
    /// Brace initializer; entries may carry a `.field` designator.
    InitList(Vec<Initializer>),
    Comma(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SizeofArg {
    Expr(Expr),
    Type(TypeName),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initializer {
    pub designator: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
    BitNot,
    Deref,
    AddrOf,
    PreInc,
    PreDec,
    PostInc,
    PostDec,
}

impl Expr {
    pub fn int(v: i64, loc: Loc) -> Self {
        Expr {
            loc,
            kind: ExprKind::IntLit(v),
        }
    }

    /// Constant-folds the expression when every leaf is an integer literal.
    pub fn const_value(&self) -> Option<i64> {
        match &self.kind {
            ExprKind::IntLit(v) => Some(*v),
            ExprKind::Unary {
                op: UnaryOp::Neg,
                operand,
            } => operand.const_value().map(|v| v.wrapping_neg()),
            ExprKind::Unary {
                op: UnaryOp::BitNot,
                operand,
            } => operand.const_value().map(|v| !v),
            ExprKind::Cast { operand, .. } => operand.const_value(),
            ExprKind::Binary { op, lhs, rhs } => {
                let (a, b) = (lhs.const_value()?, rhs.const_value()?);
                Some(match *op {
                    "+" => a.wrapping_add(b),
                    "-" => a.wrapping_sub(b),
                    "*" => a.wrapping_mul(b),
                    "/" => {
                        if b == 0 {
                            return None;
                        }
                        a.wrapping_div(b)
                    }
                    "%" => {
                        if b == 0 {
                            return None;
                        }
                        a.wrapping_rem(b)
                    }
                    "<<" => a.wrapping_shl(b as u32),
                    ">>" => a.wrapping_shr(b as u32),
                    "&" => a & b,
                    "|" => a | b,
                    "^" => a ^ b,
                    _ => return None,
                })
            }
            _ => None,
        }
    }

    /// Walks the expression tree, visiting every node.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Member { base, .. } => base.walk(f),
            ExprKind::Index { base, index } => {
                base.walk(f);
                index.walk(f);
            }
            ExprKind::Call { callee, args } => {
                callee.walk(f);
                for a in args {
                    a.walk(f);
                }
            }
            ExprKind::Unary { operand, .. } => operand.walk(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Assign { target, value, .. } => {
                target.walk(f);
                value.walk(f);
            }
            ExprKind::Cast { operand, .. } => operand.walk(f),
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                cond.walk(f);
                then_expr.walk(f);
                else_expr.walk(f);
            }
            ExprKind::Sizeof(arg) => {
                if let SizeofArg::Expr(e) = arg.as_ref() {
                    e.walk(f);
                }
            }
            ExprKind::InitList(inits) => {
                for i in inits {
                    i.value.walk(f);
                }
            }
            ExprKind::Comma(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::IntLit(_) | ExprKind::StrLit(_) | ExprKind::Ident(_) => {}
        }
    }
}

/// Visits every statement in a body, depth-first in source order.
pub fn walk_stmts<'a>(stmts: &'a [StmtNode], f: &mut impl FnMut(&'a StmtNode)) {
    for s in stmts {
        f(s);
        match &s.kind {
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => {
                walk_stmts(then_branch, f);
                if let Some(e) = else_branch {
                    walk_stmts(e, f);
                }
            }
            Stmt::While { body, .. } | Stmt::DoWhile { body, .. } => walk_stmts(body, f),
            Stmt::For { init, body, .. } => {
                if let Some(i) = init {
                    f(i);
                }
                walk_stmts(body, f);
            }
            Stmt::Switch { cases, .. } => {
                for c in cases {
                    walk_stmts(&c.body, f);
                }
            }
            Stmt::Block(b) => walk_stmts(b, f),
            _ => {}
        }
    }
}
