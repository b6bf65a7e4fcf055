//! C front end: preprocessing, parsing, and control-flow graphs.
//!
//! The front end accepts `.c` and `.h` files, tolerates uncompilable
//! snippets, and never aborts a unit: everything it cannot understand turns
//! into a diagnostic attached to the [`ast::Ast`].

pub mod ast;
pub mod cfg;
pub mod lexer;
pub mod parser;
pub mod preprocess;

use crate::loc::Diagnostic;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub use ast::{Ast, WorldKind};
pub use cfg::{build_cfg, Cfg};
pub use preprocess::{preprocess, PreprocessedUnit};

/// One input file, before or after preprocessing.
#[derive(Debug, Clone)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
    pub kind: WorldKind,
}

impl SourceUnit {
    pub fn new(path: impl Into<String>, text: String) -> Self {
        SourceUnit {
            path: path.into(),
            text,
            kind: WorldKind::Unknown,
        }
    }
}

/// Knobs exposed through the CLI config file.
#[derive(Debug, Clone, Default)]
pub struct FrontendOptions {
    /// Extra object-like macro definitions, merged over the built-in table.
    pub defines: BTreeMap<String, String>,
    /// When a conditional cannot be evaluated, keep the `#else` branch
    /// instead of the `#if` branch.
    pub prefer_else_branch: bool,
}

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    Encoding { path: String },
}

/// Functions whose definition marks a file as trusted-application code.
const TA_ENTRY_POINTS: &[&str] = &[
    "TA_InvokeCommandEntryPoint",
    "TA_OpenSessionEntryPoint",
    "TA_CloseSessionEntryPoint",
    "TA_CreateEntryPoint",
    "TA_DestroyEntryPoint",
];

/// Client-API calls that mark a file as normal-world code.
const CA_API_CALLS: &[&str] = &[
    "TEEC_InvokeCommand",
    "TEEC_OpenSession",
    "TEEC_CloseSession",
    "TEEC_InitializeContext",
    "TEEC_FinalizeContext",
    "TEEC_AllocateSharedMemory",
    "TEEC_RegisterSharedMemory",
    "TEEC_ReleaseSharedMemory",
];

/// Reads, preprocesses and parses one file.
pub fn parse_unit(path: &Path, options: &FrontendOptions) -> Result<Ast, FrontendError> {
    parse_unit_as(path, &path.display().to_string(), options)
}

/// Like [`parse_unit`], but every location carries `display` as its file
/// name (used to keep report paths relative to the scan root).
pub fn parse_unit_as(
    path: &Path,
    display: &str,
    options: &FrontendOptions,
) -> Result<Ast, FrontendError> {
    let bytes = std::fs::read(path).map_err(|source| FrontendError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|_| FrontendError::Encoding {
        path: path.display().to_string(),
    })?;
    Ok(parse_source(SourceUnit::new(display, text), options))
}

/// Preprocesses and parses an in-memory unit. Total: any string input yields
/// an [`Ast`], possibly with diagnostics.
pub fn parse_source(unit: SourceUnit, options: &FrontendOptions) -> Ast {
    let pre = preprocess::preprocess(unit, options);
    let mut ast = parser::parse_text(&pre.unit.text, &pre.unit.path);
    let mut diags: Vec<Diagnostic> = pre.diagnostics;
    diags.append(&mut ast.diagnostics);
    diags.sort_by(|a, b| (a.loc.line, a.loc.col).cmp(&(b.loc.line, b.loc.col)));
    ast.diagnostics = diags;
    ast.includes = pre.includes;
    ast.kind = classify_world(&ast);
    ast
}

/// TA if the file defines a GlobalPlatform TA entry point, CA if it calls a
/// client-API invocation function, Unknown otherwise.
pub fn classify_world(ast: &Ast) -> WorldKind {
    let defines_entry = ast
        .functions
        .iter()
        .any(|f| TA_ENTRY_POINTS.contains(&f.name.as_str()));
    if defines_entry {
        return WorldKind::Ta;
    }
    let mut calls_ca_api = false;
    let mut check = |e: &ast::Expr| {
        if let ast::ExprKind::Call { callee, .. } = &e.kind {
            if let ast::ExprKind::Ident(name) = &callee.kind {
                if CA_API_CALLS.contains(&name.as_str()) {
                    calls_ca_api = true;
                }
            }
        }
    };
    for f in &ast.functions {
        ast::walk_stmts(&f.body, &mut |s| visit_stmt_exprs(s, &mut check));
    }
    ast::walk_stmts(&ast.top_stmts, &mut |s| visit_stmt_exprs(s, &mut check));
    if calls_ca_api {
        WorldKind::Ca
    } else {
        WorldKind::Unknown
    }
}

/// Applies `f` to every expression directly owned by `s` (not recursing into
/// nested statements, which the statement walker already covers).
pub fn visit_stmt_exprs<'a>(s: &'a ast::StmtNode, f: &mut impl FnMut(&'a ast::Expr)) {
    match &s.kind {
        ast::Stmt::Decl(d) => {
            if let Some(i) = &d.init {
                i.walk(f);
            }
        }
        ast::Stmt::Expr(e) => e.walk(f),
        ast::Stmt::If { cond, .. } => cond.walk(f),
        ast::Stmt::While { cond, .. } | ast::Stmt::DoWhile { cond, .. } => cond.walk(f),
        ast::Stmt::For { cond, step, .. } => {
            if let Some(c) = cond {
                c.walk(f);
            }
            if let Some(st) = step {
                st.walk(f);
            }
        }
        ast::Stmt::Switch { scrutinee, .. } => scrutinee.walk(f),
        ast::Stmt::Return(Some(e)) => e.walk(f),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifies_ta_by_entry_point() {
        let ast = parse_source(
            SourceUnit::new(
                "ta.c",
                "TEE_Result TA_InvokeCommandEntryPoint(void *s, uint32_t c, uint32_t t, TEE_Param params[4])\n{\n    return 0;\n}\n"
                    .into(),
            ),
            &FrontendOptions::default(),
        );
        assert_eq!(ast.kind, WorldKind::Ta);
    }

    #[test]
    fn classifies_ca_by_invoke_call() {
        let ast = parse_source(
            SourceUnit::new(
                "ca.c",
                "void run(void)\n{\n    TEEC_InvokeCommand(&sess, 1, &op, &org);\n}\n".into(),
            ),
            &FrontendOptions::default(),
        );
        assert_eq!(ast.kind, WorldKind::Ca);
    }

    #[test]
    fn snippet_stays_unknown() {
        let ast = parse_source(
            SourceUnit::new("x.c", "char test[256] = {};\n".into()),
            &FrontendOptions::default(),
        );
        assert_eq!(ast.kind, WorldKind::Unknown);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = parse_unit(Path::new("/nonexistent/q.c"), &FrontendOptions::default());
        assert!(matches!(err, Err(FrontendError::Io { .. })));
    }

    #[test]
    fn non_utf8_is_encoding_error() {
        let dir = std::env::temp_dir().join("partscan-enc-test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.c");
        std::fs::write(&p, [0xff, 0xfe, 0x00, 0x41]).unwrap();
        let err = parse_unit(&p, &FrontendOptions::default());
        assert!(matches!(err, Err(FrontendError::Encoding { .. })));
    }
}
