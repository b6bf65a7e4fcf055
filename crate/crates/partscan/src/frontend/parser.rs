//! Recursive-descent parser for the C subset with statement-level recovery.
//!
//! Anything outside the subset is skipped to the next statement boundary and
//! reported as a diagnostic; parsing never aborts a unit. File-scope
//! statements are accepted so uncompilable snippets still analyze.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use crate::loc::{Diagnostic, Loc};

const MAX_DEPTH: u32 = 200;

const TYPE_KEYWORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "const",
    "volatile", "static", "extern", "register", "inline", "struct", "union", "enum", "_Bool",
];

pub fn parse_text(text: &str, file: &str) -> Ast {
    let toks = tokenize(text);
    let mut p = Parser {
        toks,
        pos: 0,
        file: file.to_string(),
        diags: Vec::new(),
        next_stmt: 0,
        depth: 0,
    };
    p.translation_unit()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    file: String,
    diags: Vec<Diagnostic>,
    next_stmt: u32,
    depth: u32,
}

struct ParseErr;

type PResult<T> = Result<T, ParseErr>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos.min(self.toks.len() - 1)].tok
    }

    fn peek_at(&self, off: usize) -> &Tok {
        &self.toks[(self.pos + off).min(self.toks.len() - 1)].tok
    }

    fn cur_loc(&self) -> Loc {
        let t = &self.toks[self.pos.min(self.toks.len() - 1)];
        Loc::new(&self.file, t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos.min(self.toks.len() - 1)].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(ParseErr)
        }
    }

    fn is_ident(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_ident(&mut self, kw: &str) -> bool {
        if self.is_ident(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn new_stmt_id(&mut self) -> StmtId {
        let id = StmtId(self.next_stmt);
        self.next_stmt += 1;
        id
    }

    fn diag(&mut self, loc: Loc, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(loc, msg));
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    /// Skips to a statement boundary: past the next `;`, or to (not past) a
    /// closing `}`, balancing nested brackets along the way.
    fn skip_to_sync(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::Punct("(") | Tok::Punct("[") | Tok::Punct("{") => {
                    depth += 1;
                    self.bump();
                }
                Tok::Punct(")") | Tok::Punct("]") => {
                    if depth > 0 {
                        depth -= 1;
                    }
                    self.bump();
                }
                Tok::Punct("}") => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    self.bump();
                }
                Tok::Punct(";") => {
                    self.bump();
                    if depth == 0 {
                        return;
                    }
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    // ---------------------------------------------------------------
    // Top level
    // ---------------------------------------------------------------

    fn translation_unit(&mut self) -> Ast {
        let mut ast = Ast::empty(self.file.clone());
        while !self.at_eof() {
            let before = self.pos;
            self.external_item(&mut ast);
            if self.pos == before {
                // Guarantee progress on any token stream.
                let loc = self.cur_loc();
                self.diag(loc, "unrecognized token skipped");
                self.bump();
            }
        }
        ast.diagnostics.append(&mut self.diags);
        ast
    }

    fn external_item(&mut self, ast: &mut Ast) {
        if self.eat_punct(";") {
            return;
        }
        if self.is_ident("typedef") {
            let loc = self.cur_loc();
            self.skip_to_sync();
            let _ = loc;
            return;
        }
        // struct/union/enum definition at file scope
        if (self.is_ident("struct") || self.is_ident("union") || self.is_ident("enum"))
            && matches!(self.peek_at(1), Tok::Ident(_))
            && matches!(self.peek_at(2), Tok::Punct("{"))
        {
            self.skip_to_sync();
            return;
        }
        if self.looks_like_declaration() {
            let start = self.pos;
            match self.try_function_or_decl() {
                Ok(Item::Function(f)) => ast.functions.push(f),
                Ok(Item::Decls(ds)) => {
                    for d in ds {
                        // Mirrored into top_stmts so snippet files keep their
                        // declarations in statement order for analysis.
                        let id = self.new_stmt_id();
                        ast.top_stmts.push(StmtNode {
                            id,
                            loc: d.loc.clone(),
                            kind: Stmt::Decl(d.clone()),
                        });
                        ast.globals.push(d);
                    }
                }
                Ok(Item::Nothing) => {}
                Err(ParseErr) => {
                    self.pos = start;
                    let loc = self.cur_loc();
                    self.diag(loc, "unsupported declaration skipped");
                    self.skip_to_sync();
                }
            }
            return;
        }
        // Snippet mode: loose statement at file scope.
        match self.statement() {
            Ok(mut stmts) => ast.top_stmts.append(&mut stmts),
            Err(ParseErr) => {
                let loc = self.cur_loc();
                self.diag(loc, "unsupported construct skipped");
                self.skip_to_sync();
            }
        }
    }

    fn try_function_or_decl(&mut self) -> PResult<Item> {
        let ty = self.type_specifiers()?;
        // Pointer stars ahead of the declarator name.
        let mut pointers = 0u8;
        while self.eat_punct("*") {
            pointers = pointers.saturating_add(1);
        }
        let name_loc = self.cur_loc();
        let name = match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                s
            }
            // Forward declaration like `struct foo;`
            Tok::Punct(";") => {
                self.bump();
                return Ok(Item::Nothing);
            }
            _ => return Err(ParseErr),
        };
        let mut first_ty = ty.clone();
        first_ty.pointers = first_ty.pointers.saturating_add(pointers);
        if matches!(self.peek(), Tok::Punct("(")) {
            return self.function_rest(first_ty, name, name_loc);
        }
        // Variable declaration list.
        let mut decls = Vec::new();
        let d = self.declarator_rest(first_ty, name, name_loc)?;
        decls.push(d);
        while self.eat_punct(",") {
            let mut next_ty = ty.clone();
            next_ty.pointers = 0;
            while self.eat_punct("*") {
                next_ty.pointers = next_ty.pointers.saturating_add(1);
            }
            let nloc = self.cur_loc();
            let nname = match self.peek().clone() {
                Tok::Ident(s) => {
                    self.bump();
                    s
                }
                _ => return Err(ParseErr),
            };
            decls.push(self.declarator_rest(next_ty, nname, nloc)?);
        }
        self.expect_punct(";")?;
        Ok(Item::Decls(decls))
    }

    fn declarator_rest(&mut self, mut ty: TypeName, name: String, loc: Loc) -> PResult<Declaration> {
        while self.eat_punct("[") {
            if self.eat_punct("]") {
                ty.array_dims.push(None);
                continue;
            }
            let dim = self.expression()?;
            self.expect_punct("]")?;
            ty.array_dims.push(dim.const_value());
        }
        let init = if self.eat_punct("=") {
            Some(self.initializer()?)
        } else {
            None
        };
        Ok(Declaration {
            name,
            ty,
            init,
            loc,
        })
    }

    fn function_rest(&mut self, return_type: TypeName, name: String, loc: Loc) -> PResult<Item> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        let mut variadic = false;
        if !self.eat_punct(")") {
            loop {
                if self.eat_punct("...") {
                    variadic = true;
                    break;
                }
                if self.is_ident("void") && matches!(self.peek_at(1), Tok::Punct(")")) {
                    self.bump();
                    break;
                }
                let pty = self.type_specifiers()?;
                let mut ptrs = 0u8;
                while self.eat_punct("*") {
                    ptrs = ptrs.saturating_add(1);
                }
                let ploc = self.cur_loc();
                let pname = match self.peek().clone() {
                    Tok::Ident(s) => {
                        self.bump();
                        s
                    }
                    _ => String::new(),
                };
                let mut full = pty;
                full.pointers = full.pointers.saturating_add(ptrs);
                while self.eat_punct("[") {
                    if self.eat_punct("]") {
                        full.array_dims.push(None);
                        continue;
                    }
                    let dim = self.expression()?;
                    self.expect_punct("]")?;
                    full.array_dims.push(dim.const_value());
                }
                params.push(ParamDecl {
                    name: pname,
                    ty: full,
                    loc: ploc,
                });
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.expect_punct(")")?;
        }
        if self.eat_punct(";") {
            // Prototype only; nothing to analyze.
            return Ok(Item::Nothing);
        }
        self.expect_punct("{")?;
        let body = self.block_body();
        Ok(Item::Function(FunctionDef {
            name,
            return_type,
            params,
            variadic,
            body,
            loc,
        }))
    }

    fn looks_like_declaration(&self) -> bool {
        match self.peek() {
            Tok::Ident(s) if TYPE_KEYWORDS.contains(&s.as_str()) => true,
            Tok::Ident(s) if s == "typedef" => true,
            Tok::Ident(_) => {
                // `Name ident`, `Name *ident`, `Name **ident`
                let mut off = 1;
                while matches!(self.peek_at(off), Tok::Punct("*")) {
                    off += 1;
                }
                if off == 1 {
                    matches!(self.peek_at(1), Tok::Ident(_))
                } else {
                    matches!(self.peek_at(off), Tok::Ident(_))
                        && matches!(
                            self.peek_at(off + 1),
                            Tok::Punct(";")
                                | Tok::Punct("=")
                                | Tok::Punct(",")
                                | Tok::Punct("[")
                                | Tok::Punct(")")
                        )
                }
            }
            _ => false,
        }
    }

    fn type_specifiers(&mut self) -> PResult<TypeName> {
        let mut words: Vec<String> = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Ident(s)
                    if TYPE_KEYWORDS.contains(&s.as_str())
                        && !matches!(s.as_str(), "struct" | "union" | "enum") =>
                {
                    // Qualifiers and storage classes are dropped from the name.
                    if !matches!(
                        s.as_str(),
                        "const" | "volatile" | "static" | "extern" | "register" | "inline"
                    ) {
                        words.push(s.clone());
                    }
                    self.bump();
                }
                Tok::Ident(s) if matches!(s.as_str(), "struct" | "union" | "enum") => {
                    self.bump();
                    if let Tok::Ident(tag) = self.peek().clone() {
                        self.bump();
                        words.push(format!("{s} {tag}"));
                    } else {
                        words.push(s.clone());
                    }
                    // Inline body (e.g. anonymous struct) is skipped.
                    if matches!(self.peek(), Tok::Punct("{")) {
                        self.skip_balanced_braces()?;
                    }
                }
                Tok::Ident(s) if words.is_empty() => {
                    self.bump();
                    words.push(s.clone());
                    break;
                }
                _ => break,
            }
        }
        if words.is_empty() {
            return Err(ParseErr);
        }
        Ok(TypeName::named(words.join(" ")))
    }

    fn skip_balanced_braces(&mut self) -> PResult<()> {
        self.expect_punct("{")?;
        let mut depth = 1usize;
        while depth > 0 {
            match self.bump() {
                Tok::Punct("{") => depth += 1,
                Tok::Punct("}") => depth -= 1,
                Tok::Eof => return Err(ParseErr),
                _ => {}
            }
        }
        Ok(())
    }

    // ---------------------------------------------------------------
    // Statements
    // ---------------------------------------------------------------

    fn block_body(&mut self) -> Vec<StmtNode> {
        let mut out = Vec::new();
        loop {
            if self.eat_punct("}") || self.at_eof() {
                return out;
            }
            let before = self.pos;
            match self.statement() {
                Ok(mut stmts) => out.append(&mut stmts),
                Err(ParseErr) => {
                    let loc = self.cur_loc();
                    self.diag(loc, "unsupported construct skipped");
                    self.skip_to_sync();
                }
            }
            if self.pos == before {
                let loc = self.cur_loc();
                self.diag(loc, "unrecognized token skipped");
                self.bump();
            }
        }
    }

    /// Parses one statement; declarations may expand to several nodes.
    fn statement(&mut self) -> PResult<Vec<StmtNode>> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            self.depth -= 1;
            return Err(ParseErr);
        }
        let r = self.statement_inner();
        self.depth -= 1;
        r
    }

    fn statement_inner(&mut self) -> PResult<Vec<StmtNode>> {
        let loc = self.cur_loc();
        // Plain label: `name:` followed by a statement.
        if let Tok::Ident(name) = self.peek().clone() {
            if !matches!(name.as_str(), "default" | "case")
                && matches!(self.peek_at(1), Tok::Punct(":"))
            {
                self.bump();
                self.bump();
                return self.statement();
            }
        }
        match self.peek().clone() {
            Tok::Punct(";") => {
                self.bump();
                let id = self.new_stmt_id();
                Ok(vec![StmtNode {
                    id,
                    loc,
                    kind: Stmt::Empty,
                }])
            }
            Tok::Punct("{") => {
                self.bump();
                let body = self.block_body();
                let id = self.new_stmt_id();
                Ok(vec![StmtNode {
                    id,
                    loc,
                    kind: Stmt::Block(body),
                }])
            }
            Tok::Ident(kw) => match kw.as_str() {
                "if" => self.if_statement(loc).map(|s| vec![s]),
                "while" => self.while_statement(loc).map(|s| vec![s]),
                "do" => self.do_statement(loc).map(|s| vec![s]),
                "for" => self.for_statement(loc).map(|s| vec![s]),
                "switch" => self.switch_statement(loc).map(|s| vec![s]),
                "return" => {
                    self.bump();
                    let expr = if matches!(self.peek(), Tok::Punct(";")) {
                        None
                    } else {
                        Some(self.expression()?)
                    };
                    self.expect_punct(";")?;
                    let id = self.new_stmt_id();
                    Ok(vec![StmtNode {
                        id,
                        loc,
                        kind: Stmt::Return(expr),
                    }])
                }
                "break" => {
                    self.bump();
                    self.expect_punct(";")?;
                    let id = self.new_stmt_id();
                    Ok(vec![StmtNode {
                        id,
                        loc,
                        kind: Stmt::Break,
                    }])
                }
                "continue" => {
                    self.bump();
                    self.expect_punct(";")?;
                    let id = self.new_stmt_id();
                    Ok(vec![StmtNode {
                        id,
                        loc,
                        kind: Stmt::Continue,
                    }])
                }
                "goto" | "asm" | "__asm" | "__asm__" => Err(ParseErr),
                _ if self.looks_like_declaration() => self.declaration_statement(),
                _ => self.expression_statement(loc).map(|s| vec![s]),
            },
            _ => self.expression_statement(loc).map(|s| vec![s]),
        }
    }

    fn declaration_statement(&mut self) -> PResult<Vec<StmtNode>> {
        let ty = self.type_specifiers()?;
        let mut out = Vec::new();
        loop {
            let mut dty = ty.clone();
            while self.eat_punct("*") {
                dty.pointers = dty.pointers.saturating_add(1);
            }
            let dloc = self.cur_loc();
            let name = match self.peek().clone() {
                Tok::Ident(s) => {
                    self.bump();
                    s
                }
                _ => return Err(ParseErr),
            };
            let decl = self.declarator_rest(dty, name, dloc.clone())?;
            let id = self.new_stmt_id();
            out.push(StmtNode {
                id,
                loc: dloc,
                kind: Stmt::Decl(decl),
            });
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(";")?;
        Ok(out)
    }

    fn expression_statement(&mut self, loc: Loc) -> PResult<StmtNode> {
        let expr = self.expression()?;
        self.expect_punct(";")?;
        let id = self.new_stmt_id();
        Ok(StmtNode {
            id,
            loc,
            kind: Stmt::Expr(expr),
        })
    }

    fn branch_body(&mut self) -> PResult<Vec<StmtNode>> {
        if self.eat_punct("{") {
            Ok(self.block_body())
        } else {
            self.statement()
        }
    }

    fn if_statement(&mut self, loc: Loc) -> PResult<StmtNode> {
        self.bump();
        self.expect_punct("(")?;
        let cond = self.expression()?;
        self.expect_punct(")")?;
        let then_branch = self.branch_body()?;
        let else_branch = if self.eat_ident("else") {
            Some(self.branch_body()?)
        } else {
            None
        };
        let id = self.new_stmt_id();
        Ok(StmtNode {
            id,
            loc,
            kind: Stmt::If {
                cond,
                then_branch,
                else_branch,
            },
        })
    }

    fn while_statement(&mut self, loc: Loc) -> PResult<StmtNode> {
        self.bump();
        self.expect_punct("(")?;
        let cond = self.expression()?;
        self.expect_punct(")")?;
        let body = self.branch_body()?;
        let id = self.new_stmt_id();
        Ok(StmtNode {
            id,
            loc,
            kind: Stmt::While { cond, body },
        })
    }

    fn do_statement(&mut self, loc: Loc) -> PResult<StmtNode> {
        self.bump();
        let body = self.branch_body()?;
        if !self.eat_ident("while") {
            return Err(ParseErr);
        }
        self.expect_punct("(")?;
        let cond = self.expression()?;
        self.expect_punct(")")?;
        self.expect_punct(";")?;
        let id = self.new_stmt_id();
        Ok(StmtNode {
            id,
            loc,
            kind: Stmt::DoWhile { body, cond },
        })
    }

    fn for_statement(&mut self, loc: Loc) -> PResult<StmtNode> {
        self.bump();
        self.expect_punct("(")?;
        let init = if self.eat_punct(";") {
            None
        } else if self.looks_like_declaration() {
            let mut decls = self.declaration_statement()?;
            // Multiple init declarators collapse to the first for CFG purposes.
            decls.drain(1..);
            decls.pop().map(Box::new)
        } else {
            let iloc = self.cur_loc();
            let e = self.expression()?;
            self.expect_punct(";")?;
            let id = self.new_stmt_id();
            Some(Box::new(StmtNode {
                id,
                loc: iloc,
                kind: Stmt::Expr(e),
            }))
        };
        let cond = if matches!(self.peek(), Tok::Punct(";")) {
            None
        } else {
            Some(self.expression()?)
        };
        self.expect_punct(";")?;
        let step = if matches!(self.peek(), Tok::Punct(")")) {
            None
        } else {
            Some(self.expression()?)
        };
        self.expect_punct(")")?;
        let body = self.branch_body()?;
        let id = self.new_stmt_id();
        Ok(StmtNode {
            id,
            loc,
            kind: Stmt::For {
                init,
                cond,
                step,
                body,
            },
        })
    }

    fn switch_statement(&mut self, loc: Loc) -> PResult<StmtNode> {
        self.bump();
        self.expect_punct("(")?;
        let scrutinee = self.expression()?;
        self.expect_punct(")")?;
        self.expect_punct("{")?;
        let mut cases: Vec<SwitchCase> = Vec::new();
        loop {
            if self.eat_punct("}") || self.at_eof() {
                break;
            }
            if self.is_ident("case") || self.is_ident("default") {
                let cloc = self.cur_loc();
                let mut labels = Vec::new();
                while self.is_ident("case") || self.is_ident("default") {
                    if self.eat_ident("case") {
                        let e = self.expression()?;
                        self.expect_punct(":")?;
                        labels.push(Some(e));
                    } else {
                        self.bump();
                        self.expect_punct(":")?;
                        labels.push(None);
                    }
                }
                let mut body = Vec::new();
                while !self.is_ident("case")
                    && !self.is_ident("default")
                    && !matches!(self.peek(), Tok::Punct("}") | Tok::Eof)
                {
                    let before = self.pos;
                    match self.statement() {
                        Ok(mut s) => body.append(&mut s),
                        Err(ParseErr) => {
                            let l = self.cur_loc();
                            self.diag(l, "unsupported construct skipped");
                            self.skip_to_sync();
                        }
                    }
                    if self.pos == before {
                        let l = self.cur_loc();
                        self.diag(l, "unrecognized token skipped");
                        self.bump();
                    }
                }
                cases.push(SwitchCase {
                    labels,
                    body,
                    loc: cloc,
                });
            } else {
                // Statement before any case label: not meaningful, skip.
                let l = self.cur_loc();
                self.diag(l, "statement before first case label skipped");
                self.skip_to_sync();
            }
        }
        let id = self.new_stmt_id();
        Ok(StmtNode {
            id,
            loc,
            kind: Stmt::Switch { scrutinee, cases },
        })
    }

    // ---------------------------------------------------------------
    // Expressions
    // ---------------------------------------------------------------

    fn expression(&mut self) -> PResult<Expr> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            self.depth -= 1;
            return Err(ParseErr);
        }
        let r = self.comma_expr();
        self.depth -= 1;
        r
    }

    fn comma_expr(&mut self) -> PResult<Expr> {
        let first = self.assignment_expr()?;
        if matches!(self.peek(), Tok::Punct(",")) {
            // Comma expressions only appear where a single expression is
            // required (e.g. for-steps); argument lists never reach here.
            let loc = first.loc.clone();
            let mut acc = first;
            while self.eat_punct(",") {
                let rhs = self.assignment_expr()?;
                acc = Expr {
                    loc: loc.clone(),
                    kind: ExprKind::Comma(Box::new(acc), Box::new(rhs)),
                };
            }
            return Ok(acc);
        }
        Ok(first)
    }

    fn assignment_expr(&mut self) -> PResult<Expr> {
        let lhs = self.ternary_expr()?;
        let op: Option<Option<&'static str>> = match self.peek() {
            Tok::Punct("=") => Some(None),
            Tok::Punct("+=") => Some(Some("+")),
            Tok::Punct("-=") => Some(Some("-")),
            Tok::Punct("*=") => Some(Some("*")),
            Tok::Punct("/=") => Some(Some("/")),
            Tok::Punct("%=") => Some(Some("%")),
            Tok::Punct("&=") => Some(Some("&")),
            Tok::Punct("|=") => Some(Some("|")),
            Tok::Punct("^=") => Some(Some("^")),
            Tok::Punct("<<=") => Some(Some("<<")),
            Tok::Punct(">>=") => Some(Some(">>")),
            _ => None,
        };
        if let Some(compound) = op {
            self.bump();
            let value = self.assignment_expr()?;
            let loc = lhs.loc.clone();
            return Ok(Expr {
                loc,
                kind: ExprKind::Assign {
                    op: compound,
                    target: Box::new(lhs),
                    value: Box::new(value),
                },
            });
        }
        Ok(lhs)
    }

    fn ternary_expr(&mut self) -> PResult<Expr> {
        let cond = self.binary_expr(0)?;
        if self.eat_punct("?") {
            let then_expr = self.comma_expr()?;
            self.expect_punct(":")?;
            let else_expr = self.assignment_expr()?;
            let loc = cond.loc.clone();
            return Ok(Expr {
                loc,
                kind: ExprKind::Ternary {
                    cond: Box::new(cond),
                    then_expr: Box::new(then_expr),
                    else_expr: Box::new(else_expr),
                },
            });
        }
        Ok(cond)
    }

    fn binary_prec(op: &Tok) -> Option<(&'static str, u8)> {
        let (name, prec) = match op {
            Tok::Punct("||") => ("||", 1),
            Tok::Punct("&&") => ("&&", 2),
            Tok::Punct("|") => ("|", 3),
            Tok::Punct("^") => ("^", 4),
            Tok::Punct("&") => ("&", 5),
            Tok::Punct("==") => ("==", 6),
            Tok::Punct("!=") => ("!=", 6),
            Tok::Punct("<") => ("<", 7),
            Tok::Punct(">") => (">", 7),
            Tok::Punct("<=") => ("<=", 7),
            Tok::Punct(">=") => (">=", 7),
            Tok::Punct("<<") => ("<<", 8),
            Tok::Punct(">>") => (">>", 8),
            Tok::Punct("+") => ("+", 9),
            Tok::Punct("-") => ("-", 9),
            Tok::Punct("*") => ("*", 10),
            Tok::Punct("/") => ("/", 10),
            Tok::Punct("%") => ("%", 10),
            _ => return None,
        };
        Some((name, prec))
    }

    fn binary_expr(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary_expr()?;
        while let Some((name, prec)) = Self::binary_prec(self.peek()) {
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary_expr(prec + 1)?;
            let loc = lhs.loc.clone();
            lhs = Expr {
                loc,
                kind: ExprKind::Binary {
                    op: name,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
            };
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            self.depth -= 1;
            return Err(ParseErr);
        }
        let r = self.unary_expr_inner();
        self.depth -= 1;
        r
    }

    fn unary_expr_inner(&mut self) -> PResult<Expr> {
        let loc = self.cur_loc();
        let op = match self.peek() {
            Tok::Punct("!") => Some(UnaryOp::Not),
            Tok::Punct("~") => Some(UnaryOp::BitNot),
            Tok::Punct("-") => Some(UnaryOp::Neg),
            Tok::Punct("+") => {
                self.bump();
                return self.unary_expr();
            }
            Tok::Punct("*") => Some(UnaryOp::Deref),
            Tok::Punct("&") => Some(UnaryOp::AddrOf),
            Tok::Punct("++") => Some(UnaryOp::PreInc),
            Tok::Punct("--") => Some(UnaryOp::PreDec),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let operand = self.unary_expr()?;
            return Ok(Expr {
                loc,
                kind: ExprKind::Unary {
                    op,
                    operand: Box::new(operand),
                },
            });
        }
        if self.is_ident("sizeof") {
            self.bump();
            if matches!(self.peek(), Tok::Punct("(")) && self.type_follows(1) {
                self.bump();
                let ty = self.type_name_only()?;
                self.expect_punct(")")?;
                return Ok(Expr {
                    loc,
                    kind: ExprKind::Sizeof(Box::new(SizeofArg::Type(ty))),
                });
            }
            let e = self.unary_expr()?;
            return Ok(Expr {
                loc,
                kind: ExprKind::Sizeof(Box::new(SizeofArg::Expr(e))),
            });
        }
        // Cast: `(` type `)` unary
        if matches!(self.peek(), Tok::Punct("(")) && self.type_follows(1) {
            let start = self.pos;
            self.bump();
            if let Ok(ty) = self.type_name_only() {
                if self.eat_punct(")") && self.starts_unary() {
                    let operand = self.unary_expr()?;
                    return Ok(Expr {
                        loc,
                        kind: ExprKind::Cast {
                            ty,
                            operand: Box::new(operand),
                        },
                    });
                }
            }
            self.pos = start;
        }
        self.postfix_expr()
    }

    /// True when the token at `off` begins a type name and the construct is
    /// plausibly a cast or sizeof(type).
    fn type_follows(&self, off: usize) -> bool {
        match self.peek_at(off) {
            Tok::Ident(s) if TYPE_KEYWORDS.contains(&s.as_str()) => true,
            Tok::Ident(s) => {
                // `(Name *)` or `(Name)` followed by something castable.
                let known_type_suffix = s.ends_with("_t") || s.starts_with("TEE") || s == "size_t";
                match self.peek_at(off + 1) {
                    Tok::Punct("*") => true,
                    Tok::Punct(")") => known_type_suffix,
                    _ => false,
                }
            }
            _ => false,
        }
    }

    fn starts_unary(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Ident(_)
                | Tok::Int(_)
                | Tok::Str(_)
                | Tok::Char(_)
                | Tok::Punct("(")
                | Tok::Punct("!")
                | Tok::Punct("~")
                | Tok::Punct("-")
                | Tok::Punct("*")
                | Tok::Punct("&")
                | Tok::Punct("++")
                | Tok::Punct("--")
        )
    }

    fn type_name_only(&mut self) -> PResult<TypeName> {
        let mut ty = self.type_specifiers()?;
        while self.eat_punct("*") {
            ty.pointers = ty.pointers.saturating_add(1);
        }
        Ok(ty)
    }

    fn postfix_expr(&mut self) -> PResult<Expr> {
        let mut e = self.primary_expr()?;
        loop {
            let loc = self.cur_loc();
            match self.peek().clone() {
                Tok::Punct("(") => {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.eat_punct(")") {
                        loop {
                            args.push(self.assignment_expr()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                        self.expect_punct(")")?;
                    }
                    let cloc = e.loc.clone();
                    e = Expr {
                        loc: cloc,
                        kind: ExprKind::Call {
                            callee: Box::new(e),
                            args,
                        },
                    };
                }
                Tok::Punct("[") => {
                    self.bump();
                    let index = self.comma_expr()?;
                    self.expect_punct("]")?;
                    let bloc = e.loc.clone();
                    e = Expr {
                        loc: bloc,
                        kind: ExprKind::Index {
                            base: Box::new(e),
                            index: Box::new(index),
                        },
                    };
                }
                Tok::Punct(".") | Tok::Punct("->") => {
                    let arrow = matches!(self.peek(), Tok::Punct("->"));
                    self.bump();
                    let field = match self.peek().clone() {
                        Tok::Ident(s) => {
                            self.bump();
                            s
                        }
                        _ => return Err(ParseErr),
                    };
                    let bloc = e.loc.clone();
                    e = Expr {
                        loc: bloc,
                        kind: ExprKind::Member {
                            base: Box::new(e),
                            field,
                            arrow,
                        },
                    };
                }
                Tok::Punct("++") => {
                    self.bump();
                    e = Expr {
                        loc,
                        kind: ExprKind::Unary {
                            op: UnaryOp::PostInc,
                            operand: Box::new(e),
                        },
                    };
                }
                Tok::Punct("--") => {
                    self.bump();
                    e = Expr {
                        loc,
                        kind: ExprKind::Unary {
                            op: UnaryOp::PostDec,
                            operand: Box::new(e),
                        },
                    };
                }
                _ => return Ok(e),
            }
        }
    }

    fn primary_expr(&mut self) -> PResult<Expr> {
        let loc = self.cur_loc();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr {
                    loc,
                    kind: ExprKind::IntLit(v),
                })
            }
            Tok::Char(v) => {
                self.bump();
                Ok(Expr {
                    loc,
                    kind: ExprKind::IntLit(v),
                })
            }
            Tok::Str(s) => {
                self.bump();
                let mut full = s;
                while let Tok::Str(next) = self.peek().clone() {
                    full.push_str(&next);
                    self.bump();
                }
                Ok(Expr {
                    loc,
                    kind: ExprKind::StrLit(full),
                })
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Expr {
                    loc,
                    kind: ExprKind::Ident(s),
                })
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.comma_expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Punct("{") => self.initializer(),
            _ => Err(ParseErr),
        }
    }

    fn initializer(&mut self) -> PResult<Expr> {
        let loc = self.cur_loc();
        if !self.eat_punct("{") {
            return self.assignment_expr();
        }
        let mut inits = Vec::new();
        loop {
            if self.eat_punct("}") {
                break;
            }
            let designator = if matches!(self.peek(), Tok::Punct("."))
                && matches!(self.peek_at(1), Tok::Ident(_))
            {
                self.bump();
                let name = match self.peek().clone() {
                    Tok::Ident(s) => {
                        self.bump();
                        s
                    }
                    _ => return Err(ParseErr),
                };
                self.expect_punct("=")?;
                Some(name)
            } else {
                None
            };
            let value = self.initializer()?;
            inits.push(Initializer { designator, value });
            if !self.eat_punct(",") {
                self.expect_punct("}")?;
                break;
            }
        }
        Ok(Expr {
            loc,
            kind: ExprKind::InitList(inits),
        })
    }
}

enum Item {
    Function(FunctionDef),
    Decls(Vec<Declaration>),
    Nothing,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bare_snippet_with_decl_and_call() {
        let text = "char test[256] = {};\n\
                    // comment line\n\
                    TEE_MemMove(test, params[1].memref.buffer, params[1].memref.size);\n";
        let stripped = super::super::preprocess::strip_comments(text);
        let ast = parse_text(&stripped, "ta.c");
        assert_eq!(ast.globals.len(), 1);
        assert!(ast.diagnostics.is_empty());
        // One declaration plus one loose call statement.
        let calls: Vec<_> = ast
            .top_stmts
            .iter()
            .filter(|s| matches!(s.kind, Stmt::Expr(_)))
            .collect();
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].loc.line, 3);
        assert_eq!(calls[0].loc.col, 1);
    }

    #[test]
    fn empty_file_parses_clean() {
        let ast = parse_text("", "e.c");
        assert!(ast.functions.is_empty());
        assert!(ast.diagnostics.is_empty());
    }

    #[test]
    fn inline_assembly_is_skipped_with_diagnostic() {
        let text = "void f(void)\n{\n    asm volatile(\"nop\");\n    int x = 1;\n}\n";
        let ast = parse_text(text, "a.c");
        assert_eq!(ast.functions.len(), 1);
        assert_eq!(ast.diagnostics.len(), 1);
        assert_eq!(ast.diagnostics[0].loc.line, 3);
        // The rest of the function still parses.
        assert_eq!(ast.functions[0].body.len(), 1);
    }

    #[test]
    fn parses_entry_point_signature() {
        let text = "TEE_Result TA_InvokeCommandEntryPoint(void *sess, uint32_t cmd, uint32_t param_types, TEE_Param params[4])\n{\n    return 0;\n}\n";
        let ast = parse_text(text, "ta.c");
        assert_eq!(ast.functions.len(), 1);
        let f = &ast.functions[0];
        assert_eq!(f.params.len(), 4);
        assert_eq!(f.params[3].ty.base, "TEE_Param");
        assert_eq!(f.params[3].ty.array_dims, vec![Some(4)]);
    }

    #[test]
    fn parses_designated_initializer() {
        let text = "TEEC_SharedMemory shm = {\n    .size = sizeof(membuf_input),\n};\n";
        let ast = parse_text(text, "ca.c");
        assert_eq!(ast.globals.len(), 1);
        match &ast.globals[0].init {
            Some(Expr {
                kind: ExprKind::InitList(inits),
                ..
            }) => {
                assert_eq!(inits[0].designator.as_deref(), Some("size"));
            }
            other => panic!("unexpected init: {other:?}"),
        }
    }

    #[test]
    fn parses_cast_and_address_of() {
        let text = "op.params[0].tmpref.buffer = (void *)dump;\n";
        let ast = parse_text(text, "ca.c");
        assert_eq!(ast.top_stmts.len(), 1);
        assert!(ast.diagnostics.is_empty());
    }

    #[test]
    fn for_loop_with_decl_init() {
        let text = "void f(TEE_Param params[4])\n{\n    for (int i = 0; i < params[2].memref.size; i++) {\n        g(i);\n    }\n}\n";
        let ast = parse_text(text, "t.c");
        assert!(ast.diagnostics.is_empty());
        assert_eq!(ast.functions[0].body.len(), 1);
    }

    #[test]
    fn switch_with_cases() {
        let text = "void f(int cmd)\n{\n    switch (cmd) {\n    case 1:\n        a();\n        break;\n    default:\n        b();\n    }\n}\n";
        let ast = parse_text(text, "t.c");
        assert!(ast.diagnostics.is_empty());
        match &ast.functions[0].body[0].kind {
            Stmt::Switch { cases, .. } => assert_eq!(cases.len(), 2),
            other => panic!("expected switch, got {other:?}"),
        }
    }

    #[test]
    fn never_panics_on_garbage(/* totality smoke; the full property lives in the acceptance suite */)
    {
        for text in ["(((((((", "{{{{", "int x = ;;;", "\u{1F980} fn", "case 3: ::"] {
            let _ = parse_text(text, "g.c");
        }
    }
}
