//! Shallow, line-preserving preprocessor.
//!
//! This is deliberately not a full C preprocessor. It strips comments,
//! records `#include` lines, collects object-like `#define`s, applies a
//! conditional-compilation branch policy, and expands a built-in table of
//! GlobalPlatform constants plus the parameter-type packing macros. The
//! output has exactly the same number of lines as the input so every
//! downstream location refers to the original text.

use super::{FrontendOptions, SourceUnit};
use crate::loc::{Diagnostic, Loc};
use std::collections::BTreeMap;

/// Result of preprocessing one unit.
#[derive(Debug, Clone)]
pub struct PreprocessedUnit {
    pub unit: SourceUnit,
    pub includes: Vec<String>,
    pub defines: BTreeMap<String, String>,
    pub diagnostics: Vec<Diagnostic>,
}

/// GlobalPlatform parameter-type constants and common status codes.
pub fn builtin_defines() -> BTreeMap<String, String> {
    let pairs: &[(&str, &str)] = &[
        ("TEE_PARAM_TYPE_NONE", "0"),
        ("TEE_PARAM_TYPE_VALUE_INPUT", "1"),
        ("TEE_PARAM_TYPE_VALUE_OUTPUT", "2"),
        ("TEE_PARAM_TYPE_VALUE_INOUT", "3"),
        ("TEE_PARAM_TYPE_MEMREF_INPUT", "5"),
        ("TEE_PARAM_TYPE_MEMREF_OUTPUT", "6"),
        ("TEE_PARAM_TYPE_MEMREF_INOUT", "7"),
        ("TEEC_NONE", "0"),
        ("TEEC_VALUE_INPUT", "1"),
        ("TEEC_VALUE_OUTPUT", "2"),
        ("TEEC_VALUE_INOUT", "3"),
        ("TEEC_MEMREF_TEMP_INPUT", "5"),
        ("TEEC_MEMREF_TEMP_OUTPUT", "6"),
        ("TEEC_MEMREF_TEMP_INOUT", "7"),
        ("TEEC_MEMREF_WHOLE", "0xC"),
        ("TEEC_MEMREF_PARTIAL_INPUT", "0xD"),
        ("TEEC_MEMREF_PARTIAL_OUTPUT", "0xE"),
        ("TEEC_MEMREF_PARTIAL_INOUT", "0xF"),
        ("TEEC_MEM_INPUT", "0x1"),
        ("TEEC_MEM_OUTPUT", "0x2"),
        ("TEE_SUCCESS", "0"),
        ("TEEC_SUCCESS", "0"),
        ("TEE_ERROR_GENERIC", "0xFFFF0000"),
        ("TEE_ERROR_BAD_PARAMETERS", "0xFFFF0006"),
        ("TEE_ERROR_OUT_OF_MEMORY", "0xFFFF000C"),
        ("TEE_ERROR_SECURITY", "0xFFFF000F"),
        ("NULL", "0"),
    ];
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

const FN_MACROS: &[&str] = &[
    "TEE_PARAM_TYPES",
    "TEEC_PARAM_TYPES",
    "TEE_PARAM_TYPE_GET",
    "TEEC_PARAM_TYPE_GET",
];

pub fn preprocess(unit: SourceUnit, options: &FrontendOptions) -> PreprocessedUnit {
    let file = unit.path.clone();
    let stripped = strip_comments(&unit.text);
    let mut table = builtin_defines();
    for (k, v) in &options.defines {
        table.insert(k.clone(), v.clone());
    }
    let mut includes = Vec::new();
    let mut diagnostics = Vec::new();
    let directed = process_directives(
        &stripped,
        &file,
        &mut table,
        options,
        &mut includes,
        &mut diagnostics,
    );
    let expanded = expand_macros(&directed, &table);
    debug_assert_eq!(
        unit.text.matches('\n').count(),
        expanded.matches('\n').count()
    );
    PreprocessedUnit {
        unit: SourceUnit {
            path: unit.path,
            text: expanded,
            kind: unit.kind,
        },
        includes,
        defines: table,
        diagnostics,
    }
}

/// Replaces comments with spaces, keeping every newline. String and char
/// literals are respected so `//` inside a string survives.
pub fn strip_comments(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let n = chars.len();
    while i < n {
        let c = chars[i];
        match c {
            '"' | '\'' => {
                let quote = c;
                out.push(c);
                i += 1;
                while i < n && chars[i] != quote && chars[i] != '\n' {
                    if chars[i] == '\\' && i + 1 < n {
                        out.push(chars[i]);
                        i += 1;
                    }
                    if i < n {
                        out.push(chars[i]);
                        i += 1;
                    }
                }
                if i < n {
                    out.push(chars[i]);
                    i += 1;
                }
            }
            '/' if i + 1 < n && chars[i + 1] == '/' => {
                while i < n && chars[i] != '\n' {
                    out.push(' ');
                    i += 1;
                }
            }
            '/' if i + 1 < n && chars[i + 1] == '*' => {
                out.push_str("  ");
                i += 2;
                while i < n && !(chars[i] == '*' && i + 1 < n && chars[i + 1] == '/') {
                    out.push(if chars[i] == '\n' { '\n' } else { ' ' });
                    i += 1;
                }
                if i < n {
                    out.push_str("  ");
                    i += 2;
                }
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

struct CondFrame {
    active_branch: bool,
    taken_any: bool,
    parent_active: bool,
}

fn process_directives(
    text: &str,
    file: &str,
    table: &mut BTreeMap<String, String>,
    options: &FrontendOptions,
    includes: &mut Vec<String>,
    diagnostics: &mut Vec<Diagnostic>,
) -> String {
    let lines: Vec<&str> = text.split('\n').collect();
    let mut out_lines: Vec<String> = Vec::with_capacity(lines.len());
    let mut stack: Vec<CondFrame> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let raw = lines[i];
        let active = stack
            .iter()
            .all(|f| f.active_branch && f.parent_active);
        let trimmed = raw.trim_start();
        if !trimmed.starts_with('#') {
            out_lines.push(if active { raw.to_string() } else { String::new() });
            i += 1;
            continue;
        }
        // Join continuation lines; all joined lines are blanked.
        let first_line_no = i;
        let mut logical = raw.trim_end().to_string();
        while logical.ends_with('\\') && i + 1 < lines.len() {
            logical.pop();
            i += 1;
            logical.push(' ');
            logical.push_str(lines[i].trim_end());
        }
        for _ in first_line_no..=i {
            out_lines.push(String::new());
        }
        i += 1;

        let body = logical.trim_start().trim_start_matches('#').trim();
        let (word, rest) = split_word(body);
        match word {
            "include" => {
                if active {
                    let name = rest
                        .trim()
                        .trim_matches(|c| c == '<' || c == '>' || c == '"')
                        .to_string();
                    if !name.is_empty() {
                        includes.push(name);
                    }
                }
            }
            "define" => {
                if active {
                    let (name, value) = split_word(rest);
                    if name.is_empty() {
                        diagnostics.push(Diagnostic::new(
                            Loc::new(file, first_line_no as u32 + 1, 1),
                            "malformed #define skipped",
                        ));
                    } else if rest[name.len()..].starts_with('(') {
                        // Function-like user macro: recorded only; calls are
                        // parsed as ordinary call expressions downstream.
                    } else {
                        table.insert(name.to_string(), value.trim().to_string());
                    }
                }
            }
            "undef" => {
                if active {
                    table.remove(rest.trim());
                }
            }
            "if" | "ifdef" | "ifndef" => {
                let parent_active = active;
                let branch = eval_condition(word, rest, table, options);
                stack.push(CondFrame {
                    active_branch: branch,
                    taken_any: branch,
                    parent_active,
                });
            }
            "elif" => match stack.last_mut() {
                Some(frame) => {
                    if frame.taken_any {
                        frame.active_branch = false;
                    } else {
                        let branch = eval_condition("if", rest, table, options);
                        frame.active_branch = branch;
                        frame.taken_any = branch;
                    }
                }
                None => diagnostics.push(Diagnostic::new(
                    Loc::new(file, first_line_no as u32 + 1, 1),
                    "#elif without matching #if",
                )),
            },
            "else" => match stack.last_mut() {
                Some(frame) => {
                    frame.active_branch = !frame.taken_any;
                    frame.taken_any = true;
                }
                None => diagnostics.push(Diagnostic::new(
                    Loc::new(file, first_line_no as u32 + 1, 1),
                    "#else without matching #if",
                )),
            },
            "endif" => {
                if stack.pop().is_none() {
                    diagnostics.push(Diagnostic::new(
                        Loc::new(file, first_line_no as u32 + 1, 1),
                        "#endif without matching #if",
                    ));
                }
            }
            "pragma" | "error" | "warning" | "" => {}
            other => {
                diagnostics.push(Diagnostic::new(
                    Loc::new(file, first_line_no as u32 + 1, 1),
                    format!("unknown directive #{other} skipped"),
                ));
            }
        }
    }
    if !stack.is_empty() {
        diagnostics.push(Diagnostic::new(
            Loc::new(file, lines.len() as u32, 1),
            "unterminated conditional block",
        ));
    }
    out_lines.join("\n")
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim_start();
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    (&s[..end], &s[end..])
}

/// Literal conditions are evaluated; `#ifdef`/`#ifndef` consult the macro
/// table; anything else falls back to the configured branch policy
/// (keep the `#if` branch by default).
fn eval_condition(
    kind: &str,
    rest: &str,
    table: &BTreeMap<String, String>,
    options: &FrontendOptions,
) -> bool {
    let rest = rest.trim();
    match kind {
        "ifdef" => table.contains_key(rest),
        "ifndef" => !table.contains_key(rest),
        _ => {
            let expanded = expand_macros(rest, table);
            if let Some(v) = eval_const_expr(&expanded) {
                v != 0
            } else {
                !options.prefer_else_branch
            }
        }
    }
}

/// Expands object-like macros and the built-in function-like packing macros,
/// preserving line structure. Shorter expansions are padded with spaces so
/// columns on the same line stay put where possible.
pub fn expand_macros(text: &str, table: &BTreeMap<String, String>) -> String {
    let mut cur = text.to_string();
    for _ in 0..8 {
        let (next, changed) = expand_once(&cur, table);
        cur = next;
        if !changed {
            break;
        }
    }
    cur
}

fn expand_once(text: &str, table: &BTreeMap<String, String>) -> (String, bool) {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut out = String::with_capacity(n);
    let mut i = 0;
    let mut changed = false;
    while i < n {
        let c = chars[i];
        if c == '"' || c == '\'' {
            let quote = c;
            out.push(c);
            i += 1;
            while i < n && chars[i] != quote && chars[i] != '\n' {
                if chars[i] == '\\' && i + 1 < n {
                    out.push(chars[i]);
                    i += 1;
                }
                if i < n {
                    out.push(chars[i]);
                    i += 1;
                }
            }
            if i < n {
                out.push(chars[i]);
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < n && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let name: String = chars[start..i].iter().collect();
            // Numbers followed by identifiers (e.g. 0xFF) are handled by the
            // digit branch below, so `name` here never starts with a digit.
            if FN_MACROS.contains(&name.as_str()) {
                if let Some((args, end)) = scan_call_args(&chars, i) {
                    let vals: Vec<Option<i64>> = args
                        .iter()
                        .map(|a| eval_const_expr(&expand_macros(a, table)))
                        .collect();
                    if let Some(v) = apply_fn_macro(&name, &vals) {
                        let span: String = chars[start..end].iter().collect();
                        push_replacement(&mut out, &format!("{v:#x}"), &span);
                        i = end;
                        changed = true;
                        continue;
                    }
                }
                out.push_str(&name);
                continue;
            }
            if let Some(value) = table.get(&name) {
                let resolved = resolve_value(value, table, 0);
                push_replacement(&mut out, &resolved, &name);
                changed = true;
                continue;
            }
            out.push_str(&name);
            continue;
        }
        if c.is_ascii_digit() {
            while i < n && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
            {
                out.push(chars[i]);
                i += 1;
            }
            continue;
        }
        out.push(c);
        i += 1;
    }
    (out, changed)
}

fn resolve_value(value: &str, table: &BTreeMap<String, String>, depth: u8) -> String {
    if depth >= 8 {
        return value.to_string();
    }
    let trimmed = value.trim();
    if trimmed
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_')
        && trimmed.chars().next().is_some_and(|c| !c.is_ascii_digit())
    {
        if let Some(next) = table.get(trimmed) {
            return resolve_value(next, table, depth + 1);
        }
    }
    trimmed.to_string()
}

/// Writes `replacement` in place of `original`, padding with spaces when the
/// replacement is shorter and re-emitting any newlines the original spanned.
fn push_replacement(out: &mut String, replacement: &str, original: &str) {
    out.push_str(replacement);
    let newlines = original.matches('\n').count();
    for _ in 0..newlines {
        out.push('\n');
    }
    let orig_len = original.chars().filter(|c| *c != '\n').count();
    let repl_len = replacement.chars().count();
    if repl_len < orig_len {
        for _ in 0..(orig_len - repl_len) {
            out.push(' ');
        }
    }
}

/// Scans a balanced argument list starting at `(`; returns the top-level
/// comma-separated argument texts and the index one past `)`.
fn scan_call_args(chars: &[char], mut i: usize) -> Option<(Vec<String>, usize)> {
    let n = chars.len();
    while i < n && chars[i].is_whitespace() {
        i += 1;
    }
    if i >= n || chars[i] != '(' {
        return None;
    }
    i += 1;
    let mut depth = 1usize;
    let mut args = Vec::new();
    let mut cur = String::new();
    while i < n {
        let c = chars[i];
        match c {
            '(' => {
                depth += 1;
                cur.push(c);
            }
            ')' => {
                depth -= 1;
                if depth == 0 {
                    args.push(cur.trim().to_string());
                    return Some((args, i + 1));
                }
                cur.push(c);
            }
            ',' if depth == 1 => {
                args.push(cur.trim().to_string());
                cur = String::new();
            }
            _ => cur.push(c),
        }
        i += 1;
    }
    None
}

fn apply_fn_macro(name: &str, vals: &[Option<i64>]) -> Option<i64> {
    match name {
        "TEE_PARAM_TYPES" | "TEEC_PARAM_TYPES" => {
            if vals.len() != 4 {
                return None;
            }
            let mut packed: i64 = 0;
            for (slot, v) in vals.iter().enumerate() {
                packed |= ((*v)? & 0xF) << (4 * slot as i64);
            }
            Some(packed)
        }
        "TEE_PARAM_TYPE_GET" | "TEEC_PARAM_TYPE_GET" => {
            if vals.len() != 2 {
                return None;
            }
            let t = vals[0]?;
            let idx = vals[1]?;
            Some((t >> (4 * idx)) & 0xF)
        }
        _ => None,
    }
}

/// Evaluates a constant integer expression over `| & ^ << >> + - *` and
/// parentheses; returns `None` if any token is not constant.
pub fn eval_const_expr(s: &str) -> Option<i64> {
    let toks = super::lexer::tokenize(s);
    let mut pos = 0usize;
    let v = parse_or(&toks, &mut pos)?;
    match toks.get(pos).map(|t| &t.tok) {
        Some(super::lexer::Tok::Eof) => Some(v),
        _ => None,
    }
}

type Toks = [super::lexer::Token];

fn parse_or(t: &Toks, pos: &mut usize) -> Option<i64> {
    let mut v = parse_xor(t, pos)?;
    while matches!(t.get(*pos).map(|x| &x.tok), Some(super::lexer::Tok::Punct("|"))) {
        *pos += 1;
        v |= parse_xor(t, pos)?;
    }
    Some(v)
}

fn parse_xor(t: &Toks, pos: &mut usize) -> Option<i64> {
    let mut v = parse_and(t, pos)?;
    while matches!(t.get(*pos).map(|x| &x.tok), Some(super::lexer::Tok::Punct("^"))) {
        *pos += 1;
        v ^= parse_and(t, pos)?;
    }
    Some(v)
}

fn parse_and(t: &Toks, pos: &mut usize) -> Option<i64> {
    let mut v = parse_shift(t, pos)?;
    while matches!(t.get(*pos).map(|x| &x.tok), Some(super::lexer::Tok::Punct("&"))) {
        *pos += 1;
        v &= parse_shift(t, pos)?;
    }
    Some(v)
}

fn parse_shift(t: &Toks, pos: &mut usize) -> Option<i64> {
    let mut v = parse_add(t, pos)?;
    loop {
        match t.get(*pos).map(|x| &x.tok) {
            Some(super::lexer::Tok::Punct("<<")) => {
                *pos += 1;
                v = v.wrapping_shl(parse_add(t, pos)? as u32);
            }
            Some(super::lexer::Tok::Punct(">>")) => {
                *pos += 1;
                v = v.wrapping_shr(parse_add(t, pos)? as u32);
            }
            _ => return Some(v),
        }
    }
}

fn parse_add(t: &Toks, pos: &mut usize) -> Option<i64> {
    let mut v = parse_mul(t, pos)?;
    loop {
        match t.get(*pos).map(|x| &x.tok) {
            Some(super::lexer::Tok::Punct("+")) => {
                *pos += 1;
                v = v.wrapping_add(parse_mul(t, pos)?);
            }
            Some(super::lexer::Tok::Punct("-")) => {
                *pos += 1;
                v = v.wrapping_sub(parse_mul(t, pos)?);
            }
            _ => return Some(v),
        }
    }
}

fn parse_mul(t: &Toks, pos: &mut usize) -> Option<i64> {
    let mut v = parse_atom(t, pos)?;
    while matches!(t.get(*pos).map(|x| &x.tok), Some(super::lexer::Tok::Punct("*"))) {
        *pos += 1;
        v = v.wrapping_mul(parse_atom(t, pos)?);
    }
    Some(v)
}

fn parse_atom(t: &Toks, pos: &mut usize) -> Option<i64> {
    match t.get(*pos).map(|x| x.tok.clone()) {
        Some(super::lexer::Tok::Int(v)) => {
            *pos += 1;
            Some(v)
        }
        Some(super::lexer::Tok::Char(v)) => {
            *pos += 1;
            Some(v)
        }
        Some(super::lexer::Tok::Punct("(")) => {
            *pos += 1;
            let v = parse_or(t, pos)?;
            match t.get(*pos).map(|x| &x.tok) {
                Some(super::lexer::Tok::Punct(")")) => {
                    *pos += 1;
                    Some(v)
                }
                _ => None,
            }
        }
        Some(super::lexer::Tok::Punct("-")) => {
            *pos += 1;
            parse_atom(t, pos).map(|v| v.wrapping_neg())
        }
        Some(super::lexer::Tok::Punct("~")) => {
            *pos += 1;
            parse_atom(t, pos).map(|v| !v)
        }
        _ => None,
    }
}
