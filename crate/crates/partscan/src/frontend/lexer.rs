//! Tokenizer for the C subset.
//!
//! The lexer is total: any byte sequence that decodes as UTF-8 produces a
//! token stream. Characters it cannot classify become `Tok::Error` tokens
//! which the parser skips with a diagnostic.


#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Char(i64),
    Punct(&'static str),
    /// A byte the lexer could not classify.
    Error(char),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

/// Multi-character punctuators, longest first so prefixes do not shadow them.
const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "(", ")", "[", "]", "{", "}", ";", ",", ".", "+",
    "-", "*", "/", "%", "<", ">", "=", "!", "&", "|", "^", "~", "?", ":",
];

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;
    let n = chars.len();

    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, chars: &[char]| {
        if chars[*i] == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
        *i += 1;
    };

    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, &chars);
            continue;
        }
        let tline = line;
        let tcol = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < n && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                advance(&mut i, &mut line, &mut col, &chars);
            }
            out.push(Token {
                tok: Tok::Ident(s),
                line: tline,
                col: tcol,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while i < n
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || chars[i] == '_')
            {
                s.push(chars[i]);
                advance(&mut i, &mut line, &mut col, &chars);
            }
            out.push(Token {
                tok: Tok::Int(parse_int(&s)),
                line: tline,
                col: tcol,
            });
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col, &chars);
            let mut s = String::new();
            while i < n && chars[i] != '"' {
                if chars[i] == '\\' && i + 1 < n {
                    s.push(chars[i]);
                    advance(&mut i, &mut line, &mut col, &chars);
                }
                if i < n {
                    if chars[i] == '\n' {
                        break; // unterminated on this line
                    }
                    s.push(chars[i]);
                    advance(&mut i, &mut line, &mut col, &chars);
                }
            }
            if i < n && chars[i] == '"' {
                advance(&mut i, &mut line, &mut col, &chars);
            }
            out.push(Token {
                tok: Tok::Str(unescape(&s)),
                line: tline,
                col: tcol,
            });
            continue;
        }
        if c == '\'' {
            advance(&mut i, &mut line, &mut col, &chars);
            let mut v: i64 = 0;
            let mut any = false;
            while i < n && chars[i] != '\'' && chars[i] != '\n' {
                let ch = if chars[i] == '\\' && i + 1 < n {
                    advance(&mut i, &mut line, &mut col, &chars);
                    escape_char(chars[i])
                } else {
                    chars[i] as i64
                };
                v = v.wrapping_shl(8).wrapping_add(ch);
                any = true;
                advance(&mut i, &mut line, &mut col, &chars);
            }
            if i < n && chars[i] == '\'' {
                advance(&mut i, &mut line, &mut col, &chars);
            }
            let _ = any;
            out.push(Token {
                tok: Tok::Char(v),
                line: tline,
                col: tcol,
            });
            continue;
        }
        let mut matched = false;
        for p in PUNCTS {
            let pc: Vec<char> = p.chars().collect();
            if i + pc.len() <= n && chars[i..i + pc.len()] == pc[..] {
                for _ in 0..pc.len() {
                    advance(&mut i, &mut line, &mut col, &chars);
                }
                out.push(Token {
                    tok: Tok::Punct(p),
                    line: tline,
                    col: tcol,
                });
                matched = true;
                break;
            }
        }
        if matched {
            continue;
        }
        out.push(Token {
            tok: Tok::Error(c),
            line: tline,
            col: tcol,
        });
        advance(&mut i, &mut line, &mut col, &chars);
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    out
}

/// Integer literal parser tolerant of suffixes and malformed digits.
/// Values that overflow saturate instead of failing.
pub fn parse_int(s: &str) -> i64 {
    let lower = s.to_ascii_lowercase();
    let trimmed = lower.trim_end_matches(|c| c == 'u' || c == 'l');
    let (digits, radix) = if let Some(hex) = trimmed.strip_prefix("0x") {
        (hex, 16)
    } else if trimmed.len() > 1 && trimmed.starts_with('0') && !trimmed.contains('.') {
        (&trimmed[1..], 8)
    } else {
        (trimmed, 10)
    };
    let mut v: i128 = 0;
    for ch in digits.chars() {
        match ch.to_digit(radix) {
            Some(d) => {
                v = v.saturating_mul(radix as i128).saturating_add(d as i128);
            }
            None => break,
        }
    }
    v.clamp(i64::MIN as i128, i64::MAX as i128) as i64
}

fn escape_char(c: char) -> i64 {
    match c {
        'n' => 10,
        't' => 9,
        'r' => 13,
        '0' => 0,
        _ => c as i64,
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c == '\\' {
            match it.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some('0') => out.push('\0'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_call_statement() {
        let toks = tokenize("TEE_MemMove(test, params[1].memref.buffer, 5);");
        assert_eq!(toks[0].tok, Tok::Ident("TEE_MemMove".into()));
        assert_eq!(toks[0].col, 1);
        assert!(matches!(toks.last().unwrap().tok, Tok::Eof));
    }

    #[test]
    fn int_literals() {
        assert_eq!(parse_int("0x10"), 16);
        assert_eq!(parse_int("010"), 8);
        assert_eq!(parse_int("42UL"), 42);
        assert_eq!(parse_int("999999999999999999999999"), i64::MAX);
    }

    #[test]
    fn error_tokens_for_unknown_bytes() {
        let toks = tokenize("a @ b");
        assert!(toks.iter().any(|t| matches!(t.tok, Tok::Error('@'))));
    }

    #[test]
    fn tracks_lines_and_columns() {
        let toks = tokenize("a\n  b");
        assert_eq!((toks[1].line, toks[1].col), (2, 3));
    }
}
