//! Tokenizer for the supported C subset, with object-like `#define`
//! expansion. Every token carries its source line for diagnostics.

use crate::diag::Diagnostic;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(i64),
    /// Punctuation or operator, e.g. "->", "<=", "{".
    P(&'static str),
}

#[derive(Debug, Clone)]
pub struct SpTok {
    pub tok: Tok,
    pub line: u32,
}

const PUNCTS: &[&str] = &[
    "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=",
    "*=", "/=", "%=", "&=", "|=", "^=", "?", ":", ";", ",", ".", "(", ")", "{", "}", "[", "]",
    "<", ">", "=", "+", "-", "*", "/", "%", "&", "|", "^", "!", "~",
];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    diags: Vec<Diagnostic>,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.src.get(self.pos + 1) == Some(&b'/') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some(b'/') if self.src.get(self.pos + 1) == Some(&b'*') => {
                    let start = self.line;
                    self.bump();
                    self.bump();
                    loop {
                        match self.bump() {
                            Some(b'*') if self.peek() == Some(b'/') => {
                                self.bump();
                                break;
                            }
                            Some(_) => {}
                            None => {
                                self.diags.push(Diagnostic::new(start, "unterminated block comment"));
                                break;
                            }
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn number(&mut self) -> i64 {
        let line = self.line;
        let start = self.pos;
        let hex = self.peek() == Some(b'0')
            && matches!(self.src.get(self.pos + 1), Some(b'x') | Some(b'X'));
        if hex {
            self.pos += 2;
        }
        while let Some(c) = self.peek() {
            if c.is_ascii_hexdigit() && (hex || c.is_ascii_digit()) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let digits = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        // Drop integer suffixes.
        while matches!(self.peek(), Some(b'u') | Some(b'U') | Some(b'l') | Some(b'L')) {
            self.pos += 1;
        }
        let parsed = if hex {
            i64::from_str_radix(&digits[2..], 16)
        } else {
            digits.parse::<i64>()
        };
        match parsed {
            Ok(v) => v,
            Err(_) => {
                self.diags.push(Diagnostic::new(line, format!("integer literal out of range: {digits}")));
                0
            }
        }
    }

    fn char_lit(&mut self) -> i64 {
        let line = self.line;
        self.bump(); // opening quote
        let v = match self.bump() {
            Some(b'\\') => match self.bump() {
                Some(b'0') => 0,
                Some(b'n') => b'\n' as i64,
                Some(b't') => b'\t' as i64,
                Some(b'r') => b'\r' as i64,
                Some(b'\\') => b'\\' as i64,
                Some(b'\'') => b'\'' as i64,
                other => {
                    self.diags.push(Diagnostic::new(
                        line,
                        format!("unsupported escape in char literal: \\{}", other.map(|c| c as char).unwrap_or(' ')),
                    ));
                    0
                }
            },
            Some(c) => c as i64,
            None => {
                self.diags.push(Diagnostic::new(line, "unterminated char literal"));
                0
            }
        };
        if self.peek() == Some(b'\'') {
            self.bump();
        } else {
            self.diags.push(Diagnostic::new(line, "unterminated char literal"));
        }
        v
    }
}

/// Tokenize with `#define` substitution. Directives other than object-like
/// `#define NAME tokens...` are rejected.
pub fn lex(source: &str) -> Result<Vec<SpTok>, Vec<Diagnostic>> {
    let mut lx = Lexer { src: source.as_bytes(), pos: 0, line: 1, diags: Vec::new() };
    let mut out: Vec<SpTok> = Vec::new();
    let mut macros: BTreeMap<String, Vec<Tok>> = BTreeMap::new();
    'outer: loop {
        lx.skip_trivia();
        let Some(c) = lx.peek() else { break };
        let line = lx.line;
        if c == b'#' {
            lx.bump();
            let dir = lx.ident();
            if dir != "define" {
                lx.diags.push(Diagnostic::new(line, format!("unsupported preprocessor directive: #{dir}")));
                // Skip to end of line.
                while let Some(c) = lx.peek() {
                    if c == b'\n' {
                        break;
                    }
                    lx.bump();
                }
                continue;
            }
            while lx.peek() == Some(b' ') || lx.peek() == Some(b'\t') {
                lx.bump();
            }
            let name = lx.ident();
            if name.is_empty() {
                lx.diags.push(Diagnostic::new(line, "#define requires a name"));
                continue;
            }
            if lx.peek() == Some(b'(') {
                lx.diags.push(Diagnostic::new(line, "function-like macros are not supported"));
                while let Some(c) = lx.peek() {
                    if c == b'\n' {
                        break;
                    }
                    lx.bump();
                }
                continue;
            }
            // Tokenize the replacement up to end of line.
            let mut body = Vec::new();
            loop {
                while matches!(lx.peek(), Some(b' ') | Some(b'\t') | Some(b'\r')) {
                    lx.bump();
                }
                match lx.peek() {
                    None | Some(b'\n') => break,
                    Some(c2) if c2.is_ascii_digit() => body.push(Tok::Num(lx.number())),
                    Some(c2) if c2.is_ascii_alphabetic() || c2 == b'_' => {
                        let id = lx.ident();
                        match macros.get(&id) {
                            Some(ts) => body.extend(ts.iter().cloned()),
                            None => body.push(Tok::Ident(id)),
                        }
                    }
                    Some(b'\'') => body.push(Tok::Num(lx.char_lit())),
                    Some(_) => {
                        let mut matched = false;
                        for p in PUNCTS {
                            if lx.src[lx.pos..].starts_with(p.as_bytes()) {
                                lx.pos += p.len();
                                body.push(Tok::P(p));
                                matched = true;
                                break;
                            }
                        }
                        if !matched {
                            lx.diags.push(Diagnostic::new(line, "unexpected character in #define"));
                            lx.bump();
                        }
                    }
                }
            }
            macros.insert(name, body);
            continue;
        }
        if c.is_ascii_digit() {
            let v = lx.number();
            out.push(SpTok { tok: Tok::Num(v), line });
            continue;
        }
        if c == b'\'' {
            let v = lx.char_lit();
            out.push(SpTok { tok: Tok::Num(v), line });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let id = lx.ident();
            match macros.get(&id) {
                Some(ts) => out.extend(ts.iter().map(|t| SpTok { tok: t.clone(), line })),
                None => out.push(SpTok { tok: Tok::Ident(id), line }),
            }
            continue;
        }
        if c == b'"' {
            lx.diags.push(Diagnostic::new(line, "string literals are not supported"));
            lx.bump();
            while let Some(c2) = lx.bump() {
                if c2 == b'"' {
                    continue 'outer;
                }
            }
            break;
        }
        let mut matched = false;
        for p in PUNCTS {
            if lx.src[lx.pos..].starts_with(p.as_bytes()) {
                lx.pos += p.len();
                out.push(SpTok { tok: Tok::P(p), line });
                matched = true;
                break;
            }
        }
        if !matched {
            lx.diags.push(Diagnostic::new(line, format!("unexpected character: {:?}", c as char)));
            lx.bump();
        }
    }
    if lx.diags.is_empty() {
        Ok(out)
    } else {
        Err(lx.diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_operators_and_defines() {
        let ts = lex("#define N 4\nint x = N + 'a'; // c\n/* b */ x->y;").unwrap();
        let kinds: Vec<Tok> = ts.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("int".into()),
                Tok::Ident("x".into()),
                Tok::P("="),
                Tok::Num(4),
                Tok::P("+"),
                Tok::Num(97),
                Tok::P(";"),
                Tok::Ident("x".into()),
                Tok::P("->"),
                Tok::Ident("y".into()),
                Tok::P(";"),
            ]
        );
    }

    #[test]
    fn rejects_other_directives() {
        let e = lex("#include <stdio.h>\nint x;").unwrap_err();
        assert!(e[0].msg.contains("unsupported preprocessor directive"));
    }

    #[test]
    fn hex_and_suffix_literals() {
        let ts = lex("0x10 42u 7L").unwrap();
        let kinds: Vec<Tok> = ts.into_iter().map(|t| t.tok).collect();
        assert_eq!(kinds, vec![Tok::Num(16), Tok::Num(42), Tok::Num(7)]);
    }
}
