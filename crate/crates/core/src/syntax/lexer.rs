use super::ast::{Pos, Span};
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(String),
    Float(String),
    Str(String),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "**", "//", ">>", "<<", "<=", ">=", "==", "!=", "->", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", ":=", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: u32,
    col: u32,
    out: Vec<Token>,
    indents: Vec<u32>,
    depth: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
        out: Vec::new(),
        indents: vec![0],
        depth: 0,
    };
    lx.run()?;
    Ok(lx.out)
}

impl Lexer {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn push(&mut self, tok: Tok, start: Pos) {
        let end = self.pos();
        self.out.push(Token {
            tok,
            span: Span::new(start, end),
        });
    }

    fn run(&mut self) -> Result<(), ParseError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                if !self.line_start()? {
                    break;
                }
                at_line_start = false;
            }
            let Some(c) = self.peek(0) else { break };
            let start = self.pos();
            match c {
                ' ' | '\t' | '\x0c' | '\r' => {
                    self.bump();
                }
                '#' => {
                    while !matches!(self.peek(0), None | Some('\n')) {
                        self.bump();
                    }
                }
                '\\' => {
                    self.bump();
                    match self.peek(0) {
                        Some('\n') => {
                            self.bump();
                        }
                        Some('\r') if self.peek(1) == Some('\n') => {
                            self.bump();
                            self.bump();
                        }
                        _ => return Err(self.err("unexpected character after line continuation")),
                    }
                }
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push(Tok::Newline, start);
                        at_line_start = true;
                    }
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) => {
                    self.number(start)?
                }
                c if c.is_alphabetic() || c == '_' => {
                    let mut ident = String::new();
                    while let Some(c) = self.peek(0) {
                        if c.is_alphanumeric() || c == '_' {
                            ident.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    if matches!(self.peek(0), Some('\'' | '"')) && is_string_prefix(&ident) {
                        let lower = ident.to_ascii_lowercase();
                        if lower.contains('f') {
                            return Err(ParseError::Unsupported {
                                span: Span::new(start, self.pos()),
                                construct: "f-string".into(),
                            });
                        }
                        self.string(start, ident)?;
                    } else {
                        self.push(Tok::Name(ident), start);
                    }
                }
                '\'' | '"' => self.string(start, String::new())?,
                _ => {
                    let rest: String = self.chars[self.i..(self.i + 3).min(self.chars.len())]
                        .iter()
                        .collect();
                    let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) else {
                        return Err(self.err(format!("unexpected character {c:?}")));
                    };
                    for _ in 0..op.chars().count() {
                        self.bump();
                    }
                    match *op {
                        "(" | "[" | "{" => self.depth += 1,
                        ")" | "]" | "}" => {
                            if self.depth == 0 {
                                return Err(ParseError::Syntax {
                                    line: start.line,
                                    col: start.col,
                                    message: format!("unmatched '{op}'"),
                                });
                            }
                            self.depth -= 1;
                        }
                        _ => {}
                    }
                    self.push(Tok::Op(op), start);
                }
            }
        }
        if self.depth > 0 {
            return Err(self.err("unexpected end of input inside brackets"));
        }
        let end = self.pos();
        if !matches!(
            self.out.last().map(|t| &t.tok),
            None | Some(Tok::Newline) | Some(Tok::Dedent)
        ) {
            self.push(Tok::Newline, end);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, end);
        }
        self.push(Tok::Eof, end);
        Ok(())
    }

    /// Consume indentation, skipping blank and comment-only lines. Returns
    /// false at end of input.
    fn line_start(&mut self) -> Result<bool, ParseError> {
        loop {
            let mut width = 0u32;
            while let Some(c) = self.peek(0) {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' | '\r' => {}
                    _ => break,
                }
                self.bump();
            }
            match self.peek(0) {
                None => return Ok(false),
                Some('\n') => {
                    self.bump();
                    continue;
                }
                Some('#') => {
                    while !matches!(self.peek(0), None | Some('\n')) {
                        self.bump();
                    }
                    continue;
                }
                _ => {}
            }
            let start = self.pos();
            let current = *self.indents.last().unwrap();
            if width > current {
                self.indents.push(width);
                self.push(Tok::Indent, start);
            } else {
                while width < *self.indents.last().unwrap() {
                    self.indents.pop();
                    self.push(Tok::Dedent, start);
                }
                if width != *self.indents.last().unwrap() {
                    return Err(self.err("unindent does not match any outer indentation level"));
                }
            }
            return Ok(true);
        }
    }

    fn number(&mut self, start: Pos) -> Result<(), ParseError> {
        let mut text = String::new();
        let mut is_float = false;
        if self.peek(0) == Some('0') && matches!(self.peek(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B')) {
            text.push(self.bump().unwrap());
            text.push(self.bump().unwrap());
            while let Some(c) = self.peek(0) {
                if c.is_ascii_hexdigit() || c == '_' {
                    text.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
        } else {
            let digits = |lx: &mut Self, text: &mut String| {
                while let Some(c) = lx.peek(0) {
                    if c.is_ascii_digit() || c == '_' {
                        text.push(c);
                        lx.bump();
                    } else {
                        break;
                    }
                }
            };
            digits(self, &mut text);
            if self.peek(0) == Some('.') {
                is_float = true;
                text.push('.');
                self.bump();
                digits(self, &mut text);
            }
            if matches!(self.peek(0), Some('e' | 'E')) {
                let sign = matches!(self.peek(1), Some('+' | '-'));
                let digit_at = if sign { 2 } else { 1 };
                if self.peek(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                    is_float = true;
                    text.push(self.bump().unwrap());
                    if sign {
                        text.push(self.bump().unwrap());
                    }
                    digits(self, &mut text);
                }
            }
            if matches!(self.peek(0), Some('j' | 'J')) {
                is_float = true;
                text.push(self.bump().unwrap());
            }
        }
        if self.peek(0).is_some_and(|c| c.is_alphanumeric() || c == '_') {
            return Err(self.err("invalid numeric literal"));
        }
        self.push(if is_float { Tok::Float(text) } else { Tok::Int(text) }, start);
        Ok(())
    }

    fn string(&mut self, start: Pos, prefix: String) -> Result<(), ParseError> {
        let quote = self.bump().unwrap();
        let mut text = prefix;
        text.push(quote);
        let triple = self.peek(0) == Some(quote) && self.peek(1) == Some(quote);
        if triple {
            text.push(self.bump().unwrap());
            text.push(self.bump().unwrap());
        }
        loop {
            let Some(c) = self.bump() else {
                return Err(ParseError::Syntax {
                    line: start.line,
                    col: start.col,
                    message: "unterminated string literal".into(),
                });
            };
            text.push(c);
            if c == '\\' {
                if let Some(n) = self.bump() {
                    text.push(n);
                }
                continue;
            }
            if c == '\n' && !triple {
                return Err(ParseError::Syntax {
                    line: start.line,
                    col: start.col,
                    message: "unterminated string literal".into(),
                });
            }
            if c == quote {
                if !triple {
                    break;
                }
                if self.peek(0) == Some(quote) && self.peek(1) == Some(quote) {
                    text.push(self.bump().unwrap());
                    text.push(self.bump().unwrap());
                    break;
                }
            }
        }
        self.push(Tok::Str(text), start);
        Ok(())
    }
}

fn is_string_prefix(s: &str) -> bool {
    matches!(
        s.to_ascii_lowercase().as_str(),
        "r" | "u" | "b" | "br" | "rb" | "f" | "fr" | "rf"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn indentation_tokens() {
        let toks = kinds("if x:\n    y = 1\nz = 2\n");
        assert!(toks.contains(&Tok::Indent));
        assert!(toks.contains(&Tok::Dedent));
        assert_eq!(toks.last(), Some(&Tok::Eof));
    }

    #[test]
    fn brackets_join_lines() {
        let toks = kinds("x = [1,\n     2]\n");
        assert_eq!(toks.iter().filter(|t| **t == Tok::Newline).count(), 1);
    }

    #[test]
    fn strings_keep_raw_text() {
        let toks = kinds("s = 'a\\'b' + \"\"\"x\ny\"\"\"\n");
        assert_eq!(toks[2], Tok::Str("'a\\'b'".into()));
        assert_eq!(toks[4], Tok::Str("\"\"\"x\ny\"\"\"".into()));
    }

    #[test]
    fn numbers() {
        let toks = kinds("a = 1_000 + 2.5e-3 + 0xff + .5\n");
        assert_eq!(toks[2], Tok::Int("1_000".into()));
        assert_eq!(toks[4], Tok::Float("2.5e-3".into()));
        assert_eq!(toks[6], Tok::Int("0xff".into()));
        assert_eq!(toks[8], Tok::Float(".5".into()));
    }

    #[test]
    fn comments_and_blank_lines_dropped() {
        let toks = kinds("# c\n\nx = 1  # tail\n\n");
        assert_eq!(toks.len(), 5);
    }

    #[test]
    fn fstring_unsupported() {
        assert!(matches!(
            tokenize("x = f'{a}'\n"),
            Err(ParseError::Unsupported { .. })
        ));
    }

    #[test]
    fn bad_dedent() {
        assert!(tokenize("if x:\n    a = 1\n  b = 2\n").is_err());
    }
}
