use alloc::string::String;
use alloc::vec::Vec;

use super::QueryError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Int(u64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Colon,
    Comma,
    Dot,
    Star,
    Semicolon,
    Eq,
    /// `<>`
    Ne,
    Dash,
    /// `->`
    ArrowRight,
    /// `<-`
    ArrowLeft,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        use alloc::format;
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Int(i) => format!("`{i}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Star => "`*`".into(),
            Tok::Semicolon => "`;`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`<>`".into(),
            Tok::Dash => "`-`".into(),
            Tok::ArrowRight => "`->`".into(),
            Tok::ArrowLeft => "`<-`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

struct Cursor<'a> {
    chars: core::iter::Peekable<core::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }
}

fn error(line: usize, column: usize, message: impl Into<String>) -> QueryError {
    QueryError::Syntax { line, column, message: message.into(), expected: Vec::new() }
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let mut cur = Cursor { chars: text.chars().peekable(), line: 1, column: 1 };
    let mut out = Vec::new();
    loop {
        while cur.peek().is_some_and(char::is_whitespace) {
            cur.bump();
        }
        let (line, column) = (cur.line, cur.column);
        let Some(c) = cur.bump() else {
            out.push(Token { tok: Tok::Eof, line, column });
            return Ok(out);
        };
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ':' => Tok::Colon,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '*' => Tok::Star,
            ';' => Tok::Semicolon,
            '=' => Tok::Eq,
            '-' if cur.peek() == Some('>') => {
                cur.bump();
                Tok::ArrowRight
            }
            '-' => Tok::Dash,
            '<' if cur.peek() == Some('>') => {
                cur.bump();
                Tok::Ne
            }
            '<' if cur.peek() == Some('-') => {
                cur.bump();
                Tok::ArrowLeft
            }
            '\'' | '"' => {
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None => return Err(error(line, column, "unterminated string literal")),
                        Some(q) if q == c => break,
                        Some('\\') => match cur.bump() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(e @ ('\\' | '\'' | '"')) => s.push(e),
                            _ => return Err(error(cur.line, cur.column, "invalid escape in string literal")),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_digit() => {
                let mut v = u64::from(c as u8 - b'0');
                while let Some(d) = cur.peek().filter(char::is_ascii_digit) {
                    cur.bump();
                    v = v
                        .checked_mul(10)
                        .and_then(|v| v.checked_add(u64::from(d as u8 - b'0')))
                        .ok_or_else(|| error(line, column, "integer literal out of range"))?;
                }
                Tok::Int(v)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::from(c);
                while let Some(ch) = cur.peek().filter(|ch| ch.is_alphanumeric() || *ch == '_') {
                    cur.bump();
                    s.push(ch);
                }
                Tok::Ident(s)
            }
            other => return Err(error(line, column, alloc::format!("unexpected character `{other}`"))),
        };
        out.push(Token { tok, line, column });
    }
}
