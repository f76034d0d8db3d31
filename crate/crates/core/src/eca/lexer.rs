//! Tokeniser for rule files. Keywords are case-insensitive; `//` starts a
//! comment running to the end of the line.

use std::fmt;

use super::SyntaxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Rules,
    For,
    When,
    If,
    Then,
    Do,
    Begin,
    End,
    Sequence,
    Choice,
    Loop,
    Until,
    True,
    False,
}

impl Keyword {
    fn lookup(word: &str) -> Option<Keyword> {
        Some(match word.to_ascii_lowercase().as_str() {
            "rules" => Keyword::Rules,
            "for" => Keyword::For,
            "when" => Keyword::When,
            "if" => Keyword::If,
            "then" => Keyword::Then,
            "do" => Keyword::Do,
            "begin" => Keyword::Begin,
            "end" => Keyword::End,
            "sequence" => Keyword::Sequence,
            "choice" => Keyword::Choice,
            "loop" => Keyword::Loop,
            "until" => Keyword::Until,
            "true" => Keyword::True,
            "false" => Keyword::False,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Keyword(Keyword),
    Number(f64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Lt,
    Gt,
    Le,
    Ge,
    EqEq,
    Ne,
    AndAnd,
    OrOr,
    Bang,
    Comma,
    Semi,
    Dot,
    Colon,
    Star,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "`{s}`"),
            TokenKind::Keyword(k) => write!(f, "`{}`", format!("{k:?}").to_ascii_lowercase()),
            TokenKind::Number(n) => write!(f, "`{n}`"),
            TokenKind::Str(s) => write!(f, "{s:?}"),
            TokenKind::Eof => f.write_str("end of input"),
            other => {
                let s = match other {
                    TokenKind::LBrace => "{",
                    TokenKind::RBrace => "}",
                    TokenKind::LParen => "(",
                    TokenKind::RParen => ")",
                    TokenKind::Lt => "<",
                    TokenKind::Gt => ">",
                    TokenKind::Le => "<=",
                    TokenKind::Ge => ">=",
                    TokenKind::EqEq => "==",
                    TokenKind::Ne => "!=",
                    TokenKind::AndAnd => "&&",
                    TokenKind::OrOr => "||",
                    TokenKind::Bang => "!",
                    TokenKind::Comma => ",",
                    TokenKind::Semi => ";",
                    TokenKind::Dot => ".",
                    TokenKind::Colon => ":",
                    TokenKind::Star => "*",
                    _ => unreachable!(),
                };
                write!(f, "`{s}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Source spelling (keywords keep their original case).
    pub text: String,
    pub line: usize,
    pub column: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let (start, sl, sc) = (i, line, col);
        let kind = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            let word: String = chars[start..i].iter().collect();
            match Keyword::lookup(&word) {
                Some(k) => TokenKind::Keyword(k),
                None => TokenKind::Ident(word),
            }
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            bump!();
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            let text: String = chars[start..i].iter().collect();
            TokenKind::Number(text.parse().expect("digits form a number"))
        } else if c == '"' {
            bump!();
            let mut escaped = false;
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(SyntaxError::new(sl, sc, vec!["closing `\"`"], "end of input"));
                };
                if ch == '\n' {
                    return Err(SyntaxError::new(sl, sc, vec!["closing `\"`"], "end of line"));
                }
                bump!();
                if escaped {
                    escaped = false;
                } else if ch == '\\' {
                    escaped = true;
                } else if ch == '"' {
                    break;
                }
            }
            let raw: String = chars[start..i].iter().collect();
            let s: String =
                serde_json::from_str(&raw).map_err(|_| SyntaxError::new(sl, sc, vec!["string literal"], &raw))?;
            TokenKind::Str(s)
        } else {
            let next = chars.get(i + 1).copied();
            let two = |k: TokenKind| (k, 2);
            let (kind, len) = match (c, next) {
                ('<', Some('=')) => two(TokenKind::Le),
                ('>', Some('=')) => two(TokenKind::Ge),
                ('=', Some('=')) => two(TokenKind::EqEq),
                ('!', Some('=')) => two(TokenKind::Ne),
                ('&', Some('&')) => two(TokenKind::AndAnd),
                ('|', Some('|')) => two(TokenKind::OrOr),
                ('{', _) => (TokenKind::LBrace, 1),
                ('}', _) => (TokenKind::RBrace, 1),
                ('(', _) => (TokenKind::LParen, 1),
                (')', _) => (TokenKind::RParen, 1),
                ('<', _) => (TokenKind::Lt, 1),
                ('>', _) => (TokenKind::Gt, 1),
                ('!', _) => (TokenKind::Bang, 1),
                (',', _) => (TokenKind::Comma, 1),
                (';', _) => (TokenKind::Semi, 1),
                ('.', _) => (TokenKind::Dot, 1),
                (':', _) => (TokenKind::Colon, 1),
                ('*', _) => (TokenKind::Star, 1),
                _ => {
                    return Err(SyntaxError::new(sl, sc, vec!["a token"], &format!("`{c}`")));
                }
            };
            for _ in 0..len {
                bump!();
            }
            kind
        };
        out.push(Token { kind, text: chars[start..i].iter().collect(), line: sl, column: sc });
    }
    out.push(Token { kind: TokenKind::Eof, text: String::new(), line, column: col });
    Ok(out)
}

/// Token kinds only, for comparing two sources modulo layout and comments.
pub fn token_kinds(src: &str) -> Result<Vec<TokenKind>, SyntaxError> {
    Ok(tokenize(src)?.into_iter().map(|t| t.kind).collect())
}
