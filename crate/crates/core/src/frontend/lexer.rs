//! Tokenizer for decompiler pseudocode.

use std::fmt;

use serde::{Deserialize, Serialize};

/// 1-based line/column position in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Ident(String),
    /// Elementary type keyword (`uint256`, `address`, `bytes32`, ...).
    Type(String),
    Keyword(Keyword),
    /// Numeric literal, kept verbatim (decimal or `0x` hex).
    Int(String),
    Str(String),
    Bool(bool),
    /// Structured `// attribute: <Label>` trailer comment.
    Annotation(String),
    Punct(Punct),
    /// Character the lexer could not classify.
    Error(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Function,
    Returns,
    Return,
    If,
    Else,
    While,
    Require,
    Mapping,
    Assembly,
    Payable,
    Memory,
    Storage,
    Calldata,
}

impl Keyword {
    fn from_word(word: &str) -> Option<Self> {
        Some(match word {
            "function" => Keyword::Function,
            "returns" => Keyword::Returns,
            "return" => Keyword::Return,
            "if" => Keyword::If,
            "else" => Keyword::Else,
            "while" => Keyword::While,
            "require" => Keyword::Require,
            "mapping" => Keyword::Mapping,
            "assembly" => Keyword::Assembly,
            "payable" => Keyword::Payable,
            "memory" => Keyword::Memory,
            "storage" => Keyword::Storage,
            "calldata" => Keyword::Calldata,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Function => "function",
            Keyword::Returns => "returns",
            Keyword::Return => "return",
            Keyword::If => "if",
            Keyword::Else => "else",
            Keyword::While => "while",
            Keyword::Require => "require",
            Keyword::Mapping => "mapping",
            Keyword::Assembly => "assembly",
            Keyword::Payable => "payable",
            Keyword::Memory => "memory",
            Keyword::Storage => "storage",
            Keyword::Calldata => "calldata",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Punct {
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Colon,
    Question,
    Arrow,
    Eq,
    PlusEq,
    MinusEq,
    StarEq,
    SlashEq,
    PercentEq,
    AmpEq,
    PipeEq,
    CaretEq,
    ShlEq,
    ShrEq,
    Plus,
    Minus,
    Star,
    StarStar,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Amp,
    Pipe,
    Caret,
    Tilde,
    Shl,
    Shr,
}

impl Punct {
    pub fn as_str(self) -> &'static str {
        match self {
            Punct::LParen => "(",
            Punct::RParen => ")",
            Punct::LBrace => "{",
            Punct::RBrace => "}",
            Punct::LBracket => "[",
            Punct::RBracket => "]",
            Punct::Comma => ",",
            Punct::Semi => ";",
            Punct::Dot => ".",
            Punct::Colon => ":",
            Punct::Question => "?",
            Punct::Arrow => "=>",
            Punct::Eq => "=",
            Punct::PlusEq => "+=",
            Punct::MinusEq => "-=",
            Punct::StarEq => "*=",
            Punct::SlashEq => "/=",
            Punct::PercentEq => "%=",
            Punct::AmpEq => "&=",
            Punct::PipeEq => "|=",
            Punct::CaretEq => "^=",
            Punct::ShlEq => "<<=",
            Punct::ShrEq => ">>=",
            Punct::Plus => "+",
            Punct::Minus => "-",
            Punct::Star => "*",
            Punct::StarStar => "**",
            Punct::Slash => "/",
            Punct::Percent => "%",
            Punct::EqEq => "==",
            Punct::NotEq => "!=",
            Punct::Lt => "<",
            Punct::Le => "<=",
            Punct::Gt => ">",
            Punct::Ge => ">=",
            Punct::AndAnd => "&&",
            Punct::OrOr => "||",
            Punct::Bang => "!",
            Punct::Amp => "&",
            Punct::Pipe => "|",
            Punct::Caret => "^",
            Punct::Tilde => "~",
            Punct::Shl => "<<",
            Punct::Shr => ">>",
        }
    }
}

// Longest operators first so that maximal munch works with a linear scan.
const PUNCTS: &[(&str, Punct)] = &[
    ("<<=", Punct::ShlEq),
    (">>=", Punct::ShrEq),
    ("=>", Punct::Arrow),
    ("==", Punct::EqEq),
    ("!=", Punct::NotEq),
    ("<=", Punct::Le),
    (">=", Punct::Ge),
    ("&&", Punct::AndAnd),
    ("||", Punct::OrOr),
    ("<<", Punct::Shl),
    (">>", Punct::Shr),
    ("**", Punct::StarStar),
    ("+=", Punct::PlusEq),
    ("-=", Punct::MinusEq),
    ("*=", Punct::StarEq),
    ("/=", Punct::SlashEq),
    ("%=", Punct::PercentEq),
    ("&=", Punct::AmpEq),
    ("|=", Punct::PipeEq),
    ("^=", Punct::CaretEq),
    ("(", Punct::LParen),
    (")", Punct::RParen),
    ("{", Punct::LBrace),
    ("}", Punct::RBrace),
    ("[", Punct::LBracket),
    ("]", Punct::RBracket),
    (",", Punct::Comma),
    (";", Punct::Semi),
    (".", Punct::Dot),
    (":", Punct::Colon),
    ("?", Punct::Question),
    ("=", Punct::Eq),
    ("+", Punct::Plus),
    ("-", Punct::Minus),
    ("*", Punct::Star),
    ("/", Punct::Slash),
    ("%", Punct::Percent),
    ("<", Punct::Lt),
    (">", Punct::Gt),
    ("!", Punct::Bang),
    ("&", Punct::Amp),
    ("|", Punct::Pipe),
    ("^", Punct::Caret),
    ("~", Punct::Tilde),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) | TokenKind::Type(s) | TokenKind::Int(s) => f.write_str(s),
            TokenKind::Keyword(k) => f.write_str(k.as_str()),
            TokenKind::Str(s) => write!(f, "\"{}\"", escape_str(s)),
            TokenKind::Bool(b) => write!(f, "{b}"),
            TokenKind::Annotation(label) => write!(f, "// attribute: {label}"),
            TokenKind::Punct(p) => f.write_str(p.as_str()),
            TokenKind::Error(c) => write!(f, "{c}"),
        }
    }
}

pub(crate) fn escape_str(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Returns true for the elementary type names of the pseudocode.
pub fn is_elementary_type(word: &str) -> bool {
    match word {
        "bool" | "address" | "string" | "bytes" | "byte" | "uint" | "int" => true,
        _ => {
            if let Some(width) = word.strip_prefix("uint").or_else(|| word.strip_prefix("int")) {
                return matches!(width.parse::<u32>(), Ok(w) if w % 8 == 0 && (8..=256).contains(&w));
            }
            if let Some(len) = word.strip_prefix("bytes") {
                return matches!(len.parse::<u32>(), Ok(n) if (1..=32).contains(&n));
            }
            false
        }
    }
}

/// Splits `text` into tokens. Whitespace and ordinary comments are dropped;
/// unclassifiable characters surface as [`TokenKind::Error`] tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! advance {
        ($n:expr) => {
            for _ in 0..$n {
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos::new(line, col);
        if c.is_whitespace() {
            advance!(1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            let start = i;
            while i < chars.len() && chars[i] != '\n' {
                advance!(1);
            }
            let comment: String = chars[start + 2..i].iter().collect();
            if let Some(label) = comment.trim().strip_prefix("attribute:") {
                tokens.push(Token { kind: TokenKind::Annotation(label.trim().to_string()), pos });
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance!(2);
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                advance!(1);
            }
            if i < chars.len() {
                advance!(2);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                advance!(1);
            }
            let word: String = chars[start..i].iter().collect();
            let kind = if let Some(kw) = Keyword::from_word(&word) {
                TokenKind::Keyword(kw)
            } else if word == "true" || word == "false" {
                TokenKind::Bool(word == "true")
            } else if is_elementary_type(&word) {
                TokenKind::Type(word)
            } else {
                TokenKind::Ident(word)
            };
            tokens.push(Token { kind, pos });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            if c == '0' && matches!(chars.get(i + 1), Some('x') | Some('X')) {
                advance!(2);
                while i < chars.len() && chars[i].is_ascii_hexdigit() {
                    advance!(1);
                }
            } else {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                    advance!(1);
                }
            }
            let raw: String = chars[start..i].iter().collect();
            tokens.push(Token { kind: TokenKind::Int(raw), pos });
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            advance!(1);
            let mut value = String::new();
            let mut closed = false;
            while i < chars.len() {
                let ch = chars[i];
                if ch == '\\' && i + 1 < chars.len() {
                    value.push(chars[i + 1]);
                    advance!(2);
                    continue;
                }
                if ch == quote {
                    advance!(1);
                    closed = true;
                    break;
                }
                if ch == '\n' {
                    break;
                }
                value.push(ch);
                advance!(1);
            }
            let kind = if closed { TokenKind::Str(value) } else { TokenKind::Error(quote) };
            tokens.push(Token { kind, pos });
            continue;
        }
        let rest = &chars[i..];
        let matched = PUNCTS.iter().find(|(s, _)| {
            let len = s.chars().count();
            rest.len() >= len && s.chars().zip(rest.iter()).all(|(a, b)| a == *b)
        });
        match matched {
            Some((s, p)) => {
                tokens.push(Token { kind: TokenKind::Punct(*p), pos });
                advance!(s.len());
            }
            None => {
                tokens.push(Token { kind: TokenKind::Error(c), pos });
                advance!(1);
            }
        }
    }
    tokens
}

/// Joins a token stream back into canonical single-space-separated text.
pub fn tokens_to_text(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.kind.to_string()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text).into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn declaration_tokens() {
        assert_eq!(
            kinds("uint256 v0 = 1"),
            vec![
                TokenKind::Type("uint256".into()),
                TokenKind::Ident("v0".into()),
                TokenKind::Punct(Punct::Eq),
                TokenKind::Int("1".into()),
            ]
        );
    }

    #[test]
    fn compound_assignment_round_trips() {
        let toks = tokenize("stor_0 -= varg1");
        assert_eq!(
            toks.iter().map(|t| t.kind.clone()).collect::<Vec<_>>(),
            vec![
                TokenKind::Ident("stor_0".into()),
                TokenKind::Punct(Punct::MinusEq),
                TokenKind::Ident("varg1".into()),
            ]
        );
        assert_eq!(tokens_to_text(&toks), "stor_0 -= varg1");
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn comments_dropped_but_attribute_kept() {
        let toks = kinds("uint256 stor_0; // attribute: Asset\n// STORAGE[0x0]\n/* block */ x");
        assert_eq!(toks[3], TokenKind::Annotation("Asset".into()));
        assert_eq!(toks.len(), 5);
    }

    #[test]
    fn unknown_characters_become_error_tokens() {
        let toks = tokenize("a @ b");
        assert_eq!(toks[1].kind, TokenKind::Error('@'));
        assert_eq!(toks[1].pos, Pos::new(1, 3));
    }

    #[test]
    fn positions_track_lines() {
        let toks = tokenize("a\n  b");
        assert_eq!(toks[1].pos, Pos::new(2, 3));
    }

    #[test]
    fn elementary_types() {
        assert!(is_elementary_type("uint8"));
        assert!(is_elementary_type("bytes32"));
        assert!(!is_elementary_type("uint7"));
        assert!(!is_elementary_type("bytes33"));
        assert!(!is_elementary_type("varg0"));
    }
}
