use super::ast::Span;
use super::ParseError;
use num_bigint::BigInt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(BigInt),
    /// Body of a `//@` or `/*@ ... @*/` comment.
    Annotation(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first.
const PUNCT: &[&str] = &[
    "&&", "||", "==", "!=", "<=", ">=", "++", "--", "+=", "-=", "*=", "/=", "%=", "{", "}", "(",
    ")", "[", "]", ";", ",", ".", "=", "<", ">", "+", "-", "*", "/", "%", "!",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

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
        let span = Span { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            let annotated = chars.get(i + 2) == Some(&'@');
            let start = i + if annotated { 3 } else { 2 };
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            if annotated {
                out.push(Token {
                    tok: Tok::Annotation(chars[start..i].iter().collect()),
                    span,
                });
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let annotated = chars.get(i + 2) == Some(&'@');
            bump!();
            bump!();
            let start = i + usize::from(annotated);
            loop {
                if i + 1 >= chars.len() {
                    return Err(ParseError::new(span, "unterminated comment"));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    break;
                }
                bump!();
            }
            if annotated {
                let mut end = i;
                if end > start && chars[end - 1] == '@' {
                    end -= 1;
                }
                out.push(Token {
                    tok: Tok::Annotation(chars[start..end].iter().collect()),
                    span,
                });
            }
            bump!();
            bump!();
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                bump!();
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<BigInt>()
                .map_err(|_| ParseError::new(span, format!("bad integer literal `{text}`")))?;
            out.push(Token {
                tok: Tok::Int(value),
                span,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                for _ in 0..p.len() {
                    bump!();
                }
                out.push(Token {
                    tok: Tok::Punct(p),
                    span,
                });
            }
            None => return Err(ParseError::new(span, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(out)
}
