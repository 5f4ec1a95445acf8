use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Kind {
    Ident(String),
    Number(f64),
    /// Contents between `|` and `>`.
    Ket(String),
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub kind: Kind,
    /// 1-based column of the first character.
    pub column: usize,
    pub text: String,
}

const SYMBOLS: [&str; 19] = [
    "==", ">=", "<=", ">", "<", "=", "[", "]", "{", "}", "(", ")", ",", ";", ":", "*", "/", "+", "-",
];

/// Tokenizes one line with the comment already stripped.
pub(crate) fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            tokens.push(Token {
                kind: Kind::Ident(text.clone()),
                column,
                text,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<f64>().map_err(|_| ParseError {
                line: line_no,
                column,
                message: "malformed number".into(),
                token: text.clone(),
            })?;
            tokens.push(Token {
                kind: Kind::Number(value),
                column,
                text,
            });
            continue;
        }
        if c == '|' {
            let Some(end) = chars[i + 1..].iter().position(|&ch| ch == '>') else {
                return Err(ParseError {
                    line: line_no,
                    column,
                    message: "unterminated ket, expected `>`".into(),
                    token: chars[i..].iter().collect(),
                });
            };
            let inner: String = chars[i + 1..i + 1 + end].iter().collect();
            let text: String = chars[i..i + 2 + end].iter().collect();
            i += end + 2;
            tokens.push(Token {
                kind: Kind::Ket(inner),
                column,
                text,
            });
            continue;
        }
        if c == '@' {
            tokens.push(Token {
                kind: Kind::Sym("@"),
                column,
                text: "@".into(),
            });
            i += 1;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            tokens.push(Token {
                kind: Kind::Sym(sym),
                column,
                text: sym.to_string(),
            });
            i += sym.len();
            continue;
        }
        return Err(ParseError {
            line: line_no,
            column,
            message: "unexpected character".into(),
            token: c.to_string(),
        });
    }
    Ok(tokens)
}
