// SPDX-License-Identifier: Apache-2.0

//! Lossless tokenizer for the supported Verilog subset.
//!
//! Every token records its lexeme plus 1-based line/column (column counts
//! characters, not bytes) and the byte span in the original source, so the
//! input can be rebuilt byte-for-byte from the token stream and the
//! whitespace between consecutive tokens.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword,
    Identifier,
    Number,
    Operator,
    Punctuation,
    String,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    /// 1-based line of the first character.
    pub line: u32,
    /// 1-based character column of the first character.
    pub column: u32,
    /// Byte offset of the first character in the source.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct LexError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

/// Reserved words recognized as `TokenKind::Keyword`.
///
/// The list deliberately covers more than the supported subset: recognizing
/// a construct's keyword is what lets the parser name it in an
/// unsupported-construct diagnostic instead of misreading it.
pub const KEYWORDS: &[&str] = &[
    // supported subset
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "integer", "genvar",
    "parameter", "localparam", "assign", "always", "initial", "begin", "end", "if", "else",
    "case", "casex", "casez", "endcase", "default", "for", "generate", "endgenerate", "posedge",
    "negedge", // gate primitives
    "and", "or", "not", "nand", "nor", "xor", "xnor", "buf",
    // recognized so diagnostics can name them
    "task", "endtask", "function", "endfunction", "fork", "join", "wait", "forever", "repeat",
    "while", "disable", "deassign", "force", "release", "specify", "endspecify", "primitive",
    "endprimitive", "table", "endtable", "defparam", "event", "real", "time", "signed", "tri",
    "tri0", "tri1", "triand", "trior", "supply0", "supply1", "scalared", "vectored",
    // common SystemVerilog-only words
    "interface", "endinterface", "logic", "bit", "byte", "always_ff", "always_comb",
    "always_latch", "typedef", "enum", "struct", "union", "package", "endpackage", "class",
    "endclass", "program", "endprogram", "unique", "priority",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

struct Scanner<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
    line: u32,
    column: u32,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str) -> Self {
        Scanner {
            src,
            chars: src.char_indices().collect(),
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.pos + 1).map(|&(_, c)| c)
    }

    fn byte_offset(&self) -> usize {
        self.chars
            .get(self.pos)
            .map(|&(o, _)| o)
            .unwrap_or(self.src.len())
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, message: impl Into<String>) -> LexError {
        LexError {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

fn is_based_digit(c: char) -> bool {
    c.is_ascii_hexdigit() || matches!(c, 'x' | 'X' | 'z' | 'Z' | '?' | '_')
}

/// Operators ordered longest-first so maximal munch falls out of a linear scan.
const OPERATORS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "~&", "~|", "~^",
    "^~", "+:", "-:", "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">", "=", "?", "@",
    "#",
];

const PUNCTUATION: &[char] = &['(', ')', '[', ']', '{', '}', ';', ',', '.', ':'];

/// Tokenize `source` into a lossless stream; comments are tokens too.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut s = Scanner::new(source);
    let mut tokens = Vec::new();

    while let Some(c) = s.peek() {
        if c.is_whitespace() {
            s.bump();
            continue;
        }

        let line = s.line;
        let column = s.column;
        let start = s.byte_offset();

        // comments
        if c == '/' && s.peek2() == Some('/') {
            while let Some(n) = s.peek() {
                if n == '\n' {
                    break;
                }
                s.bump();
            }
            push(&mut tokens, s.src, TokenKind::Comment, line, column, start, s.byte_offset());
            continue;
        }
        if c == '/' && s.peek2() == Some('*') {
            s.bump();
            s.bump();
            let mut closed = false;
            while let Some(n) = s.bump() {
                if n == '*' && s.peek() == Some('/') {
                    s.bump();
                    closed = true;
                    break;
                }
            }
            if !closed {
                return Err(LexError {
                    line,
                    column,
                    message: "unterminated comment".into(),
                });
            }
            push(&mut tokens, s.src, TokenKind::Comment, line, column, start, s.byte_offset());
            continue;
        }

        // strings
        if c == '"' {
            s.bump();
            let mut closed = false;
            while let Some(n) = s.bump() {
                match n {
                    '\\' => {
                        s.bump();
                    }
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\n' => break,
                    _ => {}
                }
            }
            if !closed {
                return Err(LexError {
                    line,
                    column,
                    message: "unterminated string".into(),
                });
            }
            push(&mut tokens, s.src, TokenKind::String, line, column, start, s.byte_offset());
            continue;
        }

        // identifiers, keywords, escaped identifiers, system/compiler names
        if is_ident_start(c) {
            while let Some(n) = s.peek() {
                if is_ident_char(n) {
                    s.bump();
                } else {
                    break;
                }
            }
            let end = s.byte_offset();
            let text = &s.src[start..end];
            let kind = if is_keyword(text) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            push(&mut tokens, s.src, kind, line, column, start, end);
            continue;
        }
        if c == '\\' {
            // escaped identifier: backslash up to (exclusive) whitespace
            s.bump();
            while let Some(n) = s.peek() {
                if n.is_whitespace() {
                    break;
                }
                s.bump();
            }
            push(&mut tokens, s.src, TokenKind::Identifier, line, column, start, s.byte_offset());
            continue;
        }
        if c == '$' || c == '`' {
            s.bump();
            if !s.peek().map(is_ident_start).unwrap_or(false) {
                return Err(s.error(format!("stray '{}'", c)));
            }
            while let Some(n) = s.peek() {
                if is_ident_char(n) {
                    s.bump();
                } else {
                    break;
                }
            }
            push(&mut tokens, s.src, TokenKind::Identifier, line, column, start, s.byte_offset());
            continue;
        }

        // numbers: decimal, optional fraction, optional based part glued on
        if c.is_ascii_digit() || (c == '\'' && s.peek2().map(is_base_char).unwrap_or(false)) {
            if c.is_ascii_digit() {
                while let Some(n) = s.peek() {
                    if n.is_ascii_digit() || n == '_' {
                        s.bump();
                    } else {
                        break;
                    }
                }
                // fractional part (delay controls like #10.5)
                if s.peek() == Some('.') && s.peek2().map(|d| d.is_ascii_digit()).unwrap_or(false) {
                    s.bump();
                    while let Some(n) = s.peek() {
                        if n.is_ascii_digit() || n == '_' {
                            s.bump();
                        } else {
                            break;
                        }
                    }
                }
            }
            // based part directly attached: 4'b1010 or 'hff
            if s.peek() == Some('\'') && s.peek2().map(is_base_char).unwrap_or(false) {
                s.bump(); // '
                s.bump(); // base char (possibly signed prefix handled below)
                // signed bases: 'sb 'sh ...
                if matches!(s.chars.get(s.pos - 1).map(|&(_, ch)| ch), Some('s') | Some('S')) {
                    if !s.peek().map(is_base_char).unwrap_or(false) {
                        return Err(s.error("malformed based literal"));
                    }
                    s.bump();
                }
                if !s.peek().map(is_based_digit).unwrap_or(false) {
                    return Err(s.error("based literal missing digits"));
                }
                while let Some(n) = s.peek() {
                    if is_based_digit(n) {
                        s.bump();
                    } else {
                        break;
                    }
                }
            }
            push(&mut tokens, s.src, TokenKind::Number, line, column, start, s.byte_offset());
            continue;
        }

        // punctuation
        if PUNCTUATION.contains(&c) {
            s.bump();
            push(&mut tokens, s.src, TokenKind::Punctuation, line, column, start, s.byte_offset());
            continue;
        }

        // operators, longest match first
        let rest: String = s.chars[s.pos..]
            .iter()
            .take(3)
            .map(|&(_, ch)| ch)
            .collect();
        let mut matched = false;
        for op in OPERATORS {
            if rest.starts_with(op) {
                for _ in 0..op.chars().count() {
                    s.bump();
                }
                push(&mut tokens, s.src, TokenKind::Operator, line, column, start, s.byte_offset());
                matched = true;
                break;
            }
        }
        if matched {
            continue;
        }

        return Err(s.error(format!("illegal character '{}'", c)));
    }

    Ok(tokens)
}

fn push(
    tokens: &mut Vec<Token>,
    src: &str,
    kind: TokenKind,
    line: u32,
    column: u32,
    start: usize,
    end: usize,
) {
    tokens.push(Token {
        kind,
        lexeme: src[start..end].to_string(),
        line,
        column,
        start,
        end,
    });
}

fn is_base_char(c: char) -> bool {
    matches!(
        c,
        'b' | 'B' | 'o' | 'O' | 'd' | 'D' | 'h' | 'H' | 's' | 'S'
    )
}

/// Rebuild the original source from the token stream plus the whitespace
/// gaps recorded in the byte spans.
pub fn reconstruct(source: &str, tokens: &[Token]) -> String {
    let mut out = String::with_capacity(source.len());
    let mut prev_end = 0usize;
    for t in tokens {
        out.push_str(&source[prev_end..t.start]);
        out.push_str(&t.lexeme);
        prev_end = t.end;
    }
    out.push_str(&source[prev_end..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_assign_token_stream() {
        let toks = tokenize("assign y = a & b;").unwrap();
        let lexemes: Vec<&str> = toks.iter().map(|t| t.lexeme.as_str()).collect();
        assert_eq!(lexemes, ["assign", "y", "=", "a", "&", "b", ";"]);
        assert_eq!(toks.last().unwrap().kind, TokenKind::Punctuation);
        assert_eq!(toks[0].kind, TokenKind::Keyword);
        assert_eq!(toks[1].kind, TokenKind::Identifier);
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().is_empty());
    }

    #[test]
    fn unterminated_comment_errors() {
        let err = tokenize("/* open").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.message.contains("unterminated comment"));
    }

    #[test]
    fn unterminated_string_errors() {
        let err = tokenize("\"abc").unwrap_err();
        assert!(err.message.contains("unterminated string"));
    }

    #[test]
    fn based_literals() {
        let toks = tokenize("4'b10_10 'hFF 12'hxz? 3'sd5 10.5").unwrap();
        let lexemes: Vec<&str> = toks.iter().map(|t| t.lexeme.as_str()).collect();
        assert_eq!(lexemes, ["4'b10_10", "'hFF", "12'hxz?", "3'sd5", "10.5"]);
        assert!(toks.iter().all(|t| t.kind == TokenKind::Number));
    }

    #[test]
    fn positions_slice_back_to_lexeme() {
        let src = "module m;\n  wire /*c*/ x;\nendmodule\n";
        let toks = tokenize(src).unwrap();
        let lines: Vec<&str> = src.lines().collect();
        for t in &toks {
            let line = lines[(t.line - 1) as usize];
            let cols: Vec<char> = line.chars().collect();
            let from = (t.column - 1) as usize;
            // multi-line tokens (block comments) only check their first line
            let take = t
                .lexeme
                .lines()
                .next()
                .unwrap_or("")
                .chars()
                .count();
            let slice: String = cols[from..from + take].iter().collect();
            assert_eq!(slice, t.lexeme.lines().next().unwrap_or(""));
        }
    }

    #[test]
    fn reconstruction_is_lossless() {
        let src = "module tb;\n\t// line\n  initial begin #10 $finish; end\nendmodule\n";
        let toks = tokenize(src).unwrap();
        assert_eq!(reconstruct(src, &toks), src);
    }

    #[test]
    fn comments_are_tokens() {
        let toks = tokenize("// hello\n/* block */ wire").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Comment);
        assert_eq!(toks[1].kind, TokenKind::Comment);
        assert_eq!(toks[2].kind, TokenKind::Keyword);
    }

    #[test]
    fn illegal_character_reports_position() {
        let err = tokenize("wire €;").unwrap_err();
        assert_eq!(err.line, 1);
        assert_eq!(err.column, 6);
    }
}
