//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?          right-associative
//! atom  := number | 'q'k | 'v'k | 't' | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! `-x^2` parses as `-(x^2)`.

use std::fmt;

use thiserror::Error;

use super::ast::{BinaryOp, Node, UnaryOp, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    IndexOutOfRange { name: String, n: usize },
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ParseError {
    /// Byte offset into the source.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error at offset {}: {msg}", self.offset),
            ParseErrorKind::UnknownIdentifier(name) => {
                write!(f, "unknown identifier `{name}` at offset {}", self.offset)
            }
            ParseErrorKind::IndexOutOfRange { name, n } => {
                write!(f, "variable `{name}` at offset {} is out of range for dimension {n}", self.offset)
            }
            ParseErrorKind::Empty => f.write_str("empty expression"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn peek_byte(&self) -> Option<u8> {
        self.bytes().get(self.pos).copied()
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        while matches!(self.peek_byte(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(b) = self.peek_byte() else {
            return Ok((Tok::End, start));
        };
        let tok = match b {
            b'0'..=b'9' | b'.' => self.number(start)?,
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while matches!(self.peek_byte(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Tok::Op(b as char)
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<Tok, ParseError> {
        let digits = |lx: &mut Self| {
            let s = lx.pos;
            while matches!(lx.peek_byte(), Some(c) if c.is_ascii_digit()) {
                lx.pos += 1;
            }
            lx.pos - s
        };
        let mut count = digits(self);
        if self.peek_byte() == Some(b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            return Err(syntax(start, "malformed number".into()));
        }
        if matches!(self.peek_byte(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek_byte(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // not an exponent; leave `e` for the identifier lexer to reject
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text.parse().map_err(|_| syntax(start, format!("malformed number `{text}`")))?;
        if !value.is_finite() {
            return Err(syntax(start, format!("number `{text}` is not finite")));
        }
        Ok(Tok::Num(value))
    }
}

fn syntax(offset: usize, msg: String) -> ParseError {
    ParseError { offset, kind: ParseErrorKind::Syntax(msg) }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
    n: usize,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.tok == want {
            self.bump()
        } else {
            Err(syntax(self.at, format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = self.tok {
            self.bump()?;
            let rhs = self.term()?;
            let op = if c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = self.tok {
            self.bump()?;
            let rhs = self.unary()?;
            let op = if c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            let inner = self.unary()?;
            return Ok(Node::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let exp = self.unary()?;
            return Ok(Node::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let at = self.at;
        match self.tok.clone() {
            Tok::Num(x) => {
                self.bump()?;
                Ok(Node::Const(x))
            }
            Tok::LParen => {
                self.bump()?;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump()?;
                if let Some(func) = UnaryOp::from_name(&name) {
                    self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Node::Unary(func, Box::new(arg)));
                }
                self.variable(&name, at).map(Node::Var)
            }
            Tok::End => Err(syntax(at, "unexpected end of input, expected an expression".into())),
            Tok::Op(c) => Err(syntax(at, format!("unexpected `{c}`, expected an expression"))),
            Tok::RParen => Err(syntax(at, "unexpected `)`, expected an expression".into())),
        }
    }

    fn variable(&self, name: &str, at: usize) -> Result<Var, ParseError> {
        if name == "t" {
            return Ok(Var::T);
        }
        let unknown = || ParseError { offset: at, kind: ParseErrorKind::UnknownIdentifier(name.to_string()) };
        let (kind, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        let index: usize = digits.parse().map_err(|_| unknown())?;
        if index == 0 || index > self.n {
            return Err(ParseError { offset: at, kind: ParseErrorKind::IndexOutOfRange { name: name.to_string(), n: self.n } });
        }
        match kind {
            "q" => Ok(Var::Q(index - 1)),
            "v" => Ok(Var::V(index - 1)),
            _ => Err(unknown()),
        }
    }
}

/// Parse `source` as an expression in `q1..qn`, `v1..vn` and `t`.
pub fn parse_node(source: &str, n: usize) -> Result<Node, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError { offset: 0, kind: ParseErrorKind::Empty });
    }
    let mut p = Parser { lexer: Lexer { src: source, pos: 0 }, tok: Tok::End, at: 0, n };
    p.bump()?;
    let node = p.expr()?;
    if p.tok != Tok::End {
        return Err(syntax(p.at, "unexpected trailing input".into()));
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Node {
        parse_node(s, 3).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 + 2 * 3").to_string(), "(1.0 + (2.0 * 3.0))");
        assert_eq!(p("1 - 2 - 3").to_string(), "((1.0 - 2.0) - 3.0)");
        assert_eq!(p("8 / 4 / 2").to_string(), "((8.0 / 4.0) / 2.0)");
        assert_eq!(p("2 ^ 3 ^ 2").to_string(), "(2.0 ^ (3.0 ^ 2.0))");
        assert_eq!(p("-q1^2").to_string(), "(-(q1 ^ 2.0))");
        assert_eq!(p("2^-1").to_string(), "(2.0 ^ (-1.0))");
        assert_eq!(p("-2*q1").to_string(), "((-2.0) * q1)");
    }

    #[test]
    fn numbers() {
        assert_eq!(p("1e-3"), Node::Const(1e-3));
        assert_eq!(p(".5"), Node::Const(0.5));
        assert_eq!(p("2.5E+2"), Node::Const(250.0));
        assert!(parse_node("1e999", 1).is_err());
    }

    #[test]
    fn constant_zero() {
        assert_eq!(parse_node("0", 3).unwrap(), Node::Const(0.0));
    }

    #[test]
    fn unterminated_call_reports_end_offset() {
        let err = parse_node("sin(", 1).unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn identifier_errors() {
        let err = parse_node("q1 + foo", 2).unwrap_err();
        assert_eq!(err.offset, 5);
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("foo".into()));

        let err = parse_node("v4", 3).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::IndexOutOfRange { n: 3, .. }));
        let err = parse_node("q0", 3).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::IndexOutOfRange { .. }));

        // functions outside the whitelist are not identifiers either
        let err = parse_node("sinh(q1)", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("sinh".into()));
        // a function name must be called
        assert!(parse_node("sin + 1", 1).is_err());
    }

    #[test]
    fn trailing_and_empty_input() {
        assert_eq!(parse_node("q1 q2", 2).unwrap_err().offset, 3);
        assert_eq!(parse_node("(q1", 1).unwrap_err().offset, 3);
        assert_eq!(parse_node("  ", 1).unwrap_err().kind, ParseErrorKind::Empty);
        assert_eq!(parse_node("q1 $ 2", 1).unwrap_err().offset, 3);
    }
}
