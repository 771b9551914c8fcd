use num_complex::Complex64;

use super::{BinaryOp, ComplexExpr, Node, UnaryOp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number { value: f64, integer: Option<u32> },
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i];
        let pos = i;
        match ch {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'+' => out.push(Token { tok: Tok::Plus, pos }),
            b'-' => out.push(Token { tok: Tok::Minus, pos }),
            b'*' => out.push(Token { tok: Tok::Star, pos }),
            b'/' => out.push(Token { tok: Tok::Slash, pos }),
            b'^' => out.push(Token { tok: Tok::Caret, pos }),
            b'(' => out.push(Token { tok: Tok::LParen, pos }),
            b')' => out.push(Token { tok: Tok::RParen, pos }),
            b'0'..=b'9' | b'.' => {
                let (tok, next) = lex_number(src, i)?;
                out.push(Token { tok, pos });
                i = next;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(src[start..i].to_string()),
                    pos,
                });
                continue;
            }
            _ => {
                let c = src[i..].chars().next().unwrap_or('?');
                return Err(Error::Syntax {
                    pos,
                    message: format!("unexpected character `{c}`"),
                });
            }
        }
        i += 1;
    }
    Ok(out)
}

fn lex_number(src: &str, start: usize) -> Result<(Tok, usize)> {
    let bytes = src.as_bytes();
    let mut i = start;
    let mut mantissa_digits = 0;
    let mut has_dot = false;
    let mut has_exp = false;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
        mantissa_digits += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        has_dot = true;
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
            mantissa_digits += 1;
        }
    }
    let mut malformed = mantissa_digits == 0;
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        has_exp = true;
        i += 1;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            malformed = true;
        }
    }
    // "1.2.3", "1e5.0" and digits glued to letters are all rejected here.
    while i < bytes.len() && (bytes[i] == b'.' || bytes[i].is_ascii_alphanumeric()) {
        malformed = true;
        i += 1;
    }
    let text = &src[start..i];
    if malformed {
        return Err(Error::MalformedNumber {
            pos: start,
            text: text.to_string(),
        });
    }
    let value: f64 = text.parse().map_err(|_| Error::MalformedNumber {
        pos: start,
        text: text.to_string(),
    })?;
    let integer = if has_dot || has_exp {
        None
    } else {
        text.parse::<u32>().ok()
    };
    Ok((Tok::Number { value, integer }, i))
}

struct Parser {
    tokens: Vec<Token>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.idx).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.end, |t| t.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.idx).cloned();
        self.idx += 1;
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node> {
        let base = self.base()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.bump();
        match self.peek().cloned() {
            Some(Tok::Number {
                integer: Some(n), ..
            }) => {
                self.bump();
                Ok(Node::Pow(Box::new(base), n))
            }
            _ => self.syntax("exponent must be a non-negative integer literal"),
        }
    }

    fn base(&mut self) -> Result<Node> {
        let pos = self.pos();
        let Some(tok) = self.bump() else {
            return self.syntax("unexpected end of input");
        };
        match tok.tok {
            Tok::Number { value, .. } => Ok(Node::Const(Complex64::new(value, 0.0))),
            Tok::Minus => Ok(Node::Unary(UnaryOp::Neg, Box::new(self.base()?))),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "z" => Ok(Node::Var),
                "i" => Ok(Node::Const(Complex64::new(0.0, 1.0))),
                "exp" | "sin" | "cos" => {
                    let op = match name.as_str() {
                        "exp" => UnaryOp::Exp,
                        "sin" => UnaryOp::Sin,
                        _ => UnaryOp::Cos,
                    };
                    if self.peek() != Some(&Tok::LParen) {
                        return self.syntax(format!("expected `(` after `{name}`"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Node::Unary(op, Box::new(arg)))
                }
                _ => Err(Error::UnknownIdentifier { pos, name }),
            },
            other => Err(Error::Syntax {
                pos,
                message: format!("unexpected token {}", describe(&other)),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.peek() == Some(&Tok::RParen) {
            self.bump();
            Ok(())
        } else {
            self.syntax("expected `)`")
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Number { value, .. } => format!("number {value}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
    }
}

/// Parses a source string into an expression tree.
pub fn parse(source: &str) -> Result<ComplexExpr> {
    let tokens = lex(source)?;
    let mut p = Parser {
        tokens,
        idx: 0,
        end: source.len(),
    };
    let root = p.expr()?;
    if p.idx < p.tokens.len() {
        let t = p.tokens[p.idx].tok.clone();
        return p.syntax(format!("unexpected token {} after expression", describe(&t)));
    }
    Ok(ComplexExpr::new(root))
}
