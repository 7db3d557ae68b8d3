//! A small arithmetic expression language for user-supplied profiles and kernels.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | var | 'pi' | func '(' expr ')' | '(' expr ')'
//! func    := exp | log | sin | cos | abs
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! reads as `-(x^2)`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
}

impl Func {
    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var => x,
            Node::Neg(a) => -a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, b) => {
                let e = b.eval(x);
                let base = a.eval(x);
                if e.fract() == 0.0 && e.abs() <= 64.0 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Node::Call(f, a) => f.apply(a.eval(x)),
        }
    }
}

/// A parsed expression in one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    var: String,
    root: Node,
}

impl Expr {
    /// Parses `source` with `x` as the variable.
    pub fn parse(source: &str) -> Result<Self> {
        Self::parse_in(source, "x")
    }

    /// Parses `source` with a caller-chosen variable name.
    pub fn parse_in(source: &str, var: &str) -> Result<Self> {
        let tokens = lex(source)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            var,
            len: source.len(),
        };
        let root = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(Error::Parse {
                offset: t.offset,
                message: format!("unexpected {}", t.kind),
            });
        }
        Ok(Self {
            source: source.to_string(),
            var: var.to_string(),
            root,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.root.eval(x)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn variable(&self) -> &str {
        &self.var
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Num(v) => write!(f, "number {v}"),
            Kind::Ident(s) => write!(f, "identifier `{s}`"),
            Kind::Op(c) => write!(f, "operator `{c}`"),
            Kind::LParen => f.write_str("`(`"),
            Kind::RParen => f.write_str("`)`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Kind,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, e.g. 1e-3
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            Kind::Num(v)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Kind::Ident(src[start..i].to_string())
        } else {
            i += c.len_utf8();
            match c {
                '+' | '-' | '*' | '/' | '^' => Kind::Op(c),
                '(' => Kind::LParen,
                ')' => Kind::RParen,
                _ => {
                    return Err(Error::Parse {
                        offset: start,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            }
        };
        out.push(Token { kind, offset: start });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    var: &'a str,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token { kind: Kind::Op(c), .. }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn error_here(&self, message: &str) -> Error {
        let offset = self.peek().map_or(self.len, |t| t.offset);
        Error::Parse {
            offset,
            message: message.to_string(),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op(&['+']).is_some() {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_here("unexpected end of expression"));
        };
        self.pos += 1;
        match tok.kind {
            Kind::Num(v) => Ok(Node::Num(v)),
            Kind::LParen => {
                let inner = self.expr()?;
                self.close_paren()?;
                Ok(inner)
            }
            Kind::Ident(name) => {
                if name == self.var {
                    return Ok(Node::Var);
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                let func = match name.as_str() {
                    "exp" => Func::Exp,
                    "log" => Func::Log,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "abs" => Func::Abs,
                    _ => {
                        return Err(Error::Parse {
                            offset: tok.offset,
                            message: format!("unknown identifier `{name}`"),
                        })
                    }
                };
                match self.peek() {
                    Some(Token { kind: Kind::LParen, .. }) => self.pos += 1,
                    _ => return Err(self.error_here(&format!("expected `(` after `{name}`"))),
                }
                let arg = self.expr()?;
                self.close_paren()?;
                Ok(Node::Call(func, Box::new(arg)))
            }
            other => Err(Error::Parse {
                offset: tok.offset,
                message: format!("unexpected {other}"),
            }),
        }
    }

    fn close_paren(&mut self) -> Result<()> {
        match self.peek() {
            Some(Token { kind: Kind::RParen, .. }) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error_here("expected `)`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, x: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0), -9.0);
        assert_eq!(ev("(1 - x) / 4", 5.0), -1.0);
        assert_eq!(ev("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("1/(1+x^2)", 2.0) - 0.2).abs() < 1e-15);
        assert!((ev("exp(log(2)/10*x)", 10.0) - 2.0).abs() < 1e-14);
        assert!((ev("sin(pi/2) + cos(0) + abs(-3)", 0.0) - 5.0).abs() < 1e-15);
        assert_eq!(ev("1.5e2 + 2E-1", 0.0), 150.2);
    }

    #[test]
    fn custom_variable() {
        let e = Expr::parse_in("exp(-z^2)", "z").unwrap();
        assert_eq!(e.eval(0.0), 1.0);
        assert!(Expr::parse_in("x + 1", "z").is_err());
    }

    #[test]
    fn errors_carry_offsets() {
        match Expr::parse("1 + foo(x)") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        match Expr::parse("(1 + x") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::parse("1 $ 2").is_err());
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("2 3").is_err());
        assert!(Expr::parse("exp x").is_err());
    }

    proptest! {
        #[test]
        fn polynomial_roundtrip(a in -10.0f64..10.0, b in -10.0f64..10.0, x in -5.0f64..5.0) {
            let e = Expr::parse(&format!("({a}) * x^2 + ({b}) * x - 1")).unwrap();
            let want = a * x * x + b * x - 1.0;
            prop_assert!((e.eval(x) - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }
}
