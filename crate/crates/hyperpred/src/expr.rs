//! Scalar expressions for inline model coefficients.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := sum (('<' | '<=' | '>' | '>=') sum)?
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Comparisons give 1 or 0. Functions: `sin cos exp sqrt abs sign min max`
//! and `piecewise(c, a, b)`, which is `a` where `c > 0` and `b` otherwise.
//! The constant `pi` is predefined. Variable names are fixed when parsing,
//! so evaluation is a walk over slot indices.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub source: String,
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at column {} of `{}`", self.message, self.pos + 1, self.source)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Sign,
    Min,
    Max,
    Piecewise,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "sign" => (Func::Sign, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "piecewise" => (Func::Piecewise, 3),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression over a fixed list of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    arity: usize,
}

impl Expr {
    /// Parses `src`; `vars` names the evaluation slots in order.
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self, ParseError> {
        let mut p = Parser { src, pos: 0, vars };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self {
            root,
            arity: vars.len(),
        })
    }

    /// Evaluates with `args[i]` bound to the `i`th variable.
    pub fn eval(&self, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.arity);
        eval(&self.root, args)
    }

    /// Whether the expression reads variable slot `i`.
    pub fn uses(&self, i: usize) -> bool {
        fn walk(n: &Node, i: usize) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(k) => *k == i,
                Node::Neg(a) => walk(a, i),
                Node::Bin(_, a, b) => walk(a, i) || walk(b, i),
                Node::Call(_, args) => args.iter().any(|a| walk(a, i)),
            }
        }
        walk(&self.root, i)
    }
}

fn eval(n: &Node, args: &[f64]) -> f64 {
    match n {
        Node::Num(c) => *c,
        Node::Var(i) => args[*i],
        Node::Neg(a) => -eval(a, args),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, args), eval(b, args));
            let truth = |c: bool| if c { 1.0 } else { 0.0 };
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
                BinOp::Lt => truth(a < b),
                BinOp::Le => truth(a <= b),
                BinOp::Gt => truth(a > b),
                BinOp::Ge => truth(a >= b),
            }
        }
        Node::Call(f, a) => {
            let x = eval(&a[0], args);
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Sqrt => x.sqrt(),
                Func::Abs => x.abs(),
                Func::Sign => hyperpred_core::presets::sign(x),
                Func::Min => x.min(eval(&a[1], args)),
                Func::Max => x.max(eval(&a[1], args)),
                Func::Piecewise => {
                    if x > 0.0 {
                        eval(&a[1], args)
                    } else {
                        eval(&a[2], args)
                    }
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            source: self.src.to_string(),
            pos: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    /// Consumes `tok` after whitespace if it is next.
    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let lhs = self.sum()?;
        let op = if self.eat("<=") {
            BinOp::Le
        } else if self.eat(">=") {
            BinOp::Ge
        } else if self.eat("<") {
            BinOp::Lt
        } else if self.eat(">") {
            BinOp::Gt
        } else {
            return Ok(lhs);
        };
        let rhs = self.sum()?;
        Ok(Node::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.product()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat("-") {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat("^") {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(")") {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let rest = &self.src[start..];
                let mut len = rest
                    .find(|c: char| !(c.is_ascii_digit() || c == '.'))
                    .unwrap_or(rest.len());
                // exponent part
                let tail = &rest[len..];
                if tail.starts_with(['e', 'E']) {
                    let after = &tail[1..];
                    let sign = usize::from(after.starts_with(['+', '-']));
                    let digits = after[sign..]
                        .find(|c: char| !c.is_ascii_digit())
                        .unwrap_or(after.len() - sign);
                    if digits > 0 {
                        len += 1 + sign + digits;
                    }
                }
                let text = &rest[..len];
                let value = text
                    .parse::<f64>()
                    .map_err(|_| self.error(format!("bad number `{text}`")))?;
                self.pos += len;
                Ok(Node::Num(value))
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let rest = &self.src[start..];
                let len = rest
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                    .unwrap_or(rest.len());
                let name = &rest[..len];
                self.pos += len;
                if self.eat("(") {
                    let (func, arity) = Func::lookup(name).ok_or_else(|| ParseError {
                        source: self.src.to_string(),
                        pos: start,
                        message: format!("unknown function `{name}`"),
                    })?;
                    let mut args = vec![self.expr()?];
                    while self.eat(",") {
                        args.push(self.expr()?);
                    }
                    if !self.eat(")") {
                        return Err(self.error("expected `,` or `)`"));
                    }
                    if args.len() != arity {
                        return Err(ParseError {
                            source: self.src.to_string(),
                            pos: start,
                            message: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
                        });
                    }
                    return Ok(Node::Call(func, args));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                Err(ParseError {
                    source: self.src.to_string(),
                    pos: start,
                    message: format!("unknown name `{name}` (allowed: {})", self.vars.join(", ")),
                })
            }
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
            None => Err(self.error("unexpected end of expression")),
        }
    }
}
