//! Tiny infix expression language for analytic objectives and constraints.
//!
//! Variables are `x1..xn` (with `x`, `y`, `z` as aliases for the first three),
//! constants `pi` and `e`, operators `+ - * / ^` and the functions `exp`,
//! `log`/`ln`, `sqrt`, `abs`, `sin`, `cos`, `tan`, `sinh`, `cosh`, `tanh`,
//! `arctan`/`atan` and `arctan2`/`atan2(y, x)`. Gradients come from
//! forward-mode dual numbers, so every parsed function is differentiable.

use std::fmt;

use crate::error::{Error, Result};

/// Highest input dimension supported by gradient evaluation.
pub const MAX_VARS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Atan,
    Atan2,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "exp" => (Func::Exp, 1),
            "log" | "ln" => (Func::Log, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "sinh" => (Func::Sinh, 1),
            "cosh" => (Func::Cosh, 1),
            "tanh" => (Func::Tanh, 1),
            "arctan" | "atan" => (Func::Atan, 1),
            "arctan2" | "atan2" => (Func::Atan2, 2),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Parsed expression over `arity` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    arity: usize,
    root: Node,
}

#[derive(Clone, Copy, Debug)]
struct Dual {
    v: f64,
    d: [f64; MAX_VARS],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; MAX_VARS] }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        d.iter_mut().for_each(|x| *x *= dv);
        Dual { v, d }
    }

    fn is_const(&self) -> bool {
        self.d.iter().all(|&x| x == 0.0)
    }
}

impl Expr {
    pub fn parse(source: &str, arity: usize) -> Result<Expr> {
        if arity == 0 || arity > MAX_VARS {
            return Err(Error::Expr(format!("arity must be in 1..={MAX_VARS}, got {arity}")));
        }
        let tokens = tokenize(source)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            arity,
        };
        let root = p.expr()?;
        if p.pos != tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected '{}' in '{source}'",
                tokens[p.pos]
            )));
        }
        Ok(Expr {
            source: source.trim().to_string(),
            arity,
            root,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert!(x.len() >= self.arity);
        eval(&self.root, x)
    }

    /// Value and gradient.
    pub fn eval_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = eval_dual(&self.root, x);
        (d.v, d.d[..self.arity].to_vec())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn apply(func: Func, a: f64, b: f64) -> f64 {
    match func {
        Func::Exp => a.exp(),
        Func::Log => a.ln(),
        Func::Sqrt => a.sqrt(),
        Func::Abs => a.abs(),
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Tan => a.tan(),
        Func::Sinh => a.sinh(),
        Func::Cosh => a.cosh(),
        Func::Tanh => a.tanh(),
        Func::Atan => a.atan(),
        Func::Atan2 => a.atan2(b),
    }
}

fn eval(n: &Node, x: &[f64]) -> f64 {
    match n {
        Node::Const(c) => *c,
        Node::Var(i) => x[*i],
        Node::Neg(a) => -eval(a, x),
        Node::Add(a, b) => eval(a, x) + eval(b, x),
        Node::Sub(a, b) => eval(a, x) - eval(b, x),
        Node::Mul(a, b) => eval(a, x) * eval(b, x),
        Node::Div(a, b) => eval(a, x) / eval(b, x),
        Node::Pow(a, b) => pow(eval(a, x), eval(b, x)),
        Node::Call(f, args) => {
            let a = eval(&args[0], x);
            let b = args.get(1).map_or(0.0, |n| eval(n, x));
            apply(*f, a, b)
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == 2.0 {
        a * a
    } else if b.fract() == 0.0 && b.abs() < 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn eval_dual(n: &Node, x: &[f64]) -> Dual {
    match n {
        Node::Const(c) => Dual::constant(*c),
        Node::Var(i) => {
            let mut d = Dual::constant(x[*i]);
            d.d[*i] = 1.0;
            d
        }
        Node::Neg(a) => {
            let a = eval_dual(a, x);
            a.chain(-a.v, -1.0)
        }
        Node::Add(a, b) | Node::Sub(a, b) => {
            let (a_, b_) = (eval_dual(a, x), eval_dual(b, x));
            let s = if matches!(n, Node::Add(..)) { 1.0 } else { -1.0 };
            let mut d = a_.d;
            d.iter_mut().zip(b_.d).for_each(|(p, q)| *p += s * q);
            Dual { v: a_.v + s * b_.v, d }
        }
        Node::Mul(a, b) => {
            let (a, b) = (eval_dual(a, x), eval_dual(b, x));
            let d = std::array::from_fn(|k| a.d[k] * b.v + a.v * b.d[k]);
            Dual { v: a.v * b.v, d }
        }
        Node::Div(a, b) => {
            let (a, b) = (eval_dual(a, x), eval_dual(b, x));
            let d = std::array::from_fn(|k| (a.d[k] * b.v - a.v * b.d[k]) / (b.v * b.v));
            Dual { v: a.v / b.v, d }
        }
        Node::Pow(a, b) => {
            let (a, b) = (eval_dual(a, x), eval_dual(b, x));
            let v = pow(a.v, b.v);
            if b.is_const() {
                a.chain(v, b.v * pow(a.v, b.v - 1.0))
            } else {
                let ln_a = a.v.ln();
                let d = std::array::from_fn(|k| {
                    let da = if a.d[k] == 0.0 { 0.0 } else { b.v * pow(a.v, b.v - 1.0) * a.d[k] };
                    da + v * ln_a * b.d[k]
                });
                Dual { v, d }
            }
        }
        Node::Call(f, args) => {
            let a = eval_dual(&args[0], x);
            match f {
                Func::Exp => {
                    let v = a.v.exp();
                    a.chain(v, v)
                }
                Func::Log => a.chain(a.v.ln(), 1.0 / a.v),
                Func::Sqrt => {
                    let v = a.v.sqrt();
                    a.chain(v, 0.5 / v)
                }
                Func::Abs => a.chain(a.v.abs(), a.v.signum() * (a.v != 0.0) as i32 as f64),
                Func::Sin => a.chain(a.v.sin(), a.v.cos()),
                Func::Cos => a.chain(a.v.cos(), -a.v.sin()),
                Func::Tan => {
                    let c = a.v.cos();
                    a.chain(a.v.tan(), 1.0 / (c * c))
                }
                Func::Sinh => a.chain(a.v.sinh(), a.v.cosh()),
                Func::Cosh => a.chain(a.v.cosh(), a.v.sinh()),
                Func::Tanh => {
                    let t = a.v.tanh();
                    a.chain(t, 1.0 - t * t)
                }
                Func::Atan => a.chain(a.v.atan(), 1.0 / (1.0 + a.v * a.v)),
                Func::Atan2 => {
                    // atan2(y, x): d = (x dy - y dx) / (x² + y²)
                    let (y, xx) = (a, eval_dual(&args[1], x));
                    let r2 = y.v * y.v + xx.v * xx.v;
                    let d = if r2 > 0.0 {
                        std::array::from_fn(|k| (xx.v * y.d[k] - y.v * xx.d[k]) / r2)
                    } else {
                        [0.0; MAX_VARS]
                    };
                    Dual { v: y.v.atan2(xx.v), d }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Sym(c) => write!(f, "{c}"),
        }
    }
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent only when followed by a digit or sign+digit
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
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number '{text}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character '{c}' in '{s}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Tok],
    pos: usize,
    arity: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Expr(format!(
                "expected '{c}', found {}",
                self.peek().map_or("end of input".to_string(), |t| format!("'{t}'"))
            )))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| Error::Expr("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek() == Some(&Tok::Sym('(')) {
                    let (func, nargs) = Func::lookup(&name)
                        .ok_or_else(|| Error::Expr(format!("unknown function '{name}'")))?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != nargs {
                        return Err(Error::Expr(format!(
                            "{name} takes {nargs} argument(s), got {}",
                            args.len()
                        )));
                    }
                    return Ok(Node::Call(func, args));
                }
                self.variable(&name)
            }
            Tok::Sym(c) => Err(Error::Expr(format!("unexpected '{c}'"))),
        }
    }

    fn variable(&self, name: &str) -> Result<Node> {
        let idx = match name {
            "pi" => return Ok(Node::Const(std::f64::consts::PI)),
            "e" => return Ok(Node::Const(std::f64::consts::E)),
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => match name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                Some(k) if k >= 1 => k - 1,
                _ => return Err(Error::Expr(format!("unknown identifier '{name}'"))),
            },
        };
        if idx >= self.arity {
            return Err(Error::Expr(format!(
                "variable '{name}' out of range for arity {}",
                self.arity
            )));
        }
        Ok(Node::Var(idx))
    }
}

/// `lhs <= rhs`, `lhs >= rhs` or `lhs = rhs`, normalized to `q(x) <= 0` or `p(x) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    Inequality(Expr),
    Equality(Expr),
}

impl Constraint {
    pub fn parse(text: &str, arity: usize) -> Result<Constraint> {
        let (lhs, rhs, kind) = if let Some((l, r)) = text.split_once("<=") {
            (l, r, '<')
        } else if let Some((l, r)) = text.split_once(">=") {
            (l, r, '>')
        } else if let Some((l, r)) = text.split_once('<') {
            (l, r, '<')
        } else if let Some((l, r)) = text.split_once('>') {
            (l, r, '>')
        } else if let Some((l, r)) = text.split_once("==").or_else(|| text.split_once('=')) {
            (l, r, '=')
        } else {
            return Err(Error::Expr(format!("constraint '{text}' has no <=, >= or =")));
        };
        let (l, r) = (lhs.trim(), rhs.trim());
        if l.is_empty() || r.is_empty() {
            return Err(Error::Expr(format!("constraint '{text}' is missing a side")));
        }
        let src = match kind {
            '<' | '=' => format!("({l}) - ({r})"),
            _ => format!("({r}) - ({l})"),
        };
        let e = Expr::parse(&src, arity)?;
        Ok(if kind == '=' {
            Constraint::Equality(e)
        } else {
            Constraint::Inequality(e)
        })
    }
}
