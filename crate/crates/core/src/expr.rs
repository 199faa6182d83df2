//! A small expression language for the right-hand sides `F(t, w, wp, I)`,
//! `G(t, s, w, wp)` and the perturbation bound `mu(t)`.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-'? power
//! power  := atom ('^' factor)?
//! atom   := number | name | name '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-t^2`
//! is `-(t^2)`. The names `pi` and `e` are always available.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Names that every expression may reference without declaring them.
pub const CONSTANTS: [(&str, f64); 2] = [("pi", std::f64::consts::PI), ("e", std::f64::consts::E)];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown variable '{name}' at {pos}")]
    UnknownVariable { name: String, pos: usize },
    #[error("unknown function '{name}' at {pos}")]
    UnknownFunction { name: String, pos: usize },
    #[error("domain error at {pos}: {kind}")]
    Domain { pos: usize, kind: DomainError },
    #[error("no binding for variable '{name}'")]
    MissingBinding { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainError {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    NegativeBaseFractionalPower,
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainError::DivisionByZero => "division by zero",
            DomainError::LogNonPositive => "log of non-positive value",
            DomainError::SqrtNegative => "sqrt of negative value",
            DomainError::NegativeBaseFractionalPower => "negative base raised to non-integer power",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sinh,
    Cosh,
}

impl Func {
    pub const ALL: [Func; 9] =
        [Func::Sin, Func::Cos, Func::Tan, Func::Exp, Func::Log, Func::Sqrt, Func::Abs, Func::Sinh, Func::Cosh];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// A tree node. `pos` is the byte offset in the source text and is ignored
/// by equality, so trees compare structurally.
#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Lit(f64),
    Var(String),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Node {
    pub fn lit(v: f64) -> Node {
        Node { kind: NodeKind::Lit(v), pos: 0 }
    }

    pub fn var(name: &str) -> Node {
        Node { kind: NodeKind::Var(name.to_string()), pos: 0 }
    }

    pub fn negate(a: Node) -> Node {
        Node { kind: NodeKind::Neg(Box::new(a)), pos: 0 }
    }

    pub fn binary(op: BinOp, a: Node, b: Node) -> Node {
        Node { kind: NodeKind::Binary(op, Box::new(a), Box::new(b)), pos: 0 }
    }

    pub fn call(f: Func, a: Node) -> Node {
        Node { kind: NodeKind::Call(f, Box::new(a)), pos: 0 }
    }
}

/// A parsed, immutable expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
}

impl Expression {
    /// Wraps a hand-built tree. The caller is responsible for the variable
    /// set; literals must be finite.
    pub fn from_node(root: Node) -> Expression {
        Expression { root }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Parses `text`, accepting only the names in `allowed` plus the
    /// predefined constants.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Expression, ExprError> {
        parse(text, allowed)
    }

    pub fn evaluate(&self, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
        evaluate(self, bindings)
    }

    pub fn to_text(&self) -> String {
        to_text(self)
    }

    /// Distinct variable names in order of first occurrence.
    pub fn variables(&self) -> Vec<String> {
        fn walk(n: &Node, out: &mut Vec<String>) {
            match &n.kind {
                NodeKind::Lit(_) => {}
                NodeKind::Var(name) => {
                    if !out.contains(name) {
                        out.push(name.clone());
                    }
                }
                NodeKind::Neg(a) | NodeKind::Call(_, a) => walk(a, out),
                NodeKind::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Resolves variable names to positions in `slots` for repeated
    /// evaluation without map lookups. Names not in `slots` must be
    /// predefined constants.
    pub fn compile(&self, slots: &[&str]) -> Result<Compiled, ExprError> {
        fn go(n: &Node, slots: &[&str]) -> Result<CNode, ExprError> {
            Ok(match &n.kind {
                NodeKind::Lit(v) => CNode::Lit(*v),
                NodeKind::Var(name) => {
                    if let Some(i) = slots.iter().position(|s| s == name) {
                        CNode::Slot(i)
                    } else if let Some(v) = constant(name) {
                        CNode::Lit(v)
                    } else {
                        return Err(ExprError::MissingBinding { name: name.clone() });
                    }
                }
                NodeKind::Neg(a) => CNode::Neg(Box::new(go(a, slots)?)),
                NodeKind::Binary(op, a, b) => {
                    CNode::Binary(*op, n.pos, Box::new(go(a, slots)?), Box::new(go(b, slots)?))
                }
                NodeKind::Call(f, a) => CNode::Call(*f, n.pos, Box::new(go(a, slots)?)),
            })
        }
        Ok(Compiled { root: go(&self.root, slots)?, arity: slots.len() })
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_text(self))
    }
}

fn constant(name: &str) -> Option<f64> {
    CONSTANTS.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
}

#[derive(Debug, Clone)]
enum CNode {
    Lit(f64),
    Slot(usize),
    Neg(Box<CNode>),
    Binary(BinOp, usize, Box<CNode>, Box<CNode>),
    Call(Func, usize, Box<CNode>),
}

/// An expression with variables resolved to positional slots.
#[derive(Debug, Clone)]
pub struct Compiled {
    root: CNode,
    arity: usize,
}

impl Compiled {
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluates with `values[i]` bound to the i-th slot name. Produces the
    /// same bits as [`evaluate`] with equivalent bindings.
    pub fn eval(&self, values: &[f64]) -> Result<f64, ExprError> {
        fn go(n: &CNode, v: &[f64]) -> Result<f64, ExprError> {
            match n {
                CNode::Lit(x) => Ok(*x),
                CNode::Slot(i) => Ok(v[*i]),
                CNode::Neg(a) => Ok(-go(a, v)?),
                CNode::Binary(op, pos, a, b) => apply_binary(*op, go(a, v)?, go(b, v)?, *pos),
                CNode::Call(f, pos, a) => apply_call(*f, go(a, v)?, *pos),
            }
        }
        debug_assert!(values.len() >= self.arity);
        go(&self.root, values)
    }
}

fn apply_binary(op: BinOp, a: f64, b: f64, pos: usize) -> Result<f64, ExprError> {
    match op {
        BinOp::Add => Ok(a + b),
        BinOp::Sub => Ok(a - b),
        BinOp::Mul => Ok(a * b),
        BinOp::Div => {
            if b == 0.0 {
                Err(ExprError::Domain { pos, kind: DomainError::DivisionByZero })
            } else {
                Ok(a / b)
            }
        }
        BinOp::Pow => {
            if b.fract() == 0.0 && b.abs() <= 64.0 {
                Ok(a.powi(b as i32))
            } else if a < 0.0 {
                Err(ExprError::Domain { pos, kind: DomainError::NegativeBaseFractionalPower })
            } else {
                Ok(a.powf(b))
            }
        }
    }
}

fn apply_call(f: Func, x: f64, pos: usize) -> Result<f64, ExprError> {
    Ok(match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Exp => x.exp(),
        Func::Log => {
            if x <= 0.0 {
                return Err(ExprError::Domain { pos, kind: DomainError::LogNonPositive });
            }
            x.ln()
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err(ExprError::Domain { pos, kind: DomainError::SqrtNegative });
            }
            x.sqrt()
        }
        Func::Abs => x.abs(),
        Func::Sinh => x.sinh(),
        Func::Cosh => x.cosh(),
    })
}

/// Evaluates `e` recursively. Bindings take precedence over the predefined
/// constants.
pub fn evaluate(e: &Expression, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
    fn go(n: &Node, b: &HashMap<String, f64>) -> Result<f64, ExprError> {
        match &n.kind {
            NodeKind::Lit(x) => Ok(*x),
            NodeKind::Var(name) => b
                .get(name)
                .copied()
                .or_else(|| constant(name))
                .ok_or_else(|| ExprError::MissingBinding { name: name.clone() }),
            NodeKind::Neg(a) => Ok(-go(a, b)?),
            NodeKind::Binary(op, l, r) => apply_binary(*op, go(l, b)?, go(r, b)?, n.pos),
            NodeKind::Call(f, a) => apply_call(*f, go(a, b)?, n.pos),
        }
    }
    go(&e.root, bindings)
}

/// Fully parenthesized canonical rendering.
pub fn to_text(e: &Expression) -> String {
    fn go(n: &Node, out: &mut String) {
        match &n.kind {
            NodeKind::Lit(v) => out.push_str(&format_literal(*v)),
            NodeKind::Var(name) => out.push_str(name),
            NodeKind::Neg(a) => {
                out.push_str("(-");
                go(a, out);
                out.push(')');
            }
            NodeKind::Binary(op, a, b) => {
                out.push('(');
                go(a, out);
                out.push(' ');
                out.push(op.symbol());
                out.push(' ');
                go(b, out);
                out.push(')');
            }
            NodeKind::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                go(a, out);
                out.push(')');
            }
        }
    }
    let mut out = String::new();
    go(&e.root, &mut out);
    out
}

fn format_literal(v: f64) -> String {
    // Shortest round-trip form; drop the ".0" Debug adds to integers.
    let s = format!("{v:?}");
    match s.strip_suffix(".0") {
        Some(int) => int.to_string(),
        None => s,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            // Exponent only when followed by digits, so "2e" is not swallowed.
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lexeme = &text[start..i];
            let v: f64 = lexeme
                .parse()
                .map_err(|_| ExprError::Syntax { pos: start, msg: format!("malformed number '{lexeme}'") })?;
            if !v.is_finite() {
                return Err(ExprError::Syntax { pos: start, msg: format!("literal '{lexeme}' is not finite") });
            }
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            let tok = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    let ch = text[start..].chars().next().unwrap_or('?');
                    return Err(ExprError::Syntax { pos: start, msg: format!("unexpected character '{ch}'") });
                }
            };
            out.push((tok, start));
            i += 1;
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    cursor: usize,
    allowed: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.cursor].0
    }

    fn pos(&self) -> usize {
        self.toks[self.cursor].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.cursor].clone();
        if t.0 != Tok::End {
            self.cursor += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ExprError::Syntax { pos: self.pos(), msg: format!("expected {what}, found {}", describe(self.peek())) })
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.bump().1;
            let rhs = self.term()?;
            lhs = Node { kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            let pos = self.bump().1;
            let rhs = self.factor()?;
            lhs = Node { kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Tok::Op('-') {
            let pos = self.bump().1;
            let inner = self.power()?;
            return Ok(Node { kind: NodeKind::Neg(Box::new(inner)), pos });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            let pos = self.bump().1;
            let exp = self.factor()?;
            return Ok(Node { kind: NodeKind::Binary(BinOp::Pow, Box::new(base), Box::new(exp)), pos });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Node { kind: NodeKind::Lit(v), pos }),
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction { name, pos })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Node { kind: NodeKind::Call(func, Box::new(arg)), pos })
                } else if self.allowed.contains(&name.as_str()) || constant(&name).is_some() {
                    Ok(Node { kind: NodeKind::Var(name), pos })
                } else {
                    Err(ExprError::UnknownVariable { name, pos })
                }
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            other => Err(ExprError::Syntax { pos, msg: format!("expected operand, found {}", describe(&other)) }),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("name '{s}'"),
        Tok::Op(c) => format!("'{c}'"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::End => "end of input".into(),
    }
}

/// Parses `text` over the variable names in `allowed` (plus `pi` and `e`).
pub fn parse(text: &str, allowed: &[&str]) -> Result<Expression, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Empty);
    }
    let toks = tokenize(text)?;
    let mut p = Parser { toks, cursor: 0, allowed };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(ExprError::Syntax { pos: p.pos(), msg: format!("unexpected {}", describe(p.peek())) });
    }
    Ok(Expression { root })
}
