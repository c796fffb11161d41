//! Closed-form expressions over a fixed grammar.
//!
//! Signals, couplings, window functionals, comment rules and cell predicates
//! are all written as small arithmetic expressions:
//!
//! ```text
//! expr   := conj
//! conj   := cmp ('&&' cmp)*
//! cmp    := sum (('<' | '<=' | '>' | '>=' | '==' | '!=') sum)?
//! sum    := prod (('+' | '-') prod)*
//! prod   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 't' | name '[' int ']' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Comparisons and `&&` evaluate to `1.0` or `0.0`. Variable names are fixed
//! (see [`VarKind`]); which of them an expression may use is decided by the
//! [`Scope`] of the place it is declared.

use std::fmt;

use thiserror::Error;

/// Grammar violation reported by [`Expr::parse`] or [`Expr::check`].
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at column {column} (token `{token}`) in `{source_text}`")]
pub struct ExprError {
    pub message: String,
    /// 1-based character column inside the expression source.
    pub column: usize,
    pub token: String,
    pub source_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    T,
    Phi,
    DPhi,
    U0,
    U,
    Eps,
    Lambda,
    Omega,
    V,
    Xi,
    Theta,
    Other,
    Eta,
    Diag,
    C,
    X,
    A,
}

impl VarKind {
    pub const COUNT: usize = 17;

    pub const ALL: [VarKind; Self::COUNT] = [
        VarKind::T,
        VarKind::Phi,
        VarKind::DPhi,
        VarKind::U0,
        VarKind::U,
        VarKind::Eps,
        VarKind::Lambda,
        VarKind::Omega,
        VarKind::V,
        VarKind::Xi,
        VarKind::Theta,
        VarKind::Other,
        VarKind::Eta,
        VarKind::Diag,
        VarKind::C,
        VarKind::X,
        VarKind::A,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VarKind::T => "t",
            VarKind::Phi => "phi",
            VarKind::DPhi => "dphi",
            VarKind::U0 => "u0",
            VarKind::U => "u",
            VarKind::Eps => "eps",
            VarKind::Lambda => "lambda",
            VarKind::Omega => "omega",
            VarKind::V => "v",
            VarKind::Xi => "xi",
            VarKind::Theta => "theta",
            VarKind::Other => "other",
            VarKind::Eta => "eta",
            VarKind::Diag => "diag",
            VarKind::C => "c",
            VarKind::X => "x",
            VarKind::A => "a",
        }
    }

    fn from_name(name: &str) -> Option<VarKind> {
        VarKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Kinds that may carry a 1-based game suffix (`theta2[0]`) inside
    /// synthesis forms.
    fn game_indexed(self) -> bool {
        matches!(self, VarKind::Theta | VarKind::Omega | VarKind::V)
    }
}

/// A resolved variable reference. `game` is 0 for ordinary variables and the
/// 1-based game number for synthesis variables such as `omega3[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarRef {
    pub kind: VarKind,
    pub game: usize,
    pub index: usize,
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.game) {
            (VarKind::T, _) => write!(f, "t"),
            (k, 0) => write!(f, "{}[{}]", k.name(), self.index),
            (k, g) => write!(f, "{}{}[{}]", k.name(), g, self.index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::And => 1,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 2,
            BinOp::Add | BinOp::Sub => 3,
            BinOp::Mul | BinOp::Div => 4,
            BinOp::Pow => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Min | Func::Max => n >= 2,
            _ => n == 1,
        }
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(VarRef),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    pub fn eval(&self, env: &impl Env) -> f64 {
        match self {
            Node::Num(x) => *x,
            Node::Var(v) => env.get(*v),
            Node::Neg(a) => -a.eval(env),
            Node::Bin(op, a, b) => {
                let x = a.eval(env);
                // `&&` short-circuits so predicates can guard undefined branches.
                if *op == BinOp::And {
                    return if x != 0.0 && b.eval(env) != 0.0 { 1.0 } else { 0.0 };
                }
                let y = b.eval(env);
                let truth = |c: bool| if c { 1.0 } else { 0.0 };
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => pow(x, y),
                    BinOp::Lt => truth(x < y),
                    BinOp::Le => truth(x <= y),
                    BinOp::Gt => truth(x > y),
                    BinOp::Ge => truth(x >= y),
                    BinOp::Eq => truth(x == y),
                    BinOp::Ne => truth(x != y),
                    BinOp::And => unreachable!(),
                }
            }
            Node::Call(f, args) => match f {
                Func::Sin => args[0].eval(env).sin(),
                Func::Cos => args[0].eval(env).cos(),
                Func::Exp => args[0].eval(env).exp(),
                Func::Tanh => args[0].eval(env).tanh(),
                Func::Abs => args[0].eval(env).abs(),
                Func::Min => args.iter().map(|a| a.eval(env)).fold(f64::INFINITY, f64::min),
                Func::Max => args
                    .iter()
                    .map(|a| a.eval(env))
                    .fold(f64::NEG_INFINITY, f64::max),
            },
        }
    }

    fn visit_vars(&self, out: &mut Vec<VarRef>) {
        match self {
            Node::Num(_) => {}
            Node::Var(v) => out.push(*v),
            Node::Neg(a) => a.visit_vars(out),
            Node::Bin(_, a, b) => {
                a.visit_vars(out);
                b.visit_vars(out);
            }
            Node::Call(_, args) => args.iter().for_each(|a| a.visit_vars(out)),
        }
    }

    fn map_vars(&self, f: &impl Fn(VarRef) -> VarRef) -> Node {
        match self {
            Node::Num(x) => Node::Num(*x),
            Node::Var(v) => Node::Var(f(*v)),
            Node::Neg(a) => Node::Neg(Box::new(a.map_vars(f))),
            Node::Bin(op, a, b) => Node::Bin(*op, Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Node::Call(func, args) => Node::Call(*func, args.iter().map(|a| a.map_vars(f)).collect()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Bin(op, _, _) => op.precedence(),
            Node::Neg(_) => 5,
            _ => 7,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(x) => {
                if x.is_finite() && *x >= 0.0 {
                    write!(f, "{x:?}")
                } else {
                    write!(f, "({x:?})")
                }
            }
            Node::Var(v) => write!(f, "{v}"),
            Node::Neg(a) => {
                write!(f, "-")?;
                write_wrapped(f, a, a.precedence() < 5)
            }
            Node::Bin(op, a, b) => {
                let p = op.precedence();
                // `^` is right associative, everything else left associative.
                let (wrap_a, wrap_b) = if *op == BinOp::Pow {
                    (a.precedence() <= p, b.precedence() < p)
                } else {
                    (a.precedence() < p, b.precedence() <= p)
                };
                write_wrapped(f, a, wrap_a)?;
                write!(f, " {} ", op.symbol())?;
                write_wrapped(f, b, wrap_b)
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    a.write(f)?;
                }
                write!(f, ")")
            }
        }
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, n: &Node, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "(")?;
        n.write(f)?;
        write!(f, ")")
    } else {
        n.write(f)
    }
}

fn pow(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() <= 64.0 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

/// Source of variable values during evaluation.
pub trait Env {
    fn get(&self, var: VarRef) -> f64;
}

/// Slice-backed variable environment. Unbound or out-of-range variables
/// evaluate to NaN; [`Expr::check`] rules those out ahead of time.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a> {
    pub t: f64,
    slots: [&'a [f64]; VarKind::COUNT],
    games: &'a [[&'a [f64]; 3]],
}

impl<'a> Bindings<'a> {
    pub fn new(t: f64) -> Self {
        Bindings {
            t,
            slots: [&[]; VarKind::COUNT],
            games: &[],
        }
    }

    pub fn with(mut self, kind: VarKind, values: &'a [f64]) -> Self {
        self.slots[kind as usize] = values;
        self
    }

    pub fn set(&mut self, kind: VarKind, values: &'a [f64]) {
        self.slots[kind as usize] = values;
    }

    /// Per-game `(theta, omega, v)` triples for synthesis forms.
    pub fn with_games(mut self, games: &'a [[&'a [f64]; 3]]) -> Self {
        self.games = games;
        self
    }
}

impl Env for Bindings<'_> {
    #[inline]
    fn get(&self, var: VarRef) -> f64 {
        if var.kind == VarKind::T {
            return self.t;
        }
        let slice = if var.game == 0 {
            self.slots[var.kind as usize]
        } else {
            let slot = match var.kind {
                VarKind::Theta => 0,
                VarKind::Omega => 1,
                _ => 2,
            };
            match self.games.get(var.game - 1) {
                Some(g) => g[slot],
                None => return f64::NAN,
            }
        };
        slice.get(var.index).copied().unwrap_or(f64::NAN)
    }
}

/// Which variables an expression may reference, with their dimensions.
#[derive(Debug, Clone, Default)]
pub struct Scope {
    dims: Vec<(VarKind, usize)>,
    /// Dimensions of `(theta, omega, v)` for each synthesis game.
    games: Vec<[usize; 3]>,
    time: bool,
}

impl Scope {
    pub fn new() -> Self {
        Scope::default()
    }

    pub fn time(mut self) -> Self {
        self.time = true;
        self
    }

    pub fn var(mut self, kind: VarKind, dim: usize) -> Self {
        if kind == VarKind::T {
            self.time = true;
        } else {
            self.dims.retain(|(k, _)| *k != kind);
            self.dims.push((kind, dim));
        }
        self
    }

    pub fn games(mut self, dims: Vec<[usize; 3]>) -> Self {
        self.games = dims;
        self
    }

    fn dim(&self, kind: VarKind) -> Option<usize> {
        self.dims.iter().find(|(k, _)| *k == kind).map(|(_, d)| *d)
    }
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    /// Syntactic identity: equal trees, regardless of whitespace.
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ExprError> {
        let tokens = lex(source)?;
        let mut p = Parser {
            source,
            tokens,
            pos: 0,
        };
        let root = p.expr(0)?;
        if let Some(tok) = p.peek() {
            return Err(p.error_at(tok, "unexpected trailing input"));
        }
        Ok(Expr {
            source: source.trim().to_string(),
            root,
        })
    }

    pub fn constant(value: f64) -> Expr {
        Expr::from_node(Node::Num(value))
    }

    pub fn from_node(root: Node) -> Expr {
        let source = NodeDisplay(&root).to_string();
        Expr { source, root }
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    #[inline]
    pub fn eval(&self, env: &impl Env) -> f64 {
        self.root.eval(env)
    }

    pub fn vars(&self) -> Vec<VarRef> {
        let mut out = Vec::new();
        self.root.visit_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    pub fn references(&self, kind: VarKind) -> bool {
        self.vars().iter().any(|v| v.kind == kind)
    }

    /// Rename variables, keeping the tree shape (and hence the evaluation
    /// order) intact.
    pub fn map_vars(&self, f: impl Fn(VarRef) -> VarRef) -> Expr {
        Expr::from_node(self.root.map_vars(&f))
    }

    /// `self + other` as a single tree.
    pub fn plus(&self, other: &Expr) -> Expr {
        Expr::from_node(Node::Bin(
            BinOp::Add,
            Box::new(self.root.clone()),
            Box::new(other.root.clone()),
        ))
    }

    /// Verify every variable is allowed by `scope` and within its dimension.
    pub fn check(&self, scope: &Scope) -> Result<(), ExprError> {
        for v in self.vars() {
            let problem = match (v.kind, v.game) {
                (VarKind::T, _) if scope.time => None,
                (VarKind::T, _) => Some("variable `t` is not available here".to_string()),
                (kind, 0) => match scope.dim(kind) {
                    None => Some(format!("variable `{}` is not available here", kind.name())),
                    Some(d) if v.index >= d => {
                        Some(format!("index {} out of range for `{}` (dimension {d})", v.index, kind.name()))
                    }
                    Some(_) => None,
                },
                (kind, g) => match scope.games.get(g - 1) {
                    None => Some(format!("game {g} is not part of this synthesis")),
                    Some(dims) => {
                        let d = match kind {
                            VarKind::Theta => dims[0],
                            VarKind::Omega => dims[1],
                            _ => dims[2],
                        };
                        (v.index >= d).then(|| {
                            format!("index {} out of range for `{}{g}` (dimension {d})", v.index, kind.name())
                        })
                    }
                },
            };
            if let Some(message) = problem {
                let token = v.to_string();
                let column = self
                    .source
                    .find(&token)
                    .map(|i| self.source[..i].chars().count() + 1)
                    .unwrap_or(1);
                return Err(ExprError {
                    message,
                    column,
                    token,
                    source_text: self.source.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn parse_checked(source: &str, scope: &Scope) -> Result<Expr, ExprError> {
        let e = Expr::parse(source)?;
        e.check(scope)?;
        Ok(e)
    }
}

struct NodeDisplay<'a>(&'a Node);

impl fmt::Display for NodeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.write(f)
    }
}

/// Evaluate a list of expressions into `out`.
pub fn eval_into(exprs: &[Expr], env: &impl Env, out: &mut Vec<f64>) {
    out.clear();
    out.extend(exprs.iter().map(|e| e.eval(env)));
}

pub fn eval_all(exprs: &[Expr], env: &impl Env) -> Vec<f64> {
    exprs.iter().map(|e| e.eval(env)).collect()
}

pub fn parse_all(sources: &[impl AsRef<str>], scope: &Scope) -> Result<Vec<Expr>, ExprError> {
    sources
        .iter()
        .map(|s| Expr::parse_checked(s.as_ref(), scope))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    start: usize,
    text: String,
}

fn lex(source: &str) -> Result<Vec<Spanned>, ExprError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |i: usize, msg: &str, token: String| ExprError {
        message: msg.to_string(),
        column: i + 1,
        token,
        source_text: source.to_string(),
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
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
            let value: f64 = text
                .parse()
                .map_err(|_| err(start, "malformed number", text.clone()))?;
            out.push(Spanned {
                tok: Tok::Num(value),
                start,
                text,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Spanned {
                tok: Tok::Ident(text.clone()),
                start,
                text,
            });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let sym: &'static str = match two.as_str() {
            "<=" => "<=",
            ">=" => ">=",
            "==" => "==",
            "!=" => "!=",
            "&&" => "&&",
            _ => match c {
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '/' => "/",
                '^' => "^",
                '<' => "<",
                '>' => ">",
                '(' => "(",
                ')' => ")",
                '[' => "[",
                ']' => "]",
                ',' => ",",
                _ => return Err(err(start, "unexpected character", c.to_string())),
            },
        };
        i += sym.len();
        out.push(Spanned {
            tok: Tok::Sym(sym),
            start,
            text: sym.to_string(),
        });
    }
    Ok(out)
}

struct Parser<'s> {
    source: &'s str,
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.pos)
    }

    fn error_at(&self, tok: &Spanned, msg: &str) -> ExprError {
        ExprError {
            message: msg.to_string(),
            column: tok.start + 1,
            token: tok.text.clone(),
            source_text: self.source.to_string(),
        }
    }

    fn error_end(&self, msg: &str) -> ExprError {
        ExprError {
            message: msg.to_string(),
            column: self.source.chars().count() + 1,
            token: "<end>".to_string(),
            source_text: self.source.to_string(),
        }
    }

    fn next(&mut self) -> Result<Spanned, ExprError> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error_end("unexpected end of expression"))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, sym: &'static str) -> Result<(), ExprError> {
        let tok = self.next()?;
        if tok.tok == Tok::Sym(sym) {
            Ok(())
        } else {
            Err(self.error_at(&tok, &format!("expected `{sym}`")))
        }
    }

    fn binop(&self) -> Option<BinOp> {
        match self.peek()?.tok {
            Tok::Sym(s) => Some(match s {
                "+" => BinOp::Add,
                "-" => BinOp::Sub,
                "*" => BinOp::Mul,
                "/" => BinOp::Div,
                "^" => BinOp::Pow,
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                ">=" => BinOp::Ge,
                "==" => BinOp::Eq,
                "!=" => BinOp::Ne,
                "&&" => BinOp::And,
                _ => return None,
            }),
            _ => None,
        }
    }

    /// Precedence climbing; `min` is the lowest binding power accepted.
    fn expr(&mut self, min: u8) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let p = op.precedence();
            if p < min {
                break;
            }
            let is_cmp = p == 2;
            self.pos += 1;
            let rhs = if op == BinOp::Pow {
                self.unary()?
            } else {
                self.expr(p + 1)?
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
            // Comparisons do not chain.
            if is_cmp && self.binop().is_some_and(|o| o.precedence() == 2) {
                let tok = self.peek().unwrap().clone();
                return Err(self.error_at(&tok, "comparisons cannot be chained"));
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if matches!(self.peek(), Some(Spanned { tok: Tok::Sym("-"), .. })) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Node::Num(x) => Node::Num(-x),
                other => Node::Neg(Box::new(other)),
            });
        }
        let base = self.atom()?;
        if matches!(self.peek(), Some(Spanned { tok: Tok::Sym("^"), .. })) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let tok = self.next()?;
        match &tok.tok {
            Tok::Num(x) => Ok(Node::Num(*x)),
            Tok::Sym("(") => {
                let inner = self.expr(0)?;
                self.expect(")")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if name == "t" {
                    return Ok(Node::Var(VarRef {
                        kind: VarKind::T,
                        game: 0,
                        index: 0,
                    }));
                }
                if matches!(self.peek(), Some(Spanned { tok: Tok::Sym("("), .. })) {
                    let func = Func::from_name(name)
                        .ok_or_else(|| self.error_at(&tok, "unknown function"))?;
                    self.pos += 1;
                    let mut args = vec![self.expr(0)?];
                    loop {
                        let t = self.next()?;
                        match t.tok {
                            Tok::Sym(",") => args.push(self.expr(0)?),
                            Tok::Sym(")") => break,
                            _ => return Err(self.error_at(&t, "expected `,` or `)`")),
                        }
                    }
                    if !func.arity_ok(args.len()) {
                        return Err(self.error_at(&tok, "wrong number of arguments"));
                    }
                    return Ok(Node::Call(func, args));
                }
                let (kind, game) = resolve_name(name).ok_or_else(|| self.error_at(&tok, "unknown variable"))?;
                self.expect("[")?;
                let idx_tok = self.next()?;
                let index = match idx_tok.tok {
                    Tok::Num(x) if x >= 0.0 && x.fract() == 0.0 => x as usize,
                    _ => return Err(self.error_at(&idx_tok, "expected a non-negative integer index")),
                };
                self.expect("]")?;
                Ok(Node::Var(VarRef { kind, game, index }))
            }
            _ => Err(self.error_at(&tok, "unexpected token")),
        }
    }
}

fn resolve_name(name: &str) -> Option<(VarKind, usize)> {
    if let Some(k) = VarKind::from_name(name) {
        return (k != VarKind::T).then_some((k, 0));
    }
    let split = name.find(|c: char| c.is_ascii_digit())?;
    let (base, digits) = name.split_at(split);
    let kind = VarKind::from_name(base).filter(|k| k.game_indexed())?;
    let game: usize = digits.parse().ok().filter(|g| *g >= 1)?;
    Some((kind, game))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, env: &Bindings) -> f64 {
        Expr::parse(src).unwrap().eval(env)
    }

    #[test]
    fn arithmetic_and_precedence() {
        let env = Bindings::new(2.0);
        assert_eq!(eval("1 + 2 * 3", &env), 7.0);
        assert_eq!(eval("(1 + 2) * 3", &env), 9.0);
        assert_eq!(eval("2 ^ 3 ^ 2", &env), 512.0);
        assert_eq!(eval("-2 ^ 2", &env), -4.0);
        assert_eq!(eval("t * t - 1", &env), 3.0);
        assert_eq!(eval("8 / 4 / 2", &env), 1.0);
        assert_eq!(eval("1e-3 * 1000", &env), 1.0);
    }

    #[test]
    fn functions_and_comparisons() {
        let env = Bindings::new(0.0);
        assert_eq!(eval("max(1, 3, 2) + min(4, -1)", &env), 2.0);
        assert_eq!(eval("abs(-2) + exp(0) + cos(0) + sin(0) + tanh(0)", &env), 4.0);
        assert_eq!(eval("1 < 2 && 2 <= 2", &env), 1.0);
        assert_eq!(eval("1 > 2", &env), 0.0);
        assert_eq!(eval("3 + (t == 0)", &env), 4.0);
    }

    #[test]
    fn variables_resolve_against_bindings() {
        let phi = [1.5, -2.0];
        let eps = [0.25];
        let env = Bindings::new(1.0).with(VarKind::Phi, &phi).with(VarKind::Eps, &eps);
        assert_eq!(eval("phi[0] * eps[0] + phi[1]", &env), 1.5 * 0.25 - 2.0);
        let g1 = [1.0];
        let g2 = [5.0];
        let games = [[&g1[..], &[][..], &[][..]], [&g2[..], &[][..], &[][..]]];
        let env = Bindings::new(0.0).with_games(&games);
        assert_eq!(eval("theta1[0] + 2 * theta2[0]", &env), 11.0);
    }

    #[test]
    fn grammar_violations_name_the_token() {
        let e = Expr::parse("phi[0] + sqrt(2)").unwrap_err();
        assert_eq!(e.token, "sqrt");
        assert_eq!(e.column, 10);
        let e = Expr::parse("foo[1]").unwrap_err();
        assert_eq!(e.token, "foo");
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("phi").is_err());
        assert!(Expr::parse("1 < 2 < 3").is_err());
        assert!(Expr::parse("2 $ 3").unwrap_err().token == "$");
    }

    #[test]
    fn scope_checks_kind_and_dimension() {
        let scope = Scope::new().time().var(VarKind::Phi, 2);
        assert!(Expr::parse_checked("phi[1] + t", &scope).is_ok());
        let e = Expr::parse_checked("phi[2]", &scope).unwrap_err();
        assert!(e.message.contains("out of range"));
        let e = Expr::parse_checked("u0[0]", &scope).unwrap_err();
        assert_eq!(e.token, "u0[0]");
        let scope = Scope::new().games(vec![[1, 1, 1]]);
        assert!(Expr::parse_checked("theta1[0]", &scope).is_ok());
        assert!(Expr::parse_checked("theta2[0]", &scope).is_err());
    }

    #[test]
    fn display_round_trips_through_the_parser() {
        for src in [
            "-(phi[0] - 2) ^ 2 / (1 + eps[0])",
            "theta[0] + 0.001 * other[0]",
            "2 ^ -1",
            "max(1, -t) - (t < 0.5 && t > 0)",
            "1 - (2 - 3)",
        ] {
            let e = Expr::parse(src).unwrap();
            let again = Expr::parse(&e.node_source()).unwrap();
            assert_eq!(e, again, "{src} -> {}", e.node_source());
        }
    }

    #[test]
    fn syntactic_identity_ignores_whitespace() {
        assert_eq!(Expr::parse("theta[0]+omega[0]").unwrap(), Expr::parse(" theta[0] +  omega[0] ").unwrap());
        assert_ne!(Expr::parse("theta[0]+omega[0]").unwrap(), Expr::parse("omega[0]+theta[0]").unwrap());
    }

    impl Expr {
        fn node_source(&self) -> String {
            NodeDisplay(&self.root).to_string()
        }
    }
}
