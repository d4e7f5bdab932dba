//! Scalar expression DAGs over decision variables.
//!
//! Expressions are immutable, reference-counted trees whose shared subtrees
//! form a DAG. Before evaluation an expression is compiled into a [`Tape`]:
//! a topologically sorted node list over a compact set of local variables.
//! Tapes give values, reverse-mode gradients and exact Hessians computed by
//! forward-over-reverse sweeps, with sparsity patterns that depend only on
//! the structure of the DAG.
//!
//! The operator catalog is closed: `add`, `sub`, `mul`, `div`, `neg`,
//! `square`, `sqrt`, `exp`, `log`, `sin`, `cos`, `powi` and `signed_square`
//! (`x·|x|`).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a decision variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Evaluation outside an operator's domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("log of non-positive argument {0}")]
    Log(f64),
    #[error("sqrt of negative argument {0}")]
    Sqrt(f64),
    #[error("sqrt derivative at zero")]
    SqrtDerivative,
    #[error("division by zero")]
    DivisionByZero,
    #[error("negative integer power of zero")]
    PowZero,
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Square,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    PowInt(i32),
    SignedSquare,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Square => "square",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::PowInt(_) => "powi",
            UnaryOp::SignedSquare => "signed_square",
        }
    }

    fn is_linear(self) -> bool {
        matches!(self, UnaryOp::Neg | UnaryOp::PowInt(0) | UnaryOp::PowInt(1))
    }

    fn apply(self, u: f64) -> Result<f64, DomainError> {
        let y = match self {
            UnaryOp::Neg => -u,
            UnaryOp::Square => u * u,
            UnaryOp::Sqrt => {
                if u < 0.0 {
                    return Err(DomainError::Sqrt(u));
                }
                u.sqrt()
            }
            UnaryOp::Exp => u.exp(),
            UnaryOp::Log => {
                if u <= 0.0 {
                    return Err(DomainError::Log(u));
                }
                u.ln()
            }
            UnaryOp::Sin => u.sin(),
            UnaryOp::Cos => u.cos(),
            UnaryOp::PowInt(n) => {
                if n < 0 && u == 0.0 {
                    return Err(DomainError::PowZero);
                }
                u.powi(n)
            }
            UnaryOp::SignedSquare => u * u.abs(),
        };
        if y.is_finite() {
            Ok(y)
        } else {
            Err(DomainError::NonFinite(self.name()))
        }
    }

    /// First and second derivative at `u`, given the value `y = op(u)`.
    fn derivatives(self, u: f64, y: f64) -> Result<(f64, f64), DomainError> {
        Ok(match self {
            UnaryOp::Neg => (-1.0, 0.0),
            UnaryOp::Square => (2.0 * u, 2.0),
            UnaryOp::Sqrt => {
                if y == 0.0 {
                    return Err(DomainError::SqrtDerivative);
                }
                (0.5 / y, -0.25 / (y * u))
            }
            UnaryOp::Exp => (y, y),
            UnaryOp::Log => (1.0 / u, -1.0 / (u * u)),
            UnaryOp::Sin => (u.cos(), -y),
            UnaryOp::Cos => (-u.sin(), -y),
            UnaryOp::PowInt(0) => (0.0, 0.0),
            UnaryOp::PowInt(1) => (1.0, 0.0),
            UnaryOp::PowInt(n) => {
                let nf = f64::from(n);
                (nf * u.powi(n - 1), nf * (nf - 1.0) * u.powi(n - 2))
            }
            // second derivative at exactly zero is defined as 0
            UnaryOp::SignedSquare => (2.0 * u.abs(), 2.0 * signum0(u)),
        })
    }
}

fn signum0(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    fn apply(self, u: f64, w: f64) -> Result<f64, DomainError> {
        let y = match self {
            BinaryOp::Add => u + w,
            BinaryOp::Sub => u - w,
            BinaryOp::Mul => u * w,
            BinaryOp::Div => {
                if w == 0.0 {
                    return Err(DomainError::DivisionByZero);
                }
                u / w
            }
        };
        if y.is_finite() {
            Ok(y)
        } else {
            Err(DomainError::NonFinite(self.name()))
        }
    }

    /// `(g_u, g_w, g_uu, g_uw, g_ww)` at `(u, w)`.
    fn partials(self, u: f64, w: f64) -> [f64; 5] {
        match self {
            BinaryOp::Add => [1.0, 1.0, 0.0, 0.0, 0.0],
            BinaryOp::Sub => [1.0, -1.0, 0.0, 0.0, 0.0],
            BinaryOp::Mul => [w, u, 0.0, 1.0, 0.0],
            BinaryOp::Div => {
                let inv = 1.0 / w;
                let inv2 = inv * inv;
                [inv, -u * inv2, 0.0, -inv2, 2.0 * u * inv2 * inv]
            }
        }
    }
}

#[derive(Debug)]
enum Node {
    Const(f64),
    Var(VarId),
    Unary(UnaryOp, Expr),
    Binary(BinaryOp, Expr, Expr),
}

/// Borrowed view of an expression's root node.
#[derive(Debug, Clone, Copy)]
pub enum ExprKind<'a> {
    Const(f64),
    Var(VarId),
    Unary(UnaryOp, &'a Expr),
    Binary(BinaryOp, &'a Expr, &'a Expr),
}

/// Immutable scalar expression. Cloning shares the underlying DAG.
#[derive(Clone, Debug)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr(Arc::new(Node::Const(value)))
    }

    pub fn var(id: VarId) -> Self {
        Expr(Arc::new(Node::Var(id)))
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Self {
        Expr(Arc::new(Node::Unary(op, arg)))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr(Arc::new(Node::Binary(op, lhs, rhs)))
    }

    pub fn kind(&self) -> ExprKind<'_> {
        match &*self.0 {
            Node::Const(c) => ExprKind::Const(*c),
            Node::Var(v) => ExprKind::Var(*v),
            Node::Unary(op, a) => ExprKind::Unary(*op, a),
            Node::Binary(op, a, b) => ExprKind::Binary(*op, a, b),
        }
    }

    pub fn square(&self) -> Self {
        Self::unary(UnaryOp::Square, self.clone())
    }

    pub fn sqrt(&self) -> Self {
        Self::unary(UnaryOp::Sqrt, self.clone())
    }

    pub fn exp(&self) -> Self {
        Self::unary(UnaryOp::Exp, self.clone())
    }

    pub fn ln(&self) -> Self {
        Self::unary(UnaryOp::Log, self.clone())
    }

    pub fn sin(&self) -> Self {
        Self::unary(UnaryOp::Sin, self.clone())
    }

    pub fn cos(&self) -> Self {
        Self::unary(UnaryOp::Cos, self.clone())
    }

    pub fn powi(&self, n: i32) -> Self {
        Self::unary(UnaryOp::PowInt(n), self.clone())
    }

    /// `x·|x|`.
    pub fn signed_square(&self) -> Self {
        Self::unary(UnaryOp::SignedSquare, self.clone())
    }

    /// Balanced sum of the terms; an empty sum is the constant 0.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Self {
        let mut level: Vec<Expr> = terms.into_iter().collect();
        if level.is_empty() {
            return Expr::constant(0.0);
        }
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            let mut it = level.into_iter();
            while let Some(a) = it.next() {
                match it.next() {
                    Some(b) => next.push(a + b),
                    None => next.push(a),
                }
            }
            level = next;
        }
        level.pop().unwrap()
    }

    /// Distinct variables referenced by the expression, sorted.
    pub fn variables(&self) -> Vec<VarId> {
        let mut seen = BTreeSet::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if !visited.insert(Arc::as_ptr(&e.0)) {
                continue;
            }
            match &*e.0 {
                Node::Const(_) => {}
                Node::Var(v) => {
                    seen.insert(*v);
                }
                Node::Unary(_, a) => stack.push(a),
                Node::Binary(_, a, b) => {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Prefix (s-expression) rendering, e.g. `(add (mul 2.0 x0) (sin x1))`.
    pub fn to_prefix(&self) -> String {
        let mut out = String::new();
        write_prefix(self, &mut out);
        out
    }

    pub fn parse_prefix(src: &str) -> Result<Expr, ParseExprError> {
        let tokens = tokenize(src);
        let mut pos = 0;
        let e = parse_tokens(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(ParseExprError(format!("trailing input at token {pos}")));
        }
        Ok(e)
    }
}

fn write_prefix(e: &Expr, out: &mut String) {
    use std::fmt::Write;
    match e.kind() {
        ExprKind::Const(c) => {
            let _ = write!(out, "{c:?}");
        }
        ExprKind::Var(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Unary(UnaryOp::PowInt(n), a) => {
            let _ = write!(out, "(powi {n} ");
            write_prefix(a, out);
            out.push(')');
        }
        ExprKind::Unary(op, a) => {
            out.push('(');
            out.push_str(op.name());
            out.push(' ');
            write_prefix(a, out);
            out.push(')');
        }
        ExprKind::Binary(op, a, b) => {
            out.push('(');
            out.push_str(op.name());
            out.push(' ');
            write_prefix(a, out);
            out.push(' ');
            write_prefix(b, out);
            out.push(')');
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("malformed expression: {0}")]
pub struct ParseExprError(pub String);

fn tokenize(src: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in src.char_indices() {
        match ch {
            '(' | ')' => {
                if let Some(s) = start.take() {
                    tokens.push(&src[s..i]);
                }
                tokens.push(&src[i..i + 1]);
            }
            c if c.is_whitespace() => {
                if let Some(s) = start.take() {
                    tokens.push(&src[s..i]);
                }
            }
            _ => {
                if start.is_none() {
                    start = Some(i);
                }
            }
        }
    }
    if let Some(s) = start {
        tokens.push(&src[s..]);
    }
    tokens
}

fn parse_tokens(tokens: &[&str], pos: &mut usize) -> Result<Expr, ParseExprError> {
    let tok = *tokens
        .get(*pos)
        .ok_or_else(|| ParseExprError("unexpected end of input".into()))?;
    *pos += 1;
    if tok == "(" {
        let op = *tokens
            .get(*pos)
            .ok_or_else(|| ParseExprError("missing operator".into()))?;
        *pos += 1;
        let e = match op {
            "add" | "sub" | "mul" | "div" => {
                let a = parse_tokens(tokens, pos)?;
                let b = parse_tokens(tokens, pos)?;
                let bop = match op {
                    "add" => BinaryOp::Add,
                    "sub" => BinaryOp::Sub,
                    "mul" => BinaryOp::Mul,
                    _ => BinaryOp::Div,
                };
                Expr::binary(bop, a, b)
            }
            "powi" => {
                let n = tokens
                    .get(*pos)
                    .and_then(|t| t.parse::<i32>().ok())
                    .ok_or_else(|| ParseExprError("powi needs an integer exponent".into()))?;
                *pos += 1;
                Expr::unary(UnaryOp::PowInt(n), parse_tokens(tokens, pos)?)
            }
            name => {
                let uop = match name {
                    "neg" => UnaryOp::Neg,
                    "square" => UnaryOp::Square,
                    "sqrt" => UnaryOp::Sqrt,
                    "exp" => UnaryOp::Exp,
                    "log" => UnaryOp::Log,
                    "sin" => UnaryOp::Sin,
                    "cos" => UnaryOp::Cos,
                    "signed_square" => UnaryOp::SignedSquare,
                    other => return Err(ParseExprError(format!("unknown operator `{other}`"))),
                };
                Expr::unary(uop, parse_tokens(tokens, pos)?)
            }
        };
        if tokens.get(*pos) != Some(&")") {
            return Err(ParseExprError(format!("expected `)` after `{op}`")));
        }
        *pos += 1;
        Ok(e)
    } else if let Some(idx) = tok.strip_prefix('x') {
        idx.parse::<usize>()
            .map(|i| Expr::var(VarId(i)))
            .map_err(|_| ParseExprError(format!("bad variable `{tok}`")))
    } else {
        let c: f64 = tok
            .parse()
            .map_err(|_| ParseExprError(format!("bad token `{tok}`")))?;
        if !c.is_finite() {
            return Err(ParseExprError(format!("non-finite constant `{tok}`")));
        }
        Ok(Expr::constant(c))
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

impl From<VarId> for Expr {
    fn from(v: VarId) -> Self {
        Expr::var(v)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl $trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, self, rhs.clone())
            }
        }
        impl $trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self.clone(), rhs)
            }
        }
        impl $trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, self.clone(), rhs.clone())
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::constant(rhs))
            }
        }
        impl $trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self.clone(), Expr::constant(rhs))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::constant(self), rhs)
            }
        }
        impl $trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, Expr::constant(self), rhs.clone())
            }
        }
    };
}

impl_binop!(Add, add, BinaryOp::Add);
impl_binop!(Sub, sub, BinaryOp::Sub);
impl_binop!(Mul, mul, BinaryOp::Mul);
impl_binop!(Div, div, BinaryOp::Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self)
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self.clone())
    }
}

#[derive(Clone, Copy, Debug)]
enum TapeOp {
    Const(f64),
    Var(u32),
    Unary(UnaryOp, u32),
    Binary(BinaryOp, u32, u32),
}

/// Compiled, topologically ordered form of an expression.
///
/// Local variable `k` of the tape reads `x[columns()[k]]` from the point
/// handed to the evaluation routines. Columns are sorted ascending.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<TapeOp>,
    columns: Vec<usize>,
    /// Lower-triangle local pairs `(i, j)`, `i >= j`, sorted.
    hess_pairs: Vec<(u32, u32)>,
    /// Local variables that appear in at least one Hessian pair.
    active: Vec<u32>,
    /// Tape position of each local variable's node.
    var_nodes: Vec<u32>,
}

impl Tape {
    /// Compiles `expr`, mapping every variable to a column of the point.
    pub fn compile(expr: &Expr, column_of: impl Fn(VarId) -> usize) -> Tape {
        // postorder DFS with DAG sharing keyed by node address
        let mut index: HashMap<*const Node, u32> = HashMap::new();
        let mut ops: Vec<TapeOp> = Vec::new();
        let mut var_local: HashMap<usize, u32> = HashMap::new();
        let mut raw_columns: Vec<usize> = Vec::new();
        let mut var_nodes: Vec<u32> = Vec::new();

        let mut stack: Vec<(&Expr, bool)> = vec![(expr, false)];
        while let Some((e, expanded)) = stack.pop() {
            let key = Arc::as_ptr(&e.0);
            if index.contains_key(&key) {
                continue;
            }
            if !expanded {
                stack.push((e, true));
                match &*e.0 {
                    Node::Unary(_, a) => stack.push((a, false)),
                    Node::Binary(_, a, b) => {
                        stack.push((b, false));
                        stack.push((a, false));
                    }
                    _ => {}
                }
                continue;
            }
            let op = match &*e.0 {
                Node::Const(c) => TapeOp::Const(*c),
                Node::Var(v) => {
                    let col = column_of(*v);
                    if let Some(&existing) = var_local.get(&col) {
                        // two distinct Var nodes for the same column: alias to one
                        index.insert(key, var_nodes[existing as usize]);
                        continue;
                    }
                    let local = raw_columns.len() as u32;
                    var_local.insert(col, local);
                    raw_columns.push(col);
                    var_nodes.push(ops.len() as u32);
                    TapeOp::Var(local)
                }
                Node::Unary(op, a) => TapeOp::Unary(*op, index[&Arc::as_ptr(&a.0)]),
                Node::Binary(op, a, b) => {
                    TapeOp::Binary(*op, index[&Arc::as_ptr(&a.0)], index[&Arc::as_ptr(&b.0)])
                }
            };
            index.insert(key, ops.len() as u32);
            ops.push(op);
        }

        // renumber locals so that columns are ascending
        let mut order: Vec<u32> = (0..raw_columns.len() as u32).collect();
        order.sort_by_key(|&l| raw_columns[l as usize]);
        let mut renumber = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            renumber[old as usize] = new as u32;
        }
        let columns: Vec<usize> = order.iter().map(|&l| raw_columns[l as usize]).collect();
        let mut sorted_var_nodes = vec![0u32; order.len()];
        for op in ops.iter_mut() {
            if let TapeOp::Var(l) = op {
                *l = renumber[*l as usize];
            }
        }
        for (old, &node) in var_nodes.iter().enumerate() {
            sorted_var_nodes[renumber[old] as usize] = node;
        }

        let hess_pairs = structural_hessian(&ops);
        let active: Vec<u32> = hess_pairs
            .iter()
            .flat_map(|&(i, j)| [i, j])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();

        Tape {
            ops,
            columns,
            hess_pairs,
            active,
            var_nodes: sorted_var_nodes,
        }
    }

    /// Compiles with `VarId(i)` reading column `i`.
    pub fn compile_identity(expr: &Expr) -> Tape {
        Self::compile(expr, |v| v.0)
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Lower-triangle Hessian pattern as column indices `(row, col)`,
    /// `row >= col`, ordered by `(row, col)`.
    pub fn hessian_pattern(&self) -> Vec<(usize, usize)> {
        self.hess_pairs
            .iter()
            .map(|&(i, j)| (self.columns[i as usize], self.columns[j as usize]))
            .collect()
    }

    pub fn hessian_nnz(&self) -> usize {
        self.hess_pairs.len()
    }

    pub fn eval(&self, x: &[f64], ws: &mut DerivativeWorkspace) -> Result<f64, DomainError> {
        ws.prepare(self.ops.len(), self.columns.len());
        self.forward(x, &mut ws.val)?;
        Ok(ws.val[self.ops.len() - 1])
    }

    fn forward(&self, x: &[f64], val: &mut [f64]) -> Result<(), DomainError> {
        for (k, op) in self.ops.iter().enumerate() {
            val[k] = match *op {
                TapeOp::Const(c) => c,
                TapeOp::Var(l) => x[self.columns[l as usize]],
                TapeOp::Unary(uop, a) => uop.apply(val[a as usize])?,
                TapeOp::Binary(bop, a, b) => bop.apply(val[a as usize], val[b as usize])?,
            };
        }
        Ok(())
    }

    /// Reverse sweep filling `ws.adj`; requires a prior forward pass.
    fn reverse(&self, ws: &mut DerivativeWorkspace) -> Result<(), DomainError> {
        let n = self.ops.len();
        ws.adj[..n].fill(0.0);
        ws.adj[n - 1] = 1.0;
        for k in (0..n).rev() {
            let a_y = ws.adj[k];
            if a_y == 0.0 {
                continue;
            }
            match self.ops[k] {
                TapeOp::Const(_) | TapeOp::Var(_) => {}
                TapeOp::Unary(op, a) => {
                    let (d1, _) = op.derivatives(ws.val[a as usize], ws.val[k])?;
                    ws.adj[a as usize] += a_y * d1;
                }
                TapeOp::Binary(op, a, b) => {
                    let [gu, gw, ..] = op.partials(ws.val[a as usize], ws.val[b as usize]);
                    ws.adj[a as usize] += a_y * gu;
                    ws.adj[b as usize] += a_y * gw;
                }
            }
        }
        Ok(())
    }

    /// Value and gradient; `grad` is aligned with [`Tape::columns`].
    pub fn gradient(
        &self,
        x: &[f64],
        ws: &mut DerivativeWorkspace,
        grad: &mut [f64],
    ) -> Result<f64, DomainError> {
        ws.prepare(self.ops.len(), self.columns.len());
        self.forward(x, &mut ws.val)?;
        self.reverse(ws)?;
        for (g, &node) in grad.iter_mut().zip(&self.var_nodes) {
            *g = ws.adj[node as usize];
        }
        Ok(ws.val[self.ops.len() - 1])
    }

    /// `scale·∇²expr` on the lower-triangle pattern; `out` is aligned with
    /// [`Tape::hessian_pattern`].
    pub fn hessian(
        &self,
        x: &[f64],
        scale: f64,
        ws: &mut DerivativeWorkspace,
        out: &mut [f64],
    ) -> Result<(), DomainError> {
        if self.hess_pairs.is_empty() {
            return Ok(());
        }
        let n = self.ops.len();
        let nv = self.columns.len();
        ws.prepare(n, nv);
        self.forward(x, &mut ws.val)?;
        self.reverse(ws)?;
        for &dir in &self.active {
            // tangent along local variable `dir`
            for k in 0..n {
                ws.dot[k] = match self.ops[k] {
                    TapeOp::Const(_) => 0.0,
                    TapeOp::Var(l) => {
                        if l == dir {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    TapeOp::Unary(op, a) => {
                        let (d1, _) = op.derivatives(ws.val[a as usize], ws.val[k])?;
                        d1 * ws.dot[a as usize]
                    }
                    TapeOp::Binary(op, a, b) => {
                        let [gu, gw, ..] = op.partials(ws.val[a as usize], ws.val[b as usize]);
                        gu * ws.dot[a as usize] + gw * ws.dot[b as usize]
                    }
                };
            }
            ws.adj_dot[..n].fill(0.0);
            for k in (0..n).rev() {
                let a_y = ws.adj[k];
                let ad_y = ws.adj_dot[k];
                match self.ops[k] {
                    TapeOp::Const(_) | TapeOp::Var(_) => {}
                    TapeOp::Unary(op, a) => {
                        let (d1, d2) = op.derivatives(ws.val[a as usize], ws.val[k])?;
                        ws.adj_dot[a as usize] += ad_y * d1 + a_y * d2 * ws.dot[a as usize];
                    }
                    TapeOp::Binary(op, a, b) => {
                        let [gu, gw, guu, guw, gww] =
                            op.partials(ws.val[a as usize], ws.val[b as usize]);
                        let (tu, tw) = (ws.dot[a as usize], ws.dot[b as usize]);
                        ws.adj_dot[a as usize] += ad_y * gu + a_y * (guu * tu + guw * tw);
                        ws.adj_dot[b as usize] += ad_y * gw + a_y * (guw * tu + gww * tw);
                    }
                }
            }
            for (l, &node) in self.var_nodes.iter().enumerate() {
                ws.col[l] = ws.adj_dot[node as usize];
            }
            // pairs are sorted by row, so scan for entries in column `dir`
            for (p, &(i, j)) in self.hess_pairs.iter().enumerate() {
                if j == dir {
                    out[p] = scale * ws.col[i as usize];
                }
            }
        }
        Ok(())
    }
}

/// Conservative structural second-order pattern of a tape.
fn structural_hessian(ops: &[TapeOp]) -> Vec<(u32, u32)> {
    let mut deps: Vec<Vec<u32>> = Vec::with_capacity(ops.len());
    let mut pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
    let add_cross = |pairs: &mut BTreeSet<(u32, u32)>, a: &[u32], b: &[u32]| {
        for &i in a {
            for &j in b {
                pairs.insert((i.max(j), i.min(j)));
            }
        }
    };
    for op in ops {
        let d = match *op {
            TapeOp::Const(_) => Vec::new(),
            TapeOp::Var(l) => vec![l],
            TapeOp::Unary(uop, a) => {
                let da = &deps[a as usize];
                if !uop.is_linear() {
                    add_cross(&mut pairs, da, da);
                }
                da.clone()
            }
            TapeOp::Binary(bop, a, b) => {
                let (da, db) = (&deps[a as usize], &deps[b as usize]);
                match bop {
                    BinaryOp::Add | BinaryOp::Sub => {}
                    BinaryOp::Mul => add_cross(&mut pairs, da, db),
                    BinaryOp::Div => {
                        add_cross(&mut pairs, da, db);
                        add_cross(&mut pairs, db, db);
                    }
                }
                let mut merged: Vec<u32> = da.iter().chain(db.iter()).copied().collect();
                merged.sort_unstable();
                merged.dedup();
                merged
            }
        };
        deps.push(d);
    }
    pairs.into_iter().collect()
}

/// Caller-owned scratch buffers for tape evaluation.
#[derive(Clone, Debug, Default)]
pub struct DerivativeWorkspace {
    val: Vec<f64>,
    dot: Vec<f64>,
    adj: Vec<f64>,
    adj_dot: Vec<f64>,
    col: Vec<f64>,
}

impl DerivativeWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, nodes: usize, vars: usize) {
        if self.val.len() < nodes {
            self.val.resize(nodes, 0.0);
            self.dot.resize(nodes, 0.0);
            self.adj.resize(nodes, 0.0);
            self.adj_dot.resize(nodes, 0.0);
        }
        if self.col.len() < vars {
            self.col.resize(vars, 0.0);
        }
    }
}

/// Sparse gradient: strictly increasing indices with matching values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// Evaluates `expr` with `VarId(i)` bound to `point[i]`.
pub fn eval(expr: &Expr, point: &[f64]) -> Result<f64, DomainError> {
    Tape::compile_identity(expr).eval(point, &mut DerivativeWorkspace::new())
}

pub fn gradient(expr: &Expr, point: &[f64]) -> Result<SparseVector, DomainError> {
    let tape = Tape::compile_identity(expr);
    let mut values = vec![0.0; tape.columns().len()];
    tape.gradient(point, &mut DerivativeWorkspace::new(), &mut values)?;
    Ok(SparseVector {
        indices: tape.columns().to_vec(),
        values,
    })
}

/// Lower-triangle triplets `(row, col, value)` of `scale·∇²expr`.
pub fn hessian(expr: &Expr, point: &[f64], scale: f64) -> Result<Vec<(usize, usize, f64)>, DomainError> {
    let tape = Tape::compile_identity(expr);
    let mut values = vec![0.0; tape.hessian_nnz()];
    tape.hessian(point, scale, &mut DerivativeWorkspace::new(), &mut values)?;
    Ok(tape
        .hessian_pattern()
        .into_iter()
        .zip(values)
        .map(|((i, j), v)| (i, j, v))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::var(VarId(i))
    }

    #[test]
    fn signed_square_value_gradient_hessian() {
        let e = x(0).signed_square();
        assert_eq!(eval(&e, &[-3.0]).unwrap(), -9.0);
        assert_eq!(gradient(&e, &[-3.0]).unwrap().values, vec![6.0]);
        assert_eq!(hessian(&e, &[-3.0], 1.0).unwrap(), vec![(0, 0, -2.0)]);
        assert_eq!(eval(&e, &[0.0]).unwrap(), 0.0);
        assert_eq!(gradient(&e, &[0.0]).unwrap().values, vec![0.0]);
        assert_eq!(hessian(&e, &[0.0], 1.0).unwrap(), vec![(0, 0, 0.0)]);
    }

    #[test]
    fn shared_workspace_after_longer_tape() {
        let long = Tape::compile_identity(&(x(0).exp() * x(1).sin() + x(0).square()));
        let short = Tape::compile_identity(&(3.0 * x(0)));
        let mut ws = DerivativeWorkspace::new();
        long.eval(&[0.5, 1.0], &mut ws).unwrap();
        assert_eq!(short.eval(&[2.0], &mut ws).unwrap(), 6.0);
        let mut g = [0.0];
        long.eval(&[0.5, 1.0], &mut ws).unwrap();
        assert_eq!(short.gradient(&[2.0], &mut ws, &mut g).unwrap(), 6.0);
        assert_eq!(g, [3.0]);
    }

    #[test]
    fn trig_identity() {
        let e = x(0).sin().square() + x(0).cos().square();
        assert!((eval(&e, &[0.7]).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn barrier_term_arithmetic() {
        let mu = 0.1;
        let e = x(0).square() - mu * x(0).ln();
        let v = eval(&e, &[2.0]).unwrap();
        assert!((v - (4.0 - 0.1 * 2f64.ln())).abs() < 1e-15);
        assert!((v - 3.930685).abs() < 1e-6);
    }

    #[test]
    fn product_rule() {
        let e = x(0) * x(1);
        let g = gradient(&e, &[2.0, 5.0]).unwrap();
        assert_eq!(g.indices, vec![0, 1]);
        assert_eq!(g.values, vec![5.0, 2.0]);
    }

    #[test]
    fn square_hessian() {
        assert_eq!(hessian(&x(0).square(), &[1.3], 1.0).unwrap(), vec![(0, 0, 2.0)]);
        assert_eq!(hessian(&x(0).square(), &[1.3], 0.5).unwrap(), vec![(0, 0, 1.0)]);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(eval(&x(0).ln(), &[0.0]), Err(DomainError::Log(_))));
        assert!(matches!(eval(&x(0).ln(), &[-1.0]), Err(DomainError::Log(_))));
        assert!(matches!(eval(&x(0).sqrt(), &[-1.0]), Err(DomainError::Sqrt(_))));
        assert_eq!(eval(&x(0).sqrt(), &[0.0]).unwrap(), 0.0);
        assert!(gradient(&x(0).sqrt(), &[0.0]).is_err());
        assert_eq!(eval(&(1.0 / x(0)), &[0.0]), Err(DomainError::DivisionByZero));
        assert_eq!(eval(&x(0).powi(-2), &[0.0]), Err(DomainError::PowZero));
        assert!(matches!(eval(&x(0).exp(), &[1000.0]), Err(DomainError::NonFinite(_))));
    }

    #[test]
    fn shared_subexpressions_are_compiled_once() {
        let s = x(0) * x(1);
        let e = &s + &s.sin() + s.square();
        let tape = Tape::compile_identity(&e);
        // x0, x1, mul, sin, add, square, add
        assert_eq!(tape.len(), 7);
        let v = tape.eval(&[0.5, 2.0], &mut DerivativeWorkspace::new()).unwrap();
        assert!((v - (1.0 + 1f64.sin() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn duplicate_var_nodes_alias() {
        // two separately constructed references to the same variable
        let e = x(3) * x(3);
        let tape = Tape::compile_identity(&e);
        assert_eq!(tape.columns(), &[3]);
        let mut h = vec![0.0; tape.hessian_nnz()];
        tape.hessian(&[0.0, 0.0, 0.0, 1.5], 1.0, &mut DerivativeWorkspace::new(), &mut h)
            .unwrap();
        assert_eq!(tape.hessian_pattern(), vec![(3, 3)]);
        assert_eq!(h, vec![2.0]);
    }

    #[test]
    fn linear_expressions_have_empty_hessian() {
        let e = 3.0 * x(0) - x(1) + x(2) * 2.0 - (-x(0));
        assert!(Tape::compile_identity(&e).hessian_pattern().is_empty());
    }

    #[test]
    fn mixed_pattern_is_lower_and_sorted() {
        let e = x(2) * x(0) + x(1).exp();
        let pat = Tape::compile_identity(&e).hessian_pattern();
        assert_eq!(pat, vec![(1, 1), (2, 0)]);
    }

    #[test]
    fn prefix_round_trip() {
        let e = (x(0) * 2.5 + x(1).signed_square()).powi(3) / (x(2).exp() - 0.1) - x(4).ln().sqrt();
        let s = e.to_prefix();
        let back = Expr::parse_prefix(&s).unwrap();
        assert_eq!(back.to_prefix(), s);
        let p = [0.3, -0.7, 0.2, 0.0, 3.0];
        assert_eq!(eval(&e, &p).unwrap(), eval(&back, &p).unwrap());
    }

    #[test]
    fn prefix_rejects_garbage() {
        assert!(Expr::parse_prefix("(foo x1)").is_err());
        assert!(Expr::parse_prefix("(add x1)").is_err());
        assert!(Expr::parse_prefix("(neg x1) 3").is_err());
        assert!(Expr::parse_prefix("inf").is_err());
    }

    #[test]
    fn balanced_sum() {
        let e = Expr::sum((0..10).map(x));
        let p: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(eval(&e, &p).unwrap(), 45.0);
        assert_eq!(eval(&Expr::sum(Vec::new()), &[]).unwrap(), 0.0);
    }
}
