//! Expression trees for the analytic parts of a harmonic map.
//!
//! Sources follow a small grammar built from `z`, `i`, decimal literals,
//! `+ - * /`, non-negative integer powers and `exp`, `sin`, `cos`. Trees are
//! immutable once built; every divisor whose zeros can be located (polynomial
//! divisors) contributes to the declared singularity set, and evaluation near
//! one of those points is an error rather than a non-finite value.

mod diff;
mod parser;
mod poly;

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use parser::parse;
pub use poly::polynomial_roots;

/// Distance below which an evaluation point counts as hitting a singularity.
pub const SINGULARITY_TOLERANCE: f64 = 1e-9;
/// Magnitude above which a value is reported as an overflow.
pub const OVERFLOW_GUARD: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(Complex64),
    Var,
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub singularity_tolerance: f64,
    pub overflow_guard: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            singularity_tolerance: SINGULARITY_TOLERANCE,
            overflow_guard: OVERFLOW_GUARD,
        }
    }
}

/// An analytic function of `z` together with the poles its divisors produce.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexExpr {
    root: Node,
    singularities: Vec<Complex64>,
}

impl ComplexExpr {
    /// Wraps a tree and locates the zeros of its polynomial divisors.
    pub fn new(root: Node) -> Self {
        let mut singularities = Vec::new();
        collect_divisor_zeros(&root, &mut singularities);
        Self {
            root,
            singularities,
        }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(Node::Const(c))
    }

    pub fn variable() -> Self {
        Self::new(Node::Var)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn singularities(&self) -> &[Complex64] {
        &self.singularities
    }

    /// Adds points the builder could not locate itself.
    pub fn with_singularities(mut self, extra: &[Complex64]) -> Self {
        for &s in extra {
            push_unique(&mut self.singularities, s);
        }
        self
    }

    /// True when the tree is a constant expression (no `z` anywhere).
    pub fn is_constant(&self) -> bool {
        !contains_var(&self.root)
    }

    pub fn differentiate(&self, order: u32) -> ComplexExpr {
        let mut node = self.root.clone();
        for _ in 0..order {
            node = diff::derivative(&node);
        }
        ComplexExpr {
            root: node,
            singularities: self.singularities.clone(),
        }
    }

    /// Substitutes `offset + scale * z` for `z`; singularities move with it.
    pub fn compose_affine(&self, offset: Complex64, scale: Complex64) -> ComplexExpr {
        let inner = diff::add(Node::Const(offset), diff::mul(Node::Const(scale), Node::Var));
        let root = substitute(&self.root, &inner);
        let mut out = ComplexExpr::new(root);
        for &s in &self.singularities {
            push_unique(&mut out.singularities, (s - offset) / scale);
        }
        out
    }

    pub fn evaluate(&self, z: Complex64) -> Result<Complex64> {
        self.evaluate_with(z, &EvalOptions::default())
    }

    pub fn evaluate_with(&self, z: Complex64, opts: &EvalOptions) -> Result<Complex64> {
        for &s in &self.singularities {
            if (z - s).norm() <= opts.singularity_tolerance {
                return Err(Error::Singularity {
                    point: z,
                    singularity: s,
                });
            }
        }
        let v = eval_node(&self.root, z)?;
        if !v.re.is_finite() || !v.im.is_finite() || v.norm() > opts.overflow_guard {
            return Err(Error::Overflow { point: z });
        }
        Ok(v)
    }
}

impl fmt::Display for ComplexExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl std::str::FromStr for ComplexExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

fn eval_node(node: &Node, z: Complex64) -> Result<Complex64> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var => z,
        Node::Unary(op, a) => {
            let a = eval_node(a, z)?;
            match op {
                UnaryOp::Neg => -a,
                UnaryOp::Exp => a.exp(),
                UnaryOp::Sin => a.sin(),
                UnaryOp::Cos => a.cos(),
            }
        }
        Node::Binary(op, a, b) => {
            let a = eval_node(a, z)?;
            let b = eval_node(b, z)?;
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b.re == 0.0 && b.im == 0.0 {
                        return Err(Error::Singularity {
                            point: z,
                            singularity: z,
                        });
                    }
                    a / b
                }
            }
        }
        Node::Pow(a, n) => eval_node(a, z)?.powu(*n),
    })
}

fn contains_var(node: &Node) -> bool {
    match node {
        Node::Const(_) => false,
        Node::Var => true,
        Node::Unary(_, a) | Node::Pow(a, _) => contains_var(a),
        Node::Binary(_, a, b) => contains_var(a) || contains_var(b),
    }
}

fn substitute(node: &Node, inner: &Node) -> Node {
    match node {
        Node::Const(c) => Node::Const(*c),
        Node::Var => inner.clone(),
        Node::Unary(op, a) => Node::Unary(*op, Box::new(substitute(a, inner))),
        Node::Binary(op, a, b) => Node::Binary(
            *op,
            Box::new(substitute(a, inner)),
            Box::new(substitute(b, inner)),
        ),
        Node::Pow(a, n) => Node::Pow(Box::new(substitute(a, inner)), *n),
    }
}

fn collect_divisor_zeros(node: &Node, out: &mut Vec<Complex64>) {
    match node {
        Node::Const(_) | Node::Var => {}
        Node::Unary(_, a) | Node::Pow(a, _) => collect_divisor_zeros(a, out),
        Node::Binary(op, a, b) => {
            collect_divisor_zeros(a, out);
            collect_divisor_zeros(b, out);
            if *op == BinaryOp::Div {
                if let Some(coeffs) = poly::as_polynomial(b) {
                    for r in polynomial_roots(&coeffs) {
                        push_unique(out, r);
                    }
                }
            }
        }
    }
}

fn push_unique(list: &mut Vec<Complex64>, p: Complex64) {
    if !list.iter().any(|q| (q - p).norm() <= 1e-12 * (1.0 + p.norm())) {
        list.push(p);
    }
}

fn write_real(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    if x == 0.0 {
        write!(f, "0")
    } else if x < 0.0 {
        write!(f, "(-{})", -x)
    } else {
        write!(f, "{x}")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => {
                if c.im == 0.0 {
                    write_real(f, c.re)
                } else if c.re == 0.0 && c.im == 1.0 {
                    write!(f, "i")
                } else if c.re == 0.0 {
                    write!(f, "(")?;
                    write_real(f, c.im)?;
                    write!(f, "*i)")
                } else {
                    write!(f, "(")?;
                    write_real(f, c.re)?;
                    write!(f, "+")?;
                    write_real(f, c.im)?;
                    write!(f, "*i)")
                }
            }
            Node::Var => write!(f, "z"),
            Node::Unary(UnaryOp::Neg, a) => write!(f, "(-({a}))"),
            Node::Unary(UnaryOp::Exp, a) => write!(f, "exp({a})"),
            Node::Unary(UnaryOp::Sin, a) => write!(f, "sin({a})"),
            Node::Unary(UnaryOp::Cos, a) => write!(f, "cos({a})"),
            Node::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => '+',
                    BinaryOp::Sub => '-',
                    BinaryOp::Mul => '*',
                    BinaryOp::Div => '/',
                };
                write!(f, "({a}{sym}{b})")
            }
            Node::Pow(a, n) => write!(f, "(({a})^{n})"),
        }
    }
}
