//! Symbolic differentiation with light algebraic folding.

use num_complex::Complex64;

use super::{BinaryOp, Node, UnaryOp};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn as_const(n: &Node) -> Option<Complex64> {
    match n {
        Node::Const(c) => Some(*c),
        _ => None,
    }
}

fn is_const(n: &Node, v: Complex64) -> bool {
    as_const(n) == Some(v)
}

pub(super) fn neg(a: Node) -> Node {
    match a {
        Node::Const(c) => Node::Const(-c),
        Node::Unary(UnaryOp::Neg, inner) => *inner,
        other => Node::Unary(UnaryOp::Neg, Box::new(other)),
    }
}

pub(super) fn add(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Node::Const(x + y),
        (Some(x), _) if x == ZERO => b,
        (_, Some(y)) if y == ZERO => a,
        _ => Node::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
    }
}

pub(super) fn sub(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Node::Const(x - y),
        (Some(x), _) if x == ZERO => neg(b),
        (_, Some(y)) if y == ZERO => a,
        _ => Node::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub(super) fn mul(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Node::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == ZERO => Node::Const(ZERO),
        (Some(x), _) if x == ONE => b,
        (_, Some(y)) if y == ONE => a,
        _ => Node::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub(super) fn div(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) if y != ZERO => Node::Const(x / y),
        (Some(x), _) if x == ZERO => Node::Const(ZERO),
        (_, Some(y)) if y == ONE => a,
        _ => Node::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
    }
}

pub(super) fn pow(a: Node, n: u32) -> Node {
    match (n, as_const(&a)) {
        (0, _) => Node::Const(ONE),
        (1, _) => a,
        (_, Some(c)) => Node::Const(c.powu(n)),
        _ => Node::Pow(Box::new(a), n),
    }
}

/// d/dz of `node`.
pub(super) fn derivative(node: &Node) -> Node {
    match node {
        Node::Const(_) => Node::Const(ZERO),
        Node::Var => Node::Const(ONE),
        Node::Unary(op, a) => {
            let da = derivative(a);
            if is_const(&da, ZERO) {
                return Node::Const(ZERO);
            }
            let a = (**a).clone();
            match op {
                UnaryOp::Neg => neg(da),
                UnaryOp::Exp => mul(Node::Unary(UnaryOp::Exp, Box::new(a)), da),
                UnaryOp::Sin => mul(Node::Unary(UnaryOp::Cos, Box::new(a)), da),
                UnaryOp::Cos => neg(mul(Node::Unary(UnaryOp::Sin, Box::new(a)), da)),
            }
        }
        Node::Binary(op, a, b) => {
            let da = derivative(a);
            let db = derivative(b);
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => add(da, db),
                BinaryOp::Sub => sub(da, db),
                BinaryOp::Mul => add(mul(da, b.clone()), mul(a, db)),
                BinaryOp::Div => {
                    if is_const(&db, ZERO) {
                        return div(da, b);
                    }
                    let numer = sub(mul(da, b.clone()), mul(a, db));
                    div(numer, pow(b, 2))
                }
            }
        }
        Node::Pow(a, n) => {
            if *n == 0 {
                return Node::Const(ZERO);
            }
            let da = derivative(a);
            let coeff = Node::Const(Complex64::new(f64::from(*n), 0.0));
            mul(mul(coeff, pow((**a).clone(), n - 1)), da)
        }
    }
}
