//! Polynomial recognition for divisor subtrees and their roots.

use num_complex::Complex64;

use super::{BinaryOp, Node, UnaryOp};

/// Divisors of degree above this are not root-isolated.
const MAX_DEGREE: usize = 8;

fn trim(mut p: Vec<Complex64>) -> Vec<Complex64> {
    while p.len() > 1 && p.last().is_some_and(|c| c.norm() == 0.0) {
        p.pop();
    }
    p
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim(out)
}

fn poly_add(a: &[Complex64], b: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = a.len().max(b.len());
    let zero = Complex64::new(0.0, 0.0);
    trim(
        (0..n)
            .map(|k| a.get(k).copied().unwrap_or(zero) + sign * b.get(k).copied().unwrap_or(zero))
            .collect(),
    )
}

/// Coefficients (lowest degree first) when `node` is a polynomial in `z`.
pub(super) fn as_polynomial(node: &Node) -> Option<Vec<Complex64>> {
    let p = match node {
        Node::Const(c) => vec![*c],
        Node::Var => vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        Node::Unary(UnaryOp::Neg, a) => as_polynomial(a)?.into_iter().map(|c| -c).collect(),
        Node::Unary(..) => return None,
        Node::Binary(op, a, b) => {
            let pa = as_polynomial(a)?;
            let pb = as_polynomial(b)?;
            match op {
                BinaryOp::Add => poly_add(&pa, &pb, 1.0),
                BinaryOp::Sub => poly_add(&pa, &pb, -1.0),
                BinaryOp::Mul => poly_mul(&pa, &pb),
                BinaryOp::Div => {
                    if pb.len() != 1 || pb[0].norm() == 0.0 {
                        return None;
                    }
                    pa.into_iter().map(|c| c / pb[0]).collect()
                }
            }
        }
        Node::Pow(a, n) => {
            let pa = as_polynomial(a)?;
            if (pa.len() - 1) * (*n as usize) > MAX_DEGREE {
                return None;
            }
            let mut acc = vec![Complex64::new(1.0, 0.0)];
            for _ in 0..*n {
                acc = poly_mul(&acc, &pa);
            }
            acc
        }
    };
    if p.len() - 1 > MAX_DEGREE {
        return None;
    }
    Some(trim(p))
}

fn horner(p: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut v = Complex64::new(0.0, 0.0);
    let mut d = Complex64::new(0.0, 0.0);
    for c in p.iter().rev() {
        d = d * z + v;
        v = v * z + c;
    }
    (v, d)
}

/// All complex roots of the polynomial with coefficients `coeffs`
/// (lowest degree first). Constant polynomials have no roots.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let p = trim(coeffs.to_vec());
    let deg = p.len() - 1;
    match deg {
        0 => Vec::new(),
        1 => vec![-p[0] / p[1]],
        2 => {
            let (a, b, c) = (p[2], p[1], p[0]);
            let disc = (b * b - 4.0 * a * c).sqrt();
            // pick the sign that avoids cancellation
            let q = if (b.conj() * disc).re >= 0.0 {
                -0.5 * (b + disc)
            } else {
                -0.5 * (b - disc)
            };
            if q.norm() == 0.0 {
                vec![Complex64::new(0.0, 0.0); 2]
            } else {
                vec![q / a, c / q]
            }
        }
        _ => durand_kerner(&p),
    }
}

fn durand_kerner(p: &[Complex64]) -> Vec<Complex64> {
    let deg = p.len() - 1;
    let lead = p[deg];
    let monic: Vec<Complex64> = p.iter().map(|c| c / lead).collect();
    let bound = 1.0
        + monic[..deg]
            .iter()
            .map(|c| c.norm())
            .fold(0.0_f64, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..deg)
        .map(|k| seed.powu(k as u32) * (bound / seed.norm().powi(k as i32)).min(bound))
        .collect();
    for _ in 0..2000 {
        let mut delta = 0.0_f64;
        for i in 0..deg {
            let (v, _) = horner(&monic, roots[i]);
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex64::new(1e-300, 0.0);
            }
            let step = v / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    // Newton polish on the original coefficients.
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let (v, d) = horner(&monic, *r);
            if d.norm() == 0.0 {
                break;
            }
            *r -= v / d;
        }
    }
    roots
}
