//! Deterministic point sets.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::mapfn::Disc;

/// Radical inverse of `index` in `base` (van der Corput).
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// The `index`-th point of an area-uniform Halton set in `disc`.
/// Index 0 is the center.
pub fn halton_disc_point(disc: &Disc, index: u64) -> Complex64 {
    let u = radical_inverse(index, 2);
    let v = radical_inverse(index, 3);
    disc.center + Complex64::from_polar(disc.radius * u.sqrt(), TAU * v)
}

pub fn halton_disc(disc: &Disc, count: usize) -> Vec<Complex64> {
    (0..count as u64).map(|i| halton_disc_point(disc, i)).collect()
}

/// Points of a `grid` x `grid` lattice on the bounding square of `disc` that
/// lie in the closed disc, in row-major order.
pub fn square_lattice_in_disc(disc: &Disc, grid: usize) -> Vec<Complex64> {
    let n = grid.max(2);
    let mut out = Vec::with_capacity(n * n);
    for iy in 0..n {
        let y = -1.0 + 2.0 * iy as f64 / (n - 1) as f64;
        for ix in 0..n {
            let x = -1.0 + 2.0 * ix as f64 / (n - 1) as f64;
            if x * x + y * y <= 1.0 + 1e-12 {
                out.push(disc.center + disc.radius * Complex64::new(x, y));
            }
        }
    }
    out
}
