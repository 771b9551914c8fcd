//! Preimages of a value under a harmonic map: boundary winding numbers on
//! square cells, quadtree subdivision and Newton on the real 2x2 system.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapfn::{Disc, HarmonicMap};

pub const BOUNDARY_CLEARANCE: f64 = 1e-7;
pub const MIN_SAMPLES: usize = 64;
pub const MAX_DOUBLINGS: u32 = 12;
/// Cells are subdivided down to this half-width before Newton runs.
pub const MIN_HALF_WIDTH: f64 = 1e-3;
/// Cells holding several roots may be split down to this half-width.
pub const FLOOR_HALF_WIDTH: f64 = 1e-7;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const MULTIPLICITY_TOL: f64 = 1e-6;
const MAX_NEWTON_STEPS: usize = 200;
const MAX_CELLS: usize = 200_000;
const ENLARGEMENTS: [f64; 4] = [1.0, 1.01, 1.02, 1.03];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub center: Complex64,
    pub half_width: f64,
}

impl Cell {
    pub fn new(center: Complex64, half_width: f64) -> Result<Self> {
        if half_width > 0.0 && half_width.is_finite() {
            Ok(Self { center, half_width })
        } else {
            Err(Error::Precondition(format!("cell half-width must be positive, got {half_width}")))
        }
    }

    /// Quadrants in the order SW, SE, NW, NE.
    pub fn children(&self) -> [Cell; 4] {
        let q = 0.5 * self.half_width;
        [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)].map(|(sx, sy)| Cell {
            center: self.center + Complex64::new(sx * q, sy * q),
            half_width: q,
        })
    }

    pub fn scaled(&self, factor: f64) -> Cell {
        Cell {
            center: self.center,
            half_width: self.half_width * factor,
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let d = z - self.center;
        d.re.abs() <= self.half_width && d.im.abs() <= self.half_width
    }

    fn meets_disc(&self, disc: &Disc) -> bool {
        let d = disc.center - self.center;
        let dx = (d.re.abs() - self.half_width).max(0.0);
        let dy = (d.im.abs() - self.half_width).max(0.0);
        dx.hypot(dy) <= disc.radius
    }

    /// Counterclockwise boundary point for `t` in `[0, 4)`, starting at the
    /// SW corner.
    fn boundary_point(&self, t: f64) -> Complex64 {
        let side = (t.floor() as usize).min(3);
        let s = 2.0 * (t - side as f64) - 1.0;
        let (x, y) = match side {
            0 => (s, -1.0),
            1 => (1.0, s),
            2 => (-s, 1.0),
            _ => (-1.0, -s),
        };
        self.center + self.half_width * Complex64::new(x, y)
    }
}

/// Winding number of `f - a` along a closed curve given by `curve(t)`,
/// `t` in `[0, 1)`, with sample doubling until two estimates agree.
fn winding_number<C>(m: &HarmonicMap, a: Complex64, curve: C, samples: usize) -> Result<i64>
where
    C: Fn(f64) -> Complex64,
{
    let mut n = samples.max(MIN_SAMPLES);
    let mut previous: Option<i64> = None;
    for _ in 0..=MAX_DOUBLINGS {
        let mut values = Vec::with_capacity(n);
        for k in 0..n {
            let z = curve(k as f64 / n as f64);
            let v = m.eval(z)? - a;
            if v.norm() <= BOUNDARY_CLEARANCE {
                return Err(Error::BoundaryZero { point: z });
            }
            values.push(v);
        }
        let mut total = 0.0;
        let mut max_step: f64 = 0.0;
        let mut worst = 0;
        for k in 0..n {
            let step = (values[(k + 1) % n] / values[k]).arg();
            if step.abs() > max_step {
                max_step = step.abs();
                worst = k;
            }
            total += step;
        }
        if max_step >= FRAC_PI_2 {
            let (t, v) = segment_minimum(m, a, &curve, worst as f64 / n as f64, (worst + 1) as f64 / n as f64)?;
            if v <= BOUNDARY_CLEARANCE {
                return Err(Error::BoundaryZero { point: curve(t) });
            }
        }
        let estimate = (total / TAU).round() as i64;
        if previous == Some(estimate) && max_step < FRAC_PI_2 {
            return Ok(estimate);
        }
        previous = Some(estimate);
        n *= 2;
    }
    Err(Error::NonConvergence {
        doublings: MAX_DOUBLINGS,
    })
}

/// Golden-section search for the smallest `|f - a|` on `curve([t0, t1])`.
fn segment_minimum<C>(m: &HarmonicMap, a: Complex64, curve: &C, t0: f64, t1: f64) -> Result<(f64, f64)>
where
    C: Fn(f64) -> Complex64,
{
    const INV_PHI: f64 = 0.618_033_988_749_895;
    let dist = |t: f64| -> Result<f64> { Ok((m.eval(curve(t))? - a).norm()) };
    let (mut lo, mut hi) = (t0, t1);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (dist(x1)?, dist(x2)?);
    for _ in 0..60 {
        if f1 <= BOUNDARY_CLEARANCE {
            return Ok((x1, f1));
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = dist(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = dist(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

/// Winding number of `f - a` around the square boundary of `cell`.
pub fn boundary_degree(m: &HarmonicMap, a: Complex64, cell: &Cell, samples: usize) -> Result<i64> {
    winding_number(m, a, |t| cell.boundary_point(4.0 * t), samples)
}

/// Winding number of `f - a` around the circle bounding `disc`.
pub fn circle_degree(m: &HarmonicMap, a: Complex64, disc: &Disc, samples: usize) -> Result<i64> {
    winding_number(m, a, |t| disc.center + Complex64::from_polar(disc.radius, TAU * t), samples)
}

/// Real Jacobian of `(x, y) -> (Re f, Im f)`, rows `(d/dx, d/dy)` of `Re f`
/// then `Im f`. Its determinant is `|h'|^2 - |g'|^2`.
pub fn real_jacobian(m: &HarmonicMap, z: Complex64) -> Result<[[f64; 2]; 2]> {
    let (dh, dg) = m.first_derivatives(z)?;
    let fx = dh + dg.conj();
    let fy = Complex64::i() * (dh - dg.conj());
    Ok([[fx.re, fy.re], [fx.im, fy.im]])
}

pub fn determinant(j: &[[f64; 2]; 2]) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Newton iteration on the real system `f(x + iy) - a = 0`.
pub fn newton_real(m: &HarmonicMap, a: Complex64, start: Complex64) -> Result<Complex64> {
    let mut z = start;
    for _ in 0..MAX_NEWTON_STEPS {
        let r = m.eval(z)? - a;
        if r.norm() == 0.0 {
            break;
        }
        let j = real_jacobian(m, z)?;
        let det = determinant(&j);
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = (j[1][1] * r.re - j[0][1] * r.im) / det;
        let dy = (j[0][0] * r.im - j[1][0] * r.re) / det;
        let step = Complex64::new(dx, dy);
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        z -= step;
        if step.norm() <= 1e-15 * z.norm().max(1.0) {
            break;
        }
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Multiplicity {
    One,
    Two,
    AtLeastThree,
}

impl Multiplicity {
    pub fn at_least(self) -> u32 {
        match self {
            Multiplicity::One => 1,
            Multiplicity::Two => 2,
            Multiplicity::AtLeastThree => 3,
        }
    }
}

impl fmt::Display for Multiplicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Multiplicity::One => "1",
            Multiplicity::Two => "2",
            Multiplicity::AtLeastThree => "atleast3",
        })
    }
}

impl Serialize for Multiplicity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Derivative-vanishing classification: 1 if `|h'| + |g'| > tol1`, else 2
/// if `|h''| + |g''| > tol2`, else at least 3.
pub fn multiplicity_at(m: &HarmonicMap, root: Complex64, tol1: f64, tol2: f64) -> Result<Multiplicity> {
    let (dh, dg) = m.first_derivatives(root)?;
    if dh.norm() + dg.norm() > tol1 {
        return Ok(Multiplicity::One);
    }
    let (d2h, d2g) = m.second_derivatives(root)?;
    if d2h.norm() + d2g.norm() > tol2 {
        Ok(Multiplicity::Two)
    } else {
        Ok(Multiplicity::AtLeastThree)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root {
    pub location: Complex64,
    pub multiplicity: Multiplicity,
    pub residual: f64,
    /// Winding number on a small cell around the root; `None` when it could
    /// not be computed.
    pub local_degree: Option<i64>,
    pub jacobian: f64,
}

impl Root {
    /// Derivative class and local degree disagree.
    pub fn mismatch(&self) -> bool {
        self.local_degree.is_some_and(|d| {
            let by_degree = match d.unsigned_abs() {
                0 | 1 => Multiplicity::One,
                2 => Multiplicity::Two,
                _ => Multiplicity::AtLeastThree,
            };
            by_degree != self.multiplicity
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreimageSet {
    pub target: Complex64,
    pub region: Disc,
    pub tol: f64,
    pub roots: Vec<Root>,
    /// Cells left undecided (singularities, boundary zeros, cell budget).
    pub unresolved: Vec<Cell>,
    /// Roots within the boundary clearance of the region, not listed.
    pub excluded_near_boundary: usize,
    /// Winding number around the region's circle, when computable.
    pub region_degree: Option<i64>,
    /// Sum of local degrees equals `region_degree`, when both are known.
    pub degree_consistent: Option<bool>,
    /// Roots whose derivative class disagrees with their local degree.
    pub multiplicity_mismatches: usize,
}

impl PreimageSet {
    pub fn is_resolved(&self) -> bool {
        self.unresolved.is_empty()
    }
}

enum Outcome {
    Drop,
    Split([Cell; 4]),
    Root(Complex64),
    RootAndSplit(Complex64, [Cell; 4]),
    Unresolved(Cell),
}

fn subdivide_or_give_up(cell: Cell, floor: f64) -> Outcome {
    if cell.half_width > floor {
        Outcome::Split(cell.children())
    } else {
        Outcome::Unresolved(cell)
    }
}

fn process_cell(m: &HarmonicMap, a: Complex64, region: &Disc, cell: Cell, tol: f64) -> Result<Outcome> {
    if !cell.meets_disc(region) {
        return Ok(Outcome::Drop);
    }
    let mut found = None;
    let mut witness = None;
    for factor in ENLARGEMENTS {
        let trial = cell.scaled(factor);
        match boundary_degree(m, a, &trial, MIN_SAMPLES) {
            Ok(d) => {
                found = Some((trial, d));
                break;
            }
            Err(Error::BoundaryZero { point }) => witness = Some(point),
            Err(Error::Singularity { .. } | Error::Overflow { .. } | Error::NonConvergence { .. }) => {
                return Ok(subdivide_or_give_up(cell, MIN_HALF_WIDTH));
            }
            Err(e) => return Err(e),
        }
    }
    let Some((used, degree)) = found else {
        // a root sits on every trial boundary; polish it from the witness
        if let Some(z) = witness.and_then(|p| converged_root(m, a, p, tol)) {
            return Ok(if cell.half_width > MIN_HALF_WIDTH {
                Outcome::RootAndSplit(z, cell.children())
            } else {
                Outcome::Root(z)
            });
        }
        return Ok(subdivide_or_give_up(cell, MIN_HALF_WIDTH));
    };
    if degree == 0 {
        return Ok(Outcome::Drop);
    }
    if used.half_width > MIN_HALF_WIDTH {
        return Ok(Outcome::Split(used.children()));
    }
    let z = match newton_real(m, a, used.center) {
        Ok(z) => z,
        Err(Error::Singularity { .. } | Error::Overflow { .. }) => {
            return Ok(subdivide_or_give_up(used, FLOOR_HALF_WIDTH));
        }
        Err(e) => return Err(e),
    };
    let near = used.scaled(2.0).contains(z);
    let residual = m.eval(z).map(|v| (v - a).norm()).unwrap_or(f64::INFINITY);
    if !(near && residual <= tol) {
        return Ok(subdivide_or_give_up(used, FLOOR_HALF_WIDTH));
    }
    if degree.unsigned_abs() >= 2
        && used.half_width > FLOOR_HALF_WIDTH
        && multiplicity_at(m, z, MULTIPLICITY_TOL, MULTIPLICITY_TOL)? == Multiplicity::One
    {
        return Ok(Outcome::Split(used.children()));
    }
    Ok(Outcome::Root(z))
}

fn converged_root(m: &HarmonicMap, a: Complex64, start: Complex64, tol: f64) -> Option<Complex64> {
    let z = newton_real(m, a, start).ok()?;
    let residual = (m.eval(z).ok()? - a).norm();
    (residual <= tol).then_some(z)
}

/// Local degree on a cell of half-width `min(separation/4, 0.05)`.
fn local_degree(m: &HarmonicMap, a: Complex64, z: Complex64, separation: f64) -> Option<i64> {
    let hw = (0.25 * separation).min(0.05);
    let cell = Cell::new(z, hw).ok()?;
    boundary_degree(m, a, &cell, MIN_SAMPLES).ok()
}

/// All solutions of `f(z) = a` in `region` that the quadtree can isolate.
pub fn find_preimages(m: &HarmonicMap, a: Complex64, region: &Disc, tol: f64) -> Result<PreimageSet> {
    if region.radius.is_nan() || region.radius <= 0.0 {
        return Err(Error::Precondition("region radius must be positive".into()));
    }
    if m.is_constant() {
        let value = m.eval(region.center)?;
        if (value - a).norm() <= BOUNDARY_CLEARANCE {
            return Err(Error::Degenerate(format!("constant map equals the target {a} everywhere")));
        }
        return Ok(PreimageSet {
            target: a,
            region: *region,
            tol,
            roots: Vec::new(),
            unresolved: Vec::new(),
            excluded_near_boundary: 0,
            region_degree: Some(0),
            degree_consistent: Some(true),
            multiplicity_mismatches: 0,
        });
    }
    let mut level = vec![Cell::new(region.center, region.radius)?];
    let mut raw: Vec<Complex64> = Vec::new();
    let mut unresolved = Vec::new();
    let mut processed = 0usize;
    while !level.is_empty() {
        if processed + level.len() > MAX_CELLS {
            unresolved.extend(level);
            break;
        }
        processed += level.len();
        let outcomes = level
            .par_iter()
            .map(|&cell| process_cell(m, a, region, cell, tol))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::new();
        for outcome in outcomes {
            match outcome {
                Outcome::Drop => {}
                Outcome::Split(children) => next.extend(children),
                Outcome::Root(z) => raw.push(z),
                Outcome::RootAndSplit(z, children) => {
                    raw.push(z);
                    next.extend(children);
                }
                Outcome::Unresolved(c) => unresolved.push(c),
            }
        }
        level = next;
    }

    let mut kept: Vec<Complex64> = Vec::new();
    let mut excluded_near_boundary = 0;
    for z in raw {
        if kept.iter().any(|k| (k - z).norm() <= 10.0 * tol) {
            continue;
        }
        let d = (z - region.center).norm();
        if d > region.radius {
            continue;
        }
        if region.radius - d <= BOUNDARY_CLEARANCE {
            excluded_near_boundary += 1;
            continue;
        }
        kept.push(z);
    }

    let roots = kept
        .iter()
        .enumerate()
        .map(|(i, &z)| -> Result<Root> {
            let separation = kept
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, w)| (w - z).norm())
                .fold(f64::INFINITY, f64::min);
            Ok(Root {
                location: z,
                multiplicity: multiplicity_at(m, z, MULTIPLICITY_TOL, MULTIPLICITY_TOL)?,
                residual: (m.eval(z)? - a).norm(),
                local_degree: local_degree(m, a, z, separation),
                jacobian: m.jacobian(z)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let region_degree = circle_degree(m, a, region, 256).ok();
    let local_sum: Option<i64> = roots.iter().map(|r| r.local_degree).sum();
    let degree_consistent = match (region_degree, local_sum) {
        (Some(d), Some(s)) if unresolved.is_empty() && excluded_near_boundary == 0 => Some(d == s),
        _ => None,
    };
    let multiplicity_mismatches = roots.iter().filter(|r| r.mismatch()).count();
    Ok(PreimageSet {
        target: a,
        region: *region,
        tol,
        roots,
        unresolved,
        excluded_near_boundary,
        region_degree,
        degree_consistent,
        multiplicity_mismatches,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    AllMultiple,
    AllAtleast3,
}

impl ScanMode {
    fn required(self) -> Multiplicity {
        match self {
            ScanMode::AllMultiple => Multiplicity::Two,
            ScanMode::AllAtleast3 => Multiplicity::AtLeastThree,
        }
    }

    /// Largest hit count the mode admits.
    pub fn bound(self) -> usize {
        match self {
            ScanMode::AllMultiple => 4,
            ScanMode::AllAtleast3 => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub mode: ScanMode,
    pub region: Disc,
    pub hits: Vec<Complex64>,
    pub count: usize,
    pub bound: usize,
    /// Candidates whose preimage search left unresolved cells.
    pub excluded: Vec<Complex64>,
}

/// Values `a` whose preimages in `region` are nonempty and all multiple
/// (or all of order at least three).
pub fn exceptional_value_scan(
    m: &HarmonicMap,
    candidates: &[Complex64],
    region: &Disc,
    mode: ScanMode,
) -> Result<ScanReport> {
    let mut hits = Vec::new();
    let mut excluded = Vec::new();
    for &a in candidates {
        let set = find_preimages(m, a, region, DEFAULT_TOL)?;
        if !set.is_resolved() {
            excluded.push(a);
            continue;
        }
        if !set.roots.is_empty() && set.roots.iter().all(|r| r.multiplicity >= mode.required()) {
            hits.push(a);
        }
    }
    Ok(ScanReport {
        mode,
        region: *region,
        count: hits.len(),
        hits,
        bound: mode.bound(),
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterTrace {
    pub zero: Complex64,
    /// Distance from `zero` to the nearest zero of each map; `None` if the
    /// map has no zero in the region.
    pub distances: Vec<Option<f64>>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    pub traces: Vec<ClusterTrace>,
    pub passed: bool,
    /// First limit zero whose trace fails.
    pub witness: Option<Complex64>,
}

/// For each zero of `limit - a` in `region`, the distance to the nearest zero
/// of each `maps[n] - a`; passes when every trace is finite and nonincreasing.
pub fn cluster_check(maps: &[HarmonicMap], limit: &HarmonicMap, a: Complex64, region: &Disc) -> Result<ClusterReport> {
    let limit_zeros = find_preimages(limit, a, region, DEFAULT_TOL)?;
    let per_map: Vec<Vec<Complex64>> = maps
        .iter()
        .map(|f| find_preimages(f, a, region, DEFAULT_TOL).map(|s| s.roots.iter().map(|r| r.location).collect()))
        .collect::<Result<_>>()?;
    let traces: Vec<ClusterTrace> = limit_zeros
        .roots
        .iter()
        .map(|r| {
            let distances: Vec<Option<f64>> = per_map
                .iter()
                .map(|zs| zs.iter().map(|z| (z - r.location).norm()).reduce(f64::min))
                .collect();
            let passed = distances.iter().all(Option::is_some)
                && distances.windows(2).all(|p| p[1] <= p[0]);
            ClusterTrace {
                zero: r.location,
                distances,
                passed,
            }
        })
        .collect();
    let witness = traces.iter().find(|t| !t.passed).map(|t| t.zero);
    Ok(ClusterReport {
        passed: witness.is_none(),
        traces,
        witness,
    })
}

/// CSV rows `a_re,a_im,root_re,root_im,multiplicity,residual,local_degree`.
pub fn write_preimages_csv<W: Write>(sets: &[PreimageSet], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::MapFile(format!("csv write failed: {e}"));
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["a_re", "a_im", "root_re", "root_im", "multiplicity", "residual", "local_degree"])
        .map_err(io)?;
    for set in sets {
        for r in &set.roots {
            wtr.write_record([
                set.target.re.to_string(),
                set.target.im.to_string(),
                r.location.re.to_string(),
                r.location.im.to_string(),
                r.multiplicity.to_string(),
                r.residual.to_string(),
                r.local_degree.map(|d| d.to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
    }
    wtr.flush().map_err(|e| Error::MapFile(format!("csv write failed: {e}")))?;
    Ok(())
}
