//! Lower-bound estimates of `sup f#/phi` on closed sub-discs and the
//! growth classification built on them.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapfn::{Disc, HarmonicMap};
use crate::phi::PhiWeight;
use crate::sampling;

/// Fitted slopes above this count as growth.
pub const GROWTH_SLOPE_THRESHOLD: f64 = 0.25;
/// Final sup within this factor of the recent median counts as bounded.
pub const BOUNDED_RATIO_THRESHOLD: f64 = 1.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SupOptions {
    /// Radial levels of the initial polar grid.
    pub radial: usize,
    /// Angular nodes of the initial polar grid.
    pub angular: usize,
    /// Fraction of cells subdivided per refinement round.
    pub refine_fraction: f64,
    /// Extra points evaluated up front (ignored outside the disc).
    pub seeds: Vec<Complex64>,
}

impl Default for SupOptions {
    fn default() -> Self {
        Self {
            radial: 64,
            angular: 256,
            refine_fraction: 0.05,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEstimate {
    pub radius: f64,
    pub value: f64,
    pub argmax: Complex64,
    pub refinement_depth: usize,
    pub evaluations: usize,
    /// Samples dropped near singularities.
    pub skipped: usize,
    pub overflow_count: usize,
    pub overflow_witness: Option<Complex64>,
}

impl SupEstimate {
    pub fn overflowed(&self) -> bool {
        self.overflow_count > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EvidenceKind {
    BoundedEvidence,
    GrowthEvidence,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityVerdict {
    pub kind: EvidenceKind,
    pub sup_trace: Vec<SupEstimate>,
    /// Least-squares slope of `log sup` against `-log(1 - r)`.
    pub growth_exponent: Option<f64>,
    pub overflow_witnessed: bool,
    pub growth_slope_threshold: f64,
    pub bounded_ratio_threshold: f64,
}

#[derive(Debug, Clone, Copy)]
enum Sample {
    Value(f64),
    Skipped,
    Overflow,
}

impl Sample {
    fn score(self) -> f64 {
        match self {
            Sample::Value(v) => v,
            Sample::Overflow => f64::INFINITY,
            Sample::Skipped => f64::NEG_INFINITY,
        }
    }
}

fn ratio_at(m: &HarmonicMap, w: &PhiWeight, z: Complex64) -> Sample {
    let fsharp = match m.spherical_derivative(z) {
        Ok(v) => v,
        Err(Error::Overflow { .. }) => return Sample::Overflow,
        Err(_) => return Sample::Skipped,
    };
    match w.eval(z.norm()) {
        Ok(p) if fsharp.is_finite() => Sample::Value(fsharp / p),
        Ok(_) => Sample::Overflow,
        Err(_) => Sample::Skipped,
    }
}

/// Point at polar coordinates, pulled inside `|z| <= limit` if rounding
/// pushed it out.
fn polar_point(r: f64, theta: f64, limit: f64) -> Complex64 {
    let mut z = Complex64::from_polar(r, theta);
    while z.norm() > limit {
        z *= 1.0 - f64::EPSILON;
    }
    z
}

/// Midpoint in `log(1 - r)`, so refinement keeps clustering toward the rim.
fn radial_mid(r0: f64, r1: f64) -> f64 {
    let m = 1.0 - ((1.0 - r0) * (1.0 - r1)).sqrt();
    m.clamp(r0, r1)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    r: [f64; 2],
    t: [f64; 2],
    /// Corner scores at (r0,t0), (r0,t1), (r1,t0), (r1,t1).
    corners: [f64; 4],
}

impl Cell {
    fn score(&self) -> f64 {
        self.corners.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Tracker {
    best: f64,
    argmax: Complex64,
    evaluations: usize,
    skipped: usize,
    overflow_count: usize,
    overflow_witness: Option<Complex64>,
}

impl Tracker {
    /// Sequential reduction in input order; ties keep the earlier point.
    fn absorb(&mut self, points: &[Complex64], samples: &[Sample]) {
        for (&z, &s) in points.iter().zip(samples) {
            self.evaluations += 1;
            match s {
                Sample::Value(v) => {
                    if v > self.best {
                        self.best = v;
                        self.argmax = z;
                    }
                }
                Sample::Skipped => self.skipped += 1,
                Sample::Overflow => {
                    self.overflow_count += 1;
                    self.overflow_witness.get_or_insert(z);
                }
            }
        }
    }
}

fn evaluate_all(m: &HarmonicMap, w: &PhiWeight, points: &[Complex64]) -> Vec<Sample> {
    points.par_iter().map(|&z| ratio_at(m, w, z)).collect()
}

/// `sup_{|z| <= radius} f#(z)/phi(|z|)` with the default grid.
pub fn sup_ratio(m: &HarmonicMap, w: &PhiWeight, radius: f64, depth: usize) -> Result<SupEstimate> {
    sup_ratio_with(m, w, radius, depth, &SupOptions::default())
}

/// Lower bound for the sup. Starts from a polar grid with radial levels
/// `r_k = 1 - (1 - radius)^(k/K)` and subdivides the top fraction of cells
/// (scored by their corner maxima) `depth` times.
pub fn sup_ratio_with(
    m: &HarmonicMap,
    w: &PhiWeight,
    radius: f64,
    depth: usize,
    opts: &SupOptions,
) -> Result<SupEstimate> {
    if !(0.0..1.0).contains(&radius) {
        return Err(Error::Domain(format!("sup radius {radius} outside [0, 1)")));
    }
    if opts.radial == 0 || opts.angular < 3 || !(opts.refine_fraction > 0.0 && opts.refine_fraction <= 1.0) {
        return Err(Error::Precondition("sup grid needs radial >= 1, angular >= 3 and a fraction in (0, 1]".into()));
    }
    let kk = opts.radial;
    let nn = opts.angular;
    let radii: Vec<f64> = (0..=kk)
        .map(|k| {
            if k == kk {
                radius
            } else {
                1.0 - (1.0 - radius).powf(k as f64 / kk as f64)
            }
        })
        .collect();
    let thetas: Vec<f64> = (0..=nn).map(|j| TAU * j as f64 / nn as f64).collect();

    let mut tracker = Tracker {
        best: f64::NEG_INFINITY,
        argmax: Complex64::new(0.0, 0.0),
        evaluations: 0,
        skipped: 0,
        overflow_count: 0,
        overflow_witness: None,
    };

    let mut initial: Vec<Complex64> = opts.seeds.iter().copied().filter(|s| s.norm() <= radius).collect();
    let seed_count = initial.len();
    initial.push(Complex64::new(0.0, 0.0));
    for &r in &radii[1..] {
        for &t in &thetas[..nn] {
            initial.push(polar_point(r, t, radius));
        }
    }
    let samples = evaluate_all(m, w, &initial);
    tracker.absorb(&initial, &samples);

    // node (k, j) -> score; level 0 is the center for every angle
    let grid = &samples[seed_count..];
    let node = |k: usize, j: usize| -> f64 {
        if k == 0 {
            grid[0].score()
        } else {
            grid[1 + (k - 1) * nn + (j % nn)].score()
        }
    };
    let mut cells: Vec<Cell> = Vec::with_capacity(kk * nn);
    for k in 0..kk {
        for j in 0..nn {
            cells.push(Cell {
                r: [radii[k], radii[k + 1]],
                t: [thetas[j], thetas[j + 1]],
                corners: [node(k, j), node(k, j + 1), node(k + 1, j), node(k + 1, j + 1)],
            });
        }
    }

    for _ in 0..depth {
        let take = ((cells.len() as f64 * opts.refine_fraction).ceil() as usize).clamp(1, cells.len());
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by(|&a, &b| cells[b].score().total_cmp(&cells[a].score()).then(a.cmp(&b)));
        let mut chosen = order[..take].to_vec();
        chosen.sort_unstable();

        let mut points = Vec::with_capacity(5 * take);
        for &ci in &chosen {
            let c = cells[ci];
            let rm = radial_mid(c.r[0], c.r[1]);
            let tm = 0.5 * (c.t[0] + c.t[1]);
            for (r, t) in [(rm, c.t[0]), (rm, c.t[1]), (c.r[0], tm), (c.r[1], tm), (rm, tm)] {
                points.push(polar_point(r, t, radius));
            }
        }
        let fresh = evaluate_all(m, w, &points);
        tracker.absorb(&points, &fresh);

        let mut next = Vec::with_capacity(cells.len() + 3 * take);
        let mut chosen_iter = chosen.iter().enumerate().peekable();
        for (ci, &c) in cells.iter().enumerate() {
            let Some(&(slot, _)) = chosen_iter.peek().filter(|(_, &idx)| idx == ci) else {
                next.push(c);
                continue;
            };
            chosen_iter.next();
            let s: Vec<f64> = fresh[5 * slot..5 * slot + 5].iter().map(|x| x.score()).collect();
            let rm = radial_mid(c.r[0], c.r[1]);
            let tm = 0.5 * (c.t[0] + c.t[1]);
            let [a, b, cc, d] = c.corners;
            next.push(Cell { r: [c.r[0], rm], t: [c.t[0], tm], corners: [a, s[2], s[0], s[4]] });
            next.push(Cell { r: [c.r[0], rm], t: [tm, c.t[1]], corners: [s[2], b, s[4], s[1]] });
            next.push(Cell { r: [rm, c.r[1]], t: [c.t[0], tm], corners: [s[0], s[4], cc, s[3]] });
            next.push(Cell { r: [rm, c.r[1]], t: [tm, c.t[1]], corners: [s[4], s[1], s[3], d] });
        }
        cells = next;
    }

    let value = if tracker.best.is_finite() { tracker.best.max(0.0) } else { 0.0 };
    Ok(SupEstimate {
        radius,
        value,
        argmax: tracker.argmax,
        refinement_depth: depth,
        evaluations: tracker.evaluations,
        skipped: tracker.skipped,
        overflow_count: tracker.overflow_count,
        overflow_witness: tracker.overflow_witness,
    })
}

/// `sup (1 - |z|^2) f#(z)` on `|z| <= radius`.
pub fn classical_normal_sup(m: &HarmonicMap, radius: f64, depth: usize) -> Result<SupEstimate> {
    sup_ratio(m, &PhiWeight::Classical, radius, depth)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `y` on `x`; `None` for fewer than two points or
/// a degenerate abscissa.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Growth slope over the last half of a `(radius, sup)` trace.
pub fn trace_growth_exponent(radii: &[f64], sups: &[f64]) -> Option<f64> {
    let n = radii.len();
    let start = n - (n.div_ceil(2)).max(2).min(n);
    let (x, y): (Vec<f64>, Vec<f64>) = radii[start..]
        .iter()
        .zip(&sups[start..])
        .filter(|(_, &s)| s > 0.0 && s.is_finite())
        .map(|(&r, &s)| (-(1.0 - r).ln(), s.ln()))
        .unzip();
    least_squares_slope(&x, &y)
}

/// Evidence classification shared by the normality and point-criterion
/// traces.
pub fn classify_trace(radii: &[f64], sups: &[f64], overflow: bool) -> (EvidenceKind, Option<f64>) {
    let slope = trace_growth_exponent(radii, sups);
    if overflow || slope.is_some_and(|s| s > GROWTH_SLOPE_THRESHOLD) {
        return (EvidenceKind::GrowthEvidence, slope);
    }
    let Some(&last) = sups.last() else {
        return (EvidenceKind::Inconclusive, slope);
    };
    let recent = &sups[sups.len().saturating_sub(3)..];
    if last <= BOUNDED_RATIO_THRESHOLD * median(recent) {
        (EvidenceKind::BoundedEvidence, slope)
    } else {
        (EvidenceKind::Inconclusive, slope)
    }
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Precondition("empty radius schedule".into()));
    }
    let ok = schedule.iter().all(|r| (0.0..1.0).contains(r)) && schedule.windows(2).all(|p| p[1] > p[0]);
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition("schedule must be strictly increasing inside [0, 1)".into()))
    }
}

/// Sup estimates along `schedule`, each seeded with the previous argmax so
/// the trace is nondecreasing.
pub fn sup_trace(m: &HarmonicMap, w: &PhiWeight, schedule: &[f64], depth: usize) -> Result<Vec<SupEstimate>> {
    validate_schedule(schedule)?;
    let mut trace: Vec<SupEstimate> = Vec::with_capacity(schedule.len());
    for &r in schedule {
        let opts = SupOptions {
            seeds: trace.last().map(|e| vec![e.argmax]).unwrap_or_default(),
            ..SupOptions::default()
        };
        trace.push(sup_ratio_with(m, w, r, depth, &opts)?);
    }
    Ok(trace)
}

pub fn classify_normality(m: &HarmonicMap, w: &PhiWeight, schedule: &[f64], depth: usize) -> Result<NormalityVerdict> {
    let trace = sup_trace(m, w, schedule, depth)?;
    let sups: Vec<f64> = trace.iter().map(|e| e.value).collect();
    let overflow = trace.iter().any(SupEstimate::overflowed);
    let (kind, growth_exponent) = classify_trace(schedule, &sups, overflow);
    Ok(NormalityVerdict {
        kind,
        sup_trace: trace,
        growth_exponent,
        overflow_witnessed: overflow,
        growth_slope_threshold: GROWTH_SLOPE_THRESHOLD,
        bounded_ratio_threshold: BOUNDED_RATIO_THRESHOLD,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartyEntry {
    pub label: String,
    pub max_fsharp: f64,
    pub overflow: bool,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartyReport {
    pub compact: Disc,
    pub samples: usize,
    /// `None` when some map overflowed on the compact disc.
    pub uniform_bound: Option<f64>,
    pub per_map: Vec<MartyEntry>,
}

/// Max of `f#` over a Halton sample of `compact`, per map and overall.
pub fn marty_family_check(family: &[HarmonicMap], compact: &Disc, samples: usize) -> MartyReport {
    let points = sampling::halton_disc(compact, samples);
    let per_map: Vec<MartyEntry> = family
        .iter()
        .map(|m| {
            let values: Vec<Result<f64>> = points.par_iter().map(|&z| m.spherical_derivative(z)).collect();
            let mut entry = MartyEntry {
                label: m.label().to_string(),
                max_fsharp: 0.0,
                overflow: false,
                skipped: 0,
            };
            for v in values {
                match v {
                    Ok(x) if x.is_finite() => entry.max_fsharp = entry.max_fsharp.max(x),
                    Ok(_) | Err(Error::Overflow { .. }) => entry.overflow = true,
                    Err(_) => entry.skipped += 1,
                }
            }
            entry
        })
        .collect();
    let uniform_bound = if per_map.iter().any(|e| e.overflow) {
        None
    } else {
        Some(per_map.iter().map(|e| e.max_fsharp).fold(0.0, f64::max))
    };
    MartyReport {
        compact: *compact,
        samples,
        uniform_bound,
        per_map,
    }
}

/// CSV rows `radius,value,argmax_re,argmax_im,evaluations`.
pub fn write_trace_csv<W: Write>(trace: &[SupEstimate], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::MapFile(format!("csv write failed: {e}"));
    wtr.write_record(["radius", "value", "argmax_re", "argmax_im", "evaluations"]).map_err(io)?;
    for e in trace {
        wtr.write_record([
            e.radius.to_string(),
            e.value.to_string(),
            e.argmax.re.to_string(),
            e.argmax.im.to_string(),
            e.evaluations.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::MapFile(format!("csv write failed: {e}")))?;
    Ok(())
}
