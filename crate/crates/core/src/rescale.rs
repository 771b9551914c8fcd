//! Rescaling sequences `g_n(zeta) = f(z_n + rho_n zeta / phi(|z_n|))` and
//! convergence probes on them.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapfn::{Disc, HarmonicMap};
use crate::normality::sup_trace;
use crate::phi::{reciprocal_convexity_check, PhiWeight};
use crate::sampling;

/// Sups below this mean the map is numerically constant.
pub const DEGENERATE_SUP: f64 = 1e-12;
/// `max g_n#` at or above this on the probe disc witnesses a nonconstant limit.
pub const NONCONSTANCY_THRESHOLD: f64 = 0.5;
/// Slack on the unit bound in the family rescaling check.
pub const FAMILY_BOUND_TOLERANCE: f64 = 0.05;
/// Grid used for the convexity hypothesis.
pub const CONVEXITY_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescalingEntry {
    pub r_n: f64,
    pub z_n: Complex64,
    #[serde(rename = "M_n")]
    pub m_n: f64,
    pub rho_n: f64,
    #[serde(rename = "R_n")]
    pub big_r_n: f64,
}

impl RescalingEntry {
    /// Entry with `rho = 1/M` and `R = (1 - |z|) phi(|z|) / rho`.
    pub fn new(w: &PhiWeight, r_n: f64, z_n: Complex64, m_n: f64) -> Result<Self> {
        if m_n <= DEGENERATE_SUP {
            return Err(Error::Degenerate(format!(
                "sup {m_n:e} at radius {r_n} is below {DEGENERATE_SUP:e}; map is numerically constant"
            )));
        }
        let rho_n = 1.0 / m_n;
        let big_r_n = (1.0 - z_n.norm()) * w.eval(z_n.norm())? / rho_n;
        Ok(Self { r_n, z_n, m_n, rho_n, big_r_n })
    }

    /// `z_n + rho_n zeta / phi(|z_n|)`, rejecting `|zeta| >= R_n`.
    pub fn shifted_point(&self, w: &PhiWeight, zeta: Complex64) -> Result<Complex64> {
        if zeta.norm() >= self.big_r_n {
            return Err(Error::OutOfRange {
                modulus: zeta.norm(),
                limit: self.big_r_n,
            });
        }
        Ok(self.z_n + self.rho_n * zeta / w.eval(self.z_n.norm())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescalingSequence {
    pub weight: PhiWeight,
    pub depth: usize,
    pub entries: Vec<RescalingEntry>,
    /// `R_n` strictly increasing over the last half of the entries.
    pub r_n_increasing_tail: bool,
}

pub fn extract_sequence(m: &HarmonicMap, w: &PhiWeight, schedule: &[f64], depth: usize) -> Result<RescalingSequence> {
    let trace = sup_trace(m, w, schedule, depth)?;
    let entries = trace
        .iter()
        .map(|e| RescalingEntry::new(w, e.radius, e.argmax, e.value))
        .collect::<Result<Vec<_>>>()?;
    let tail = &entries[entries.len() / 2..];
    let r_n_increasing_tail = tail.len() >= 2 && tail.windows(2).all(|p| p[1].big_r_n > p[0].big_r_n);
    Ok(RescalingSequence {
        weight: *w,
        depth,
        entries,
        r_n_increasing_tail,
    })
}

/// `g_n(zeta)`.
pub fn rescaled_eval(m: &HarmonicMap, w: &PhiWeight, entry: &RescalingEntry, zeta: Complex64) -> Result<Complex64> {
    m.eval(entry.shifted_point(w, zeta)?)
}

/// `g_n#(zeta) = (rho_n / phi(|z_n|)) f#(shifted point)`; equals 1 at 0.
pub fn rescaled_spherical(m: &HarmonicMap, w: &PhiWeight, entry: &RescalingEntry, zeta: Complex64) -> Result<f64> {
    let p = entry.shifted_point(w, zeta)?;
    Ok(m.spherical_derivative(p)? / entry.m_n / w.eval(entry.z_n.norm())?)
}

/// Chordal distance; `None` stands for the point at infinity.
pub fn chordal_distance(u: Option<Complex64>, v: Option<Complex64>) -> f64 {
    match (u, v) {
        (Some(u), Some(v)) => (u - v).norm() / ((1.0 + u.norm_sqr()) * (1.0 + v.norm_sqr())).sqrt(),
        (Some(x), None) | (None, Some(x)) => 1.0 / (1.0 + x.norm_sqr()).sqrt(),
        (None, None) => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub probe_radius: f64,
    pub grid: usize,
    pub probe_points: usize,
    /// Sup over the probe disc of the chordal distance between `g_i` and `g_j`.
    pub distance_matrix: Vec<Vec<f64>>,
    pub consecutive: Vec<f64>,
    pub cauchy_trend: bool,
    /// Max of `g_n#` over the probe disc, per entry.
    pub max_rescaled_fsharp: Vec<f64>,
    pub nonconstant_witness: bool,
    pub subsequence_note: String,
}

pub fn convergence_probe(
    m: &HarmonicMap,
    w: &PhiWeight,
    sequence: &RescalingSequence,
    probe_radius: f64,
    grid: usize,
) -> Result<ConvergenceReport> {
    if let Some(e) = sequence.entries.iter().find(|e| e.big_r_n <= probe_radius) {
        return Err(Error::Precondition(format!(
            "probe radius {probe_radius} is not below R_n = {} at r_n = {}",
            e.big_r_n, e.r_n
        )));
    }
    let points = sampling::square_lattice_in_disc(&Disc::centered(probe_radius), grid);
    let sampled: Vec<(Vec<Option<Complex64>>, f64)> = sequence
        .entries
        .par_iter()
        .map(|e| -> Result<(Vec<Option<Complex64>>, f64)> {
            let mut values = Vec::with_capacity(points.len());
            let mut max_sharp: f64 = 0.0;
            for &zeta in &points {
                match rescaled_eval(m, w, e, zeta) {
                    Ok(v) => values.push(Some(v)),
                    Err(Error::Overflow { .. }) => values.push(None),
                    Err(err) => return Err(err),
                }
                match rescaled_spherical(m, w, e, zeta) {
                    Ok(s) if s.is_finite() => max_sharp = max_sharp.max(s),
                    Ok(_) | Err(Error::Overflow { .. }) => {}
                    Err(err) => return Err(err),
                }
            }
            Ok((values, max_sharp))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = sampled.len();
    let sup_distance = |i: usize, j: usize| -> f64 {
        sampled[i]
            .0
            .iter()
            .zip(&sampled[j].0)
            .map(|(&u, &v)| chordal_distance(u, v))
            .fold(0.0, f64::max)
    };
    let distance_matrix: Vec<Vec<f64>> = if n < 2 {
        Vec::new()
    } else {
        (0..n).map(|i| (0..n).map(|j| sup_distance(i, j)).collect()).collect()
    };
    let consecutive: Vec<f64> = (1..n).map(|k| distance_matrix[k - 1][k]).collect();
    let cauchy_trend = consecutive.len() >= 3 && consecutive[consecutive.len() - 3..].windows(2).all(|p| p[1] < p[0]);
    let max_rescaled_fsharp: Vec<f64> = sampled.iter().map(|s| s.1).collect();
    let nonconstant_witness = max_rescaled_fsharp
        .last()
        .is_some_and(|&v| v >= NONCONSTANCY_THRESHOLD);
    Ok(ConvergenceReport {
        probe_radius,
        grid,
        probe_points: points.len(),
        distance_matrix,
        consecutive,
        cauchy_trend,
        max_rescaled_fsharp,
        nonconstant_witness,
        subsequence_note: "trends are reported on the full extracted sequence; no convergent subsequence is selected".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyEntry {
    pub z_n: Complex64,
    pub phi_at_z_n: f64,
    /// Sup of `(f o phi_{z_n})#` on the compact disc.
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyRescaleReport {
    pub weight: PhiWeight,
    pub compact_radius: f64,
    pub grid: usize,
    pub per_n: Vec<FamilyEntry>,
    pub marty_bound: f64,
    pub tolerance: f64,
    /// First index (1-based) from which every sup is at most `1 + tolerance`.
    pub bounded_from: Option<usize>,
}

/// Sups of `(f o phi_{z_n})#(z) = f#(z_n + z/phi(|z_n|)) / phi(|z_n|)` on
/// `|z| <= compact_radius`. Requires `1/phi` to be convex.
pub fn family_rescale_check(
    m: &HarmonicMap,
    w: &PhiWeight,
    points: &[Complex64],
    compact_radius: f64,
    grid: usize,
) -> Result<FamilyRescaleReport> {
    if !reciprocal_convexity_check(w, CONVEXITY_GRID)? {
        return Err(Error::HypothesisViolation(format!("1/phi is not convex for weight {w}")));
    }
    let lattice = sampling::square_lattice_in_disc(&Disc::centered(compact_radius), grid);
    let per_n = points
        .iter()
        .map(|&z_n| -> Result<FamilyEntry> {
            let phi = w.eval(z_n.norm())?;
            if z_n.norm() + compact_radius / phi >= 1.0 {
                return Err(Error::Domain(format!(
                    "disc of radius {compact_radius} around {z_n} leaves the unit disc after rescaling"
                )));
            }
            let sups = lattice
                .par_iter()
                .map(|&z| m.spherical_derivative(z_n + z / phi).map(|s| s / phi))
                .collect::<Result<Vec<f64>>>()?;
            Ok(FamilyEntry {
                z_n,
                phi_at_z_n: phi,
                sup: sups.into_iter().fold(0.0, f64::max),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let limit = 1.0 + FAMILY_BOUND_TOLERANCE;
    let bounded_from = match per_n.iter().rposition(|e| e.sup > limit) {
        None if per_n.is_empty() => None,
        None => Some(1),
        Some(k) if k + 1 < per_n.len() => Some(k + 2),
        Some(_) => None,
    };
    Ok(FamilyRescaleReport {
        weight: *w,
        compact_radius,
        grid,
        marty_bound: per_n.iter().map(|e| e.sup).fold(0.0, f64::max),
        per_n,
        tolerance: FAMILY_BOUND_TOLERANCE,
        bounded_from,
    })
}

/// CSV rows `n,r_n,z_n_re,z_n_im,M_n,rho_n,R_n` with `n` starting at 1.
pub fn write_sequence_csv<W: Write>(sequence: &RescalingSequence, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::MapFile(format!("csv write failed: {e}"));
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["n", "r_n", "z_n_re", "z_n_im", "M_n", "rho_n", "R_n"]).map_err(io)?;
    for (k, e) in sequence.entries.iter().enumerate() {
        wtr.write_record([
            (k + 1).to_string(),
            e.r_n.to_string(),
            e.z_n.re.to_string(),
            e.z_n.im.to_string(),
            e.m_n.to_string(),
            e.rho_n.to_string(),
            e.big_r_n.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::MapFile(format!("csv write failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn map(h: &str, g: &str) -> HarmonicMap {
        HarmonicMap::from_sources(h, g).unwrap()
    }

    fn witness() -> HarmonicMap {
        map("exp(i/(1-z))", "0")
    }

    #[test]
    fn witness_sequence() {
        let w = PhiWeight::inv_pow(1.5).unwrap();
        let m = witness();
        let seq = extract_sequence(&m, &w, &[0.9, 0.99, 0.999], 4).unwrap();
        for (e, bound) in seq.entries.iter().zip([1.58, 5.0, 15.8]) {
            assert!(e.m_n >= bound * (1.0 - 1e-12), "{} < {bound}", e.m_n);
            assert!((e.rho_n * e.m_n - 1.0).abs() < 1e-12);
            let r = (1.0 - e.z_n.norm()) * w.eval(e.z_n.norm()).unwrap() / e.rho_n;
            assert!((e.big_r_n - r).abs() <= 1e-12 * r);
            let one = rescaled_spherical(&m, &w, e, c(0.0, 0.0)).unwrap();
            assert!((one - 1.0).abs() < 1e-9);
        }
        assert!(seq.entries.windows(2).all(|p| p[1].big_r_n > p[0].big_r_n));
        assert!(seq.r_n_increasing_tail);
    }

    #[test]
    fn identity_sequence_has_flat_r_n() {
        let seq = extract_sequence(&map("z", "0"), &PhiWeight::Classical, &[0.5, 0.75, 0.875, 0.9375], 2).unwrap();
        for e in &seq.entries {
            assert!((e.m_n - 1.0).abs() < 1e-12);
            assert!(e.big_r_n < 2.0);
        }
        assert!(!seq.r_n_increasing_tail);
    }

    #[test]
    fn constant_map_is_degenerate() {
        let err = extract_sequence(&map("2", "0"), &PhiWeight::Classical, &[0.5], 1).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn forced_entry_and_range() {
        let w = PhiWeight::Classical;
        let m = map("z", "0");
        let e = RescalingEntry::new(&w, 0.0, c(0.0, 0.0), 1.0).unwrap();
        assert_eq!(e.big_r_n, 1.0);
        assert_eq!(rescaled_spherical(&m, &w, &e, c(0.0, 0.0)).unwrap(), 1.0);
        assert_eq!(rescaled_eval(&m, &w, &e, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert!(matches!(
            rescaled_eval(&m, &w, &e, c(1.0, 0.0)),
            Err(Error::OutOfRange { .. })
        ));
        let z = c(0.3, -0.2);
        assert_eq!(rescaled_eval(&m, &w, &e, z).unwrap(), m.eval(z).unwrap());
    }

    #[test]
    fn witness_probe_sees_nonconstant_limit() {
        let w = PhiWeight::inv_pow(1.5).unwrap();
        let m = witness();
        let seq = extract_sequence(&m, &w, &[0.9, 0.99, 0.999], 3).unwrap();
        let rep = convergence_probe(&m, &w, &seq, 1.0, 33).unwrap();
        assert_eq!(rep.distance_matrix.len(), 3);
        assert_eq!(rep.consecutive.len(), 2);
        assert!(!rep.cauchy_trend);
        assert!(rep.nonconstant_witness);
        assert!(rep.max_rescaled_fsharp.iter().all(|&v| v >= 1.0 - 1e-9));
    }

    #[test]
    fn single_entry_probe_is_vacuous() {
        let w = PhiWeight::inv_pow(1.5).unwrap();
        let m = witness();
        let seq = extract_sequence(&m, &w, &[0.9], 2).unwrap();
        let rep = convergence_probe(&m, &w, &seq, 1.0, 9).unwrap();
        assert!(rep.distance_matrix.is_empty());
        assert!(!rep.cauchy_trend);
    }

    #[test]
    fn family_check_examples() {
        let w = PhiWeight::inv_pow(2.0).unwrap();
        let points: Vec<Complex64> = (1..=4).map(|n| c(1.0 - 10f64.powi(-n), 0.0)).collect();
        let rep = family_rescale_check(&map("z", "0"), &w, &points, 1.0, 17).unwrap();
        assert!(rep.per_n.iter().all(|e| e.sup <= 1.05));
        assert!(rep.bounded_from.is_some_and(|k| k <= 2));
        let rep = family_rescale_check(&map("3", "0"), &w, &points, 1.0, 9).unwrap();
        assert!(rep.per_n.iter().all(|e| e.sup == 0.0));
        assert!(matches!(
            family_rescale_check(&map("z", "0"), &PhiWeight::Classical, &points, 1.0, 9),
            Err(Error::HypothesisViolation(_))
        ));
    }

    #[test]
    fn family_identity_matches_precomposition() {
        let w = PhiWeight::inv_pow(2.0).unwrap();
        let m = map("z^2+z", "0.2*z");
        let z_n = c(0.6, 0.3);
        let phi = w.eval(z_n.norm()).unwrap();
        let composed = m.precompose_affine(z_n, c(1.0 / phi, 0.0)).unwrap();
        for zeta in [c(0.0, 0.0), c(0.5, 0.5), c(-0.9, 0.1)] {
            let via_identity = m.spherical_derivative(z_n + zeta / phi).unwrap() / phi;
            let jet = composed.jet(zeta).unwrap();
            let direct = jet.spherical_derivative();
            assert!((via_identity - direct).abs() <= 1e-10 * direct);
        }
    }

    #[test]
    fn chordal_metric() {
        assert_eq!(chordal_distance(Some(c(1.0, 0.0)), Some(c(1.0, 0.0))), 0.0);
        assert!((chordal_distance(Some(c(0.0, 0.0)), None) - 1.0).abs() < 1e-15);
        assert!((chordal_distance(Some(c(0.0, 0.0)), Some(c(1.0, 0.0))) - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
