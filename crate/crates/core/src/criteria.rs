//! Five-point and four-point checks: sups of `f#/phi` (and of the
//! second-order quantity) over preimages of a finite set inside growing
//! discs.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapfn::{sense_preserving_probe, Disc, HarmonicMap, SenseProbeReport, SenseVerdict};
use crate::normality::{classify_normality, classify_trace, validate_schedule, EvidenceKind};
use crate::phi::{smooth_increase_check, CheckVerdict, PhiWeight, SmoothIncreaseReport};
use crate::roots::find_preimages;

/// Values closer than this count as repeated.
pub const DISTINCTNESS_TOLERANCE: f64 = 1e-9;
pub const SENSE_PROBE_SAMPLES: usize = 4096;
/// Radii used to record the smooth-increase hypothesis in four-point mode.
pub const SMOOTH_CHECK_RADII: [f64; 5] = [0.9, 0.99, 0.999, 0.9999, 0.99999];
pub const SMOOTH_CHECK_COMPACT_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionMode {
    FivePoint,
    FourPoint,
}

impl CriterionMode {
    pub fn cardinality(self) -> usize {
        match self {
            CriterionMode::FivePoint => 5,
            CriterionMode::FourPoint => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriterionVerdict {
    BoundedEvidence,
    GrowthEvidence,
    Inconclusive,
    NoPreimages,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusEntry {
    pub radius: f64,
    pub preimage_count: usize,
    pub preimages: Vec<Complex64>,
    /// Max of `f#/phi` over the preimages; `None` when there are none.
    pub sup1: Option<f64>,
    /// Max of the second-order quantity (four-point mode only).
    pub sup2: Option<f64>,
    pub unresolved_cells: usize,
    pub excluded_near_boundary: usize,
    /// Preimages failing `|f(z) - a| <= tol` on recomputation.
    pub recheck_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueTrace {
    pub a: Complex64,
    pub per_radius: Vec<RadiusEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overall {
    pub sup1: f64,
    pub sup2: Option<f64>,
    pub verdict: CriterionVerdict,
    pub sup1_trace: Vec<f64>,
    pub sup2_trace: Option<Vec<f64>>,
    pub growth_exponent1: Option<f64>,
    pub growth_exponent2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub mode: CriterionMode,
    #[serde(rename = "E")]
    pub e: Vec<Complex64>,
    pub weight: PhiWeight,
    pub radii: Vec<f64>,
    pub tol: f64,
    pub sense_probe: SenseProbeReport,
    pub smooth_increase: Option<SmoothIncreaseReport>,
    pub per_value: Vec<ValueTrace>,
    pub overall: Overall,
    pub notes: Vec<String>,
}

fn check_values(e: &[Complex64], mode: CriterionMode) -> Result<()> {
    if e.len() != mode.cardinality() {
        return Err(Error::Precondition(format!(
            "{} values required, got {}",
            mode.cardinality(),
            e.len()
        )));
    }
    for (i, a) in e.iter().enumerate() {
        if e[..i].iter().any(|b| (a - b).norm() <= DISTINCTNESS_TOLERANCE) {
            return Err(Error::Precondition(format!("value {a} is repeated")));
        }
    }
    Ok(())
}

fn radius_entry(m: &HarmonicMap, w: &PhiWeight, a: Complex64, radius: f64, tol: f64, mode: CriterionMode) -> Result<RadiusEntry> {
    let set = find_preimages(m, a, &Disc::centered(radius), tol)?;
    let preimages: Vec<Complex64> = set.roots.iter().map(|r| r.location).collect();
    let mut sup1: Option<f64> = None;
    let mut sup2: Option<f64> = None;
    let mut recheck_failures = 0;
    for &z in &preimages {
        if (m.eval(z)? - a).norm() > tol {
            recheck_failures += 1;
        }
        let q1 = m.spherical_derivative(z)? / w.eval(z.norm())?;
        sup1 = Some(sup1.map_or(q1, |s| s.max(q1)));
        if mode == CriterionMode::FourPoint {
            let q2 = m.second_order_quantity(z)?;
            sup2 = Some(sup2.map_or(q2, |s| s.max(q2)));
        }
    }
    Ok(RadiusEntry {
        radius,
        preimage_count: preimages.len(),
        preimages,
        sup1,
        sup2,
        unresolved_cells: set.unresolved.len(),
        excluded_near_boundary: set.excluded_near_boundary,
        recheck_failures,
    })
}

fn trace_max(per_value: &[ValueTrace], k: usize, pick: fn(&RadiusEntry) -> Option<f64>) -> f64 {
    per_value
        .iter()
        .filter_map(|v| pick(&v.per_radius[k]))
        .fold(0.0, f64::max)
}

fn run_criterion(
    m: &HarmonicMap,
    w: &PhiWeight,
    e: &[Complex64],
    schedule: &[f64],
    tol: f64,
    mode: CriterionMode,
) -> Result<CriterionReport> {
    check_values(e, mode)?;
    validate_schedule(schedule)?;
    let largest = Disc::centered(*schedule.last().expect("validated schedule is nonempty"));
    let probe = sense_preserving_probe(m, &largest, SENSE_PROBE_SAMPLES)?;
    if probe.verdict == SenseVerdict::Fail {
        let witness = probe.witness.unwrap_or(probe.argmin);
        return Err(Error::NotSensePreserving {
            witness,
            jacobian: m.jacobian(witness)?,
        });
    }
    let mut notes = Vec::new();
    if probe.verdict == SenseVerdict::DegenerateCritical {
        notes.push("Jacobian vanishes at a common critical point of h and g; accepted as degenerate".into());
    }
    let smooth_increase = (mode == CriterionMode::FourPoint)
        .then(|| smooth_increase_check(w, &SMOOTH_CHECK_RADII, SMOOTH_CHECK_COMPACT_RADIUS));
    if smooth_increase.as_ref().is_some_and(|r| r.verdict == CheckVerdict::Fail) {
        notes.push(format!("weight {w} did not pass the smooth-increase check; evidence recorded anyway"));
    }

    let jobs: Vec<(usize, usize)> = (0..e.len())
        .flat_map(|i| (0..schedule.len()).map(move |k| (i, k)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(i, k)| radius_entry(m, w, e[i], schedule[k], tol, mode))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = entries.into_iter();
    let per_value: Vec<ValueTrace> = e
        .iter()
        .map(|&a| ValueTrace {
            a,
            per_radius: entries.by_ref().take(schedule.len()).collect(),
        })
        .collect();

    let sup1_trace: Vec<f64> = (0..schedule.len()).map(|k| trace_max(&per_value, k, |r| r.sup1)).collect();
    let sup2_trace: Option<Vec<f64>> = (mode == CriterionMode::FourPoint)
        .then(|| (0..schedule.len()).map(|k| trace_max(&per_value, k, |r| r.sup2)).collect());
    let any_preimage = per_value
        .iter()
        .any(|v| v.per_radius.last().is_some_and(|r| r.preimage_count > 0));

    let (kind1, growth_exponent1) = classify_trace(schedule, &sup1_trace, false);
    let (kind2, growth_exponent2) = match &sup2_trace {
        Some(t) => {
            let (k, g) = classify_trace(schedule, t, false);
            (Some(k), g)
        }
        None => (None, None),
    };
    let verdict = if !any_preimage {
        CriterionVerdict::NoPreimages
    } else {
        match (kind1, kind2) {
            (EvidenceKind::GrowthEvidence, _) | (_, Some(EvidenceKind::GrowthEvidence)) => CriterionVerdict::GrowthEvidence,
            (EvidenceKind::BoundedEvidence, None | Some(EvidenceKind::BoundedEvidence)) => CriterionVerdict::BoundedEvidence,
            _ => CriterionVerdict::Inconclusive,
        }
    };
    if per_value.iter().flat_map(|v| &v.per_radius).any(|r| r.unresolved_cells > 0) {
        notes.push("some preimage searches left unresolved cells".into());
    }

    Ok(CriterionReport {
        mode,
        e: e.to_vec(),
        weight: *w,
        radii: schedule.to_vec(),
        tol,
        sense_probe: probe,
        smooth_increase,
        overall: Overall {
            sup1: sup1_trace.last().copied().unwrap_or(0.0),
            sup2: sup2_trace.as_ref().and_then(|t| t.last().copied()),
            verdict,
            sup1_trace,
            sup2_trace,
            growth_exponent1,
            growth_exponent2,
        },
        per_value,
        notes,
    })
}

/// Sup of `f#/phi` over preimages of five values.
pub fn lappan_five(m: &HarmonicMap, w: &PhiWeight, e: &[Complex64], schedule: &[f64], tol: f64) -> Result<CriterionReport> {
    run_criterion(m, w, e, schedule, tol, CriterionMode::FivePoint)
}

/// As [`lappan_five`] for four values, adding the second-order quantity.
pub fn lappan_four(m: &HarmonicMap, w: &PhiWeight, e: &[Complex64], schedule: &[f64], tol: f64) -> Result<CriterionReport> {
    run_criterion(m, w, e, schedule, tol, CriterionMode::FourPoint)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub normality: EvidenceKind,
    pub normality_growth_exponent: Option<f64>,
    pub five_point: CriterionVerdict,
    /// False when normality shows growth while the five-point trace is bounded.
    pub consistent: bool,
    pub flag: Option<String>,
    pub note: String,
}

pub fn criterion_consistency(
    m: &HarmonicMap,
    w: &PhiWeight,
    e: &[Complex64],
    schedule: &[f64],
    depth: usize,
    tol: f64,
) -> Result<ConsistencyReport> {
    let normality = classify_normality(m, w, schedule, depth)?;
    let five = lappan_five(m, w, e, schedule, tol)?;
    let contradiction = normality.kind == EvidenceKind::GrowthEvidence
        && five.overall.verdict == CriterionVerdict::BoundedEvidence;
    Ok(ConsistencyReport {
        normality: normality.kind,
        normality_growth_exponent: normality.growth_exponent,
        five_point: five.overall.verdict,
        consistent: !contradiction,
        flag: contradiction.then(|| {
            "normality trace grows while the five-point trace is bounded; review the finite-radius evidence".to_string()
        }),
        note: "desk-scale evidence".into(),
    })
}

/// CSV rows `a_re,a_im,radius,preimage_count,sup1,sup2`.
pub fn write_criterion_csv<W: Write>(report: &CriterionReport, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::MapFile(format!("csv write failed: {e}"));
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["a_re", "a_im", "radius", "preimage_count", "sup1", "sup2"]).map_err(io)?;
    for v in &report.per_value {
        for r in &v.per_radius {
            wtr.write_record([
                v.a.re.to_string(),
                v.a.im.to_string(),
                r.radius.to_string(),
                r.preimage_count.to_string(),
                opt(r.sup1),
                opt(r.sup2),
            ])
            .map_err(io)?;
        }
    }
    wtr.flush().map_err(|e| Error::MapFile(format!("csv write failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roots::DEFAULT_TOL;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn map(h: &str, g: &str) -> HarmonicMap {
        HarmonicMap::from_sources(h, g).unwrap()
    }

    fn unit_five() -> Vec<Complex64> {
        vec![c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0)]
    }

    #[test]
    fn identity_five_point() {
        let schedule = [0.5, 0.75, 0.9, 0.99, 0.999];
        let rep = lappan_five(&map("z", "0"), &PhiWeight::Classical, &unit_five(), &schedule, DEFAULT_TOL).unwrap();
        assert!((rep.overall.sup1 - 1.0).abs() < 1e-12);
        assert_eq!(rep.overall.verdict, CriterionVerdict::BoundedEvidence);
        assert_eq!(rep.per_value[0].per_radius[0].preimage_count, 1);
        assert!(rep.per_value[1..].iter().all(|v| v.per_radius.iter().all(|r| r.preimage_count == 0)));
    }

    #[test]
    fn square_five_point() {
        let e = [c(0.01, 0.0), c(-0.02, 0.0), c(0.0, 0.03), c(0.0, -0.04), c(0.05, 0.05)];
        let rep = lappan_five(&map("z^2", "0"), &PhiWeight::Classical, &e, &[0.5, 0.75, 0.9], DEFAULT_TOL).unwrap();
        assert_eq!(rep.overall.verdict, CriterionVerdict::BoundedEvidence);
        for v in &rep.per_value {
            assert_eq!(v.per_radius[0].preimage_count, 2);
            for &z in &v.per_radius[0].preimages {
                assert!((z * z - v.a).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn repeated_or_wrong_count() {
        let mut e = unit_five();
        e[4] = e[0];
        assert!(matches!(
            lappan_five(&map("z", "0"), &PhiWeight::Classical, &e, &[0.5], DEFAULT_TOL),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            lappan_four(&map("z", "0"), &PhiWeight::Classical, &unit_five(), &[0.5], DEFAULT_TOL),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn identity_four_point() {
        let e = [c(0.0, 0.0), c(0.1, 0.0), c(-0.1, 0.0), c(0.0, 0.1)];
        let rep = lappan_four(&map("z", "0"), &PhiWeight::Classical, &e, &[0.5, 0.9, 0.99], DEFAULT_TOL).unwrap();
        assert_eq!(rep.overall.sup2, Some(0.0));
        assert_eq!(rep.overall.verdict, CriterionVerdict::BoundedEvidence);
        assert!(rep.smooth_increase.is_some());
    }

    #[test]
    fn square_four_point() {
        let e = [c(0.01, 0.0), c(-0.01, 0.0), c(0.0, 0.01), c(0.0, -0.01)];
        let w = PhiWeight::inv_pow(1.5).unwrap();
        let rep = lappan_four(&map("z^2", "0"), &w, &e, &[0.5, 0.75, 0.9], DEFAULT_TOL).unwrap();
        assert_eq!(rep.overall.verdict, CriterionVerdict::BoundedEvidence);
        assert!(rep.overall.sup1.is_finite() && rep.overall.sup2.unwrap().is_finite());
        assert_eq!(rep.smooth_increase.unwrap().verdict, CheckVerdict::Pass);
    }

    #[test]
    fn sense_reversing_is_rejected() {
        let e = [c(0.0, 0.0), c(0.1, 0.0), c(-0.1, 0.0), c(0.0, 0.1), c(0.0, -0.1)];
        let err = lappan_five(&map("0.5*z", "z"), &PhiWeight::Classical, &e, &[0.5], DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::NotSensePreserving { .. }));
    }

    #[test]
    fn sup1_recomputes() {
        let e = [c(0.1, 0.0), c(-0.1, 0.0), c(0.0, 0.1), c(0.0, -0.1), c(0.2, 0.2)];
        let m = map("z^2+2*z", "0.1*z^2");
        let w = PhiWeight::inv_pow(2.0).unwrap();
        let rep = lappan_five(&m, &w, &e, &[0.6, 0.8], DEFAULT_TOL).unwrap();
        let mut again: f64 = 0.0;
        for v in &rep.per_value {
            for &z in &v.per_radius[1].preimages {
                assert!((m.eval(z).unwrap() - v.a).norm() <= DEFAULT_TOL);
                again = again.max(m.spherical_derivative(z).unwrap() / w.eval(z.norm()).unwrap());
            }
        }
        assert_eq!(rep.overall.sup1, again);
    }

    #[test]
    fn far_values_give_no_preimages() {
        let e = [c(5.0, 0.0), c(6.0, 0.0), c(7.0, 0.0), c(8.0, 0.0), c(9.0, 0.0)];
        let rep = lappan_five(&map("z", "0"), &PhiWeight::Classical, &e, &[0.5, 0.9], DEFAULT_TOL).unwrap();
        assert_eq!(rep.overall.verdict, CriterionVerdict::NoPreimages);
    }

    #[test]
    fn consistency_examples() {
        let schedule = [0.5, 0.75, 0.875, 0.9375];
        let rep = criterion_consistency(&map("z", "0"), &PhiWeight::Classical, &unit_five(), &schedule, 2, DEFAULT_TOL).unwrap();
        assert_eq!(rep.normality, EvidenceKind::BoundedEvidence);
        assert_eq!(rep.five_point, CriterionVerdict::BoundedEvidence);
        assert!(rep.consistent);
        let rep = criterion_consistency(&map("3", "0"), &PhiWeight::Classical, &unit_five(), &schedule, 1, DEFAULT_TOL).unwrap();
        assert_eq!(rep.five_point, CriterionVerdict::NoPreimages);
        assert!(rep.consistent);
    }

    #[test]
    fn csv_export() {
        let rep = lappan_five(&map("z", "0"), &PhiWeight::Classical, &unit_five(), &[0.5, 0.9], DEFAULT_TOL).unwrap();
        let mut buf = Vec::new();
        write_criterion_csv(&rep, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 11);
    }
}
