//! Harmonic maps `f = h + conj(g)` and their pointwise invariants.

mod file;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exprparse::{parse, ComplexExpr};
use crate::sampling;

pub use file::{parse_complex_literal, MapFile};

/// `|g(z0)|` above this violates the canonical normalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;
/// Below this `|h'|` the dilatation is reported as undefined.
pub const DILATATION_TOLERANCE: f64 = 1e-12;
/// `|h'| + |g'|` at or below this counts as a critical point.
pub const CRITICAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Disc {
    pub center: Complex64,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: Complex64, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn centered(radius: f64) -> Self {
        Self::new(Complex64::new(0.0, 0.0), radius)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() <= self.radius
    }
}

#[derive(Debug, Clone)]
pub struct HarmonicMap {
    h: ComplexExpr,
    g: ComplexExpr,
    dh: ComplexExpr,
    dg: ComplexExpr,
    d2h: ComplexExpr,
    d2g: ComplexExpr,
    z0: Complex64,
    label: String,
    singularities: Vec<Complex64>,
}

/// Values of both parts and their first derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalJet {
    pub h: Complex64,
    pub g: Complex64,
    pub dh: Complex64,
    pub dg: Complex64,
}

impl LocalJet {
    pub fn value(&self) -> Complex64 {
        self.h + self.g.conj()
    }

    pub fn spherical_derivative(&self) -> f64 {
        (self.dh.norm() + self.dg.norm()) / (1.0 + self.value().norm_sqr())
    }

    pub fn jacobian(&self) -> f64 {
        self.dh.norm_sqr() - self.dg.norm_sqr()
    }
}

impl HarmonicMap {
    /// Builds the map, checking `|g(z0)| <= 1e-9`.
    pub fn new(h: ComplexExpr, g: ComplexExpr, z0: Complex64, label: impl Into<String>) -> Result<Self> {
        Self::with_singularities(h, g, z0, label, &[])
    }

    pub fn with_singularities(
        h: ComplexExpr,
        g: ComplexExpr,
        z0: Complex64,
        label: impl Into<String>,
        declared: &[Complex64],
    ) -> Result<Self> {
        let mut singularities: Vec<Complex64> = Vec::new();
        for &s in h.singularities().iter().chain(g.singularities()).chain(declared) {
            if !singularities.iter().any(|q| (q - s).norm() <= 1e-12) {
                singularities.push(s);
            }
        }
        let h = h.with_singularities(&singularities);
        let g = g.with_singularities(&singularities);
        let g_at_base = g.evaluate(z0)?;
        if g_at_base.norm() > NORMALIZATION_TOLERANCE {
            return Err(Error::NotNormalized {
                z0,
                value: g_at_base.norm(),
            });
        }
        Ok(Self {
            dh: h.differentiate(1),
            dg: g.differentiate(1),
            d2h: h.differentiate(2),
            d2g: g.differentiate(2),
            h,
            g,
            z0,
            label: label.into(),
            singularities,
        })
    }

    /// Convenience constructor from source strings with `z0 = 0`.
    pub fn from_sources(h: &str, g: &str) -> Result<Self> {
        let label = format!("h = {h}; g = {g}");
        Self::new(parse(h)?, parse(g)?, Complex64::new(0.0, 0.0), label)
    }

    pub fn h(&self) -> &ComplexExpr {
        &self.h
    }

    pub fn g(&self) -> &ComplexExpr {
        &self.g
    }

    pub fn z0(&self) -> Complex64 {
        self.z0
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn singularities(&self) -> &[Complex64] {
        &self.singularities
    }

    /// True when `h' + conj(g')` vanishes identically, i.e. both parts are
    /// constant trees.
    pub fn is_constant(&self) -> bool {
        self.h.is_constant() && self.g.is_constant()
    }

    pub fn jet(&self, z: Complex64) -> Result<LocalJet> {
        Ok(LocalJet {
            h: self.h.evaluate(z)?,
            g: self.g.evaluate(z)?,
            dh: self.dh.evaluate(z)?,
            dg: self.dg.evaluate(z)?,
        })
    }

    pub fn first_derivatives(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        Ok((self.dh.evaluate(z)?, self.dg.evaluate(z)?))
    }

    pub fn second_derivatives(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        Ok((self.d2h.evaluate(z)?, self.d2g.evaluate(z)?))
    }

    /// `h(z) + conj(g(z))`.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.h.evaluate(z)? + self.g.evaluate(z)?.conj())
    }

    /// `(|h'| + |g'|) / (1 + |f|^2)`.
    pub fn spherical_derivative(&self, z: Complex64) -> Result<f64> {
        Ok(self.jet(z)?.spherical_derivative())
    }

    /// `|h'|^2 - |g'|^2`.
    pub fn jacobian(&self, z: Complex64) -> Result<f64> {
        let (dh, dg) = self.first_derivatives(z)?;
        Ok(dh.norm_sqr() - dg.norm_sqr())
    }

    /// `g' / h'`, undefined where `|h'| <= 1e-12`.
    pub fn dilatation(&self, z: Complex64) -> Result<Complex64> {
        let (dh, dg) = self.first_derivatives(z)?;
        if dh.norm() <= DILATATION_TOLERANCE {
            return Err(Error::DegenerateDenominator { point: z });
        }
        Ok(dg / dh)
    }

    /// `(|h''| + |g''|) / (1 + (|h'| + |g'|)^2)`.
    pub fn second_order_quantity(&self, z: Complex64) -> Result<f64> {
        let (dh, dg) = self.first_derivatives(z)?;
        let (d2h, d2g) = self.second_derivatives(z)?;
        let s = dh.norm() + dg.norm();
        Ok((d2h.norm() + d2g.norm()) / (1.0 + s * s))
    }

    pub fn point_report(&self, z: Complex64) -> Result<PointReport> {
        let jet = self.jet(z)?;
        let (d2h, d2g) = self.second_derivatives(z)?;
        let s = jet.dh.norm() + jet.dg.norm();
        let dilatation = if jet.dh.norm() <= DILATATION_TOLERANCE {
            None
        } else {
            Some(jet.dg / jet.dh)
        };
        Ok(PointReport {
            z,
            f_value: jet.value(),
            fsharp: jet.spherical_derivative(),
            jacobian: jet.jacobian(),
            dilatation,
            second_quantity: (d2h.norm() + d2g.norm()) / (1.0 + s * s),
        })
    }

    /// The map `zeta -> f(offset + scale * zeta)`, built by substituting into
    /// both expression trees so symbolic derivatives stay exact.
    pub fn precompose_affine(&self, offset: Complex64, scale: Complex64) -> Result<HarmonicMap> {
        if scale.norm() == 0.0 {
            return Err(Error::Precondition("affine scale must be nonzero".into()));
        }
        let h = self.h.compose_affine(offset, scale);
        let g = self.g.compose_affine(offset, scale);
        let declared: Vec<Complex64> = self
            .singularities
            .iter()
            .map(|s| (s - offset) / scale)
            .collect();
        HarmonicMap::with_singularities(
            h,
            g,
            (self.z0 - offset) / scale,
            format!("{} composed with {offset} + {scale}*z", self.label),
            &declared,
        )
    }
}

/// Meromorphic spherical derivative `|e'| / (1 + |e|^2)` of one analytic part.
pub fn analytic_spherical_derivative(e: &ComplexExpr, de: &ComplexExpr, z: Complex64) -> Result<f64> {
    let v = e.evaluate(z)?;
    Ok(de.evaluate(z)?.norm() / (1.0 + v.norm_sqr()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointReport {
    pub z: Complex64,
    pub f_value: Complex64,
    pub fsharp: f64,
    pub jacobian: f64,
    pub dilatation: Option<Complex64>,
    pub second_quantity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SenseVerdict {
    /// `J_f > 0` at every sample.
    Pass,
    /// `J_f >= 0` everywhere and it vanishes only where `h' = g' = 0`.
    DegenerateCritical,
    /// Some sample has `J_f <= 0` away from a common critical point.
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SenseProbeReport {
    pub region: Disc,
    pub samples: usize,
    pub skipped: usize,
    pub min_jacobian: f64,
    pub argmin: Complex64,
    pub verdict: SenseVerdict,
    pub witness: Option<Complex64>,
}

impl SenseProbeReport {
    pub fn passed(&self) -> bool {
        self.verdict == SenseVerdict::Pass
    }
}

/// Samples `J_f` on a Halton point set in `region` (index 0 is the center).
/// Evidence only: a PASS does not prove `J_f > 0` on the whole disc.
pub fn sense_preserving_probe(m: &HarmonicMap, region: &Disc, samples: usize) -> Result<SenseProbeReport> {
    let mut min_jacobian = f64::INFINITY;
    let mut argmin = region.center;
    let mut skipped = 0;
    let mut fail_witness = None;
    let mut critical_witness = None;
    for z in sampling::halton_disc(region, samples) {
        let (dh, dg) = match m.first_derivatives(z) {
            Ok(v) => v,
            Err(Error::Singularity { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let j = dh.norm_sqr() - dg.norm_sqr();
        if j < min_jacobian {
            min_jacobian = j;
            argmin = z;
        }
        if j <= 0.0 {
            if dh.norm() + dg.norm() <= CRITICAL_TOLERANCE {
                critical_witness.get_or_insert(z);
            } else if fail_witness.is_none() {
                fail_witness = Some(z);
            }
        }
    }
    let (verdict, witness) = match (fail_witness, critical_witness) {
        (Some(w), _) => (SenseVerdict::Fail, Some(w)),
        (None, Some(w)) => (SenseVerdict::DegenerateCritical, Some(w)),
        (None, None) => (SenseVerdict::Pass, None),
    };
    Ok(SenseProbeReport {
        region: *region,
        samples,
        skipped,
        min_jacobian,
        argmin,
        verdict,
        witness,
    })
}
