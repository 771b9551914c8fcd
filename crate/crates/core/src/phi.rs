//! Radial weights `phi: [0, 1) -> (0, inf)` and the diagnostics used to
//! decide whether a weight is smoothly increasing and whether `1/phi` is
//! convex.

use std::f64::consts::{E, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Weight values above this are reported as overflow.
pub const WEIGHT_OVERFLOW_GUARD: f64 = 1e300;
/// Second differences of `1/phi` down to this are accepted as convex.
pub const CONVEXITY_TOLERANCE: f64 = -1e-10;
/// Last-point deviation below which the smooth-increase check passes.
pub const SMOOTH_DEVIATION_THRESHOLD: f64 = 0.05;

const CONSTRUCTION_GRID: usize = 10_000;
const COMPACT_ANGLES: usize = 64;
const COMPACT_RINGS: usize = 16;

/// Anything that can be evaluated as a radial weight.
pub trait RadialWeight {
    fn value(&self, r: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiWeight {
    /// `1 / (1 - r^2)`.
    Classical,
    /// `(1 - r)^(-alpha)`, `alpha > 1`.
    InvPow { alpha: f64 },
    /// `(1 - r)^(-1) * ln(e / (1 - r))^beta`, `beta >= 1`.
    InvLog { beta: f64 },
}

impl PhiWeight {
    pub fn inv_pow(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(Error::InvalidWeight(format!("inv_pow needs alpha > 1, got {alpha}")));
        }
        Self::InvPow { alpha }.validated()
    }

    pub fn inv_log(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 1.0) {
            return Err(Error::InvalidWeight(format!("inv_log needs beta >= 1, got {beta}")));
        }
        Self::InvLog { beta }.validated()
    }

    /// Positivity and monotonicity on a uniform grid, and for the two
    /// super-classical families a growing `phi(r)(1 - r)` tail.
    fn validated(self) -> Result<Self> {
        let mut prev = 0.0;
        for k in 0..CONSTRUCTION_GRID {
            let r = k as f64 / CONSTRUCTION_GRID as f64;
            let v = self.eval(r)?;
            if v <= 0.0 || v < prev {
                return Err(Error::InvalidWeight(format!(
                    "{self} is not positive and nondecreasing at r = {r}"
                )));
            }
            prev = v;
        }
        if !matches!(self, PhiWeight::Classical) {
            let near = self.boundary_product(1.0 - 1e-4)?;
            let nearer = self.boundary_product(1.0 - 1e-8)?;
            if nearer <= near {
                return Err(Error::InvalidWeight(format!(
                    "{self}: phi(r)(1-r) does not grow toward r = 1"
                )));
            }
        }
        Ok(self)
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [0, 1)")));
        }
        let v = match *self {
            PhiWeight::Classical => 1.0 / (1.0 - r * r),
            PhiWeight::InvPow { alpha } => (1.0 - r).powf(-alpha),
            PhiWeight::InvLog { beta } => (E / (1.0 - r)).ln().powf(beta) / (1.0 - r),
        };
        if !v.is_finite() || v > WEIGHT_OVERFLOW_GUARD {
            return Err(Error::Domain(format!("weight overflow at radius {r}")));
        }
        Ok(v)
    }

    /// `phi(r) * (1 - r)`, which diverges for smoothly increasing weights.
    pub fn boundary_product(&self, r: f64) -> Result<f64> {
        Ok(self.eval(r)? * (1.0 - r))
    }

    /// `R_a(z) = phi(|a + z/phi(|a|)|) / phi(|a|)`.
    pub fn rescale_ratio(&self, a: Complex64, z: Complex64) -> Result<f64> {
        rescale_ratio(self, a, z)
    }
}

impl RadialWeight for PhiWeight {
    fn value(&self, r: f64) -> Result<f64> {
        self.eval(r)
    }
}

impl fmt::Display for PhiWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiWeight::Classical => write!(f, "classical"),
            PhiWeight::InvPow { alpha } => write!(f, "inv_pow:alpha={alpha}"),
            PhiWeight::InvLog { beta } => write!(f, "inv_log:beta={beta}"),
        }
    }
}

impl Serialize for PhiWeight {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for PhiWeight {
    type Err = Error;

    /// `classical`, `inv_pow:alpha=<decimal>` or `inv_log:beta=<decimal>`.
    fn from_str(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidWeight(format!("unrecognized weight specifier `{spec}`"));
        if spec == "classical" {
            return Ok(PhiWeight::Classical);
        }
        let (family, param) = spec.split_once(':').ok_or_else(bad)?;
        let (name, value) = param.split_once('=').ok_or_else(bad)?;
        let value: f64 = value.parse().map_err(|_| bad())?;
        match (family, name) {
            ("inv_pow", "alpha") => PhiWeight::inv_pow(value),
            ("inv_log", "beta") => PhiWeight::inv_log(value),
            _ => Err(bad()),
        }
    }
}

/// `R_a(z)` for any radial weight. `R_a(0) = 1` exactly.
pub fn rescale_ratio<W: RadialWeight + ?Sized>(w: &W, a: Complex64, z: Complex64) -> Result<f64> {
    let base = w.value(a.norm())?;
    let shifted = a + z / base;
    let r = shifted.norm();
    if r >= 1.0 {
        return Err(Error::Domain(format!("shifted point {shifted} leaves the unit disc")));
    }
    Ok(w.value(r)? / base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothIncreaseReport {
    pub radii: Vec<f64>,
    pub compact_radius: f64,
    pub monotone: bool,
    /// `phi(r)(1 - r)` along the schedule.
    pub growth_trend: Vec<f64>,
    /// `sup |R_a(z) - 1|` over the compact sample, with `a = r`.
    pub ratio_sup_deviation: Vec<f64>,
    /// Sample points whose shifted image left the unit disc, per radius.
    pub excluded_samples: Vec<usize>,
    pub deviation_decreasing: bool,
    pub verdict: CheckVerdict,
}

/// Checks monotonicity, the `phi(r)(1 - r)` trend and the uniform
/// convergence `R_a -> 1` on `|z| <= compact_radius` along `a = r` for each
/// scheduled radius. The compact disc is sampled on 64 angles x 16 rings.
pub fn smooth_increase_check<W: RadialWeight + ?Sized>(
    w: &W,
    radii: &[f64],
    compact_radius: f64,
) -> SmoothIncreaseReport {
    let mut monotone = true;
    let mut prev = f64::NEG_INFINITY;
    let mut growth_trend = Vec::with_capacity(radii.len());
    for &r in radii {
        match w.value(r) {
            Ok(v) => {
                if v < prev {
                    monotone = false;
                }
                prev = v;
                growth_trend.push(v * (1.0 - r));
            }
            Err(_) => {
                monotone = false;
                growth_trend.push(f64::NAN);
            }
        }
    }

    let samples: Vec<Complex64> = (1..=COMPACT_RINGS)
        .flat_map(|ring| {
            let rho = compact_radius * ring as f64 / COMPACT_RINGS as f64;
            (0..COMPACT_ANGLES).map(move |k| Complex64::from_polar(rho, TAU * k as f64 / COMPACT_ANGLES as f64))
        })
        .collect();

    let mut ratio_sup_deviation = Vec::with_capacity(radii.len());
    let mut excluded_samples = Vec::with_capacity(radii.len());
    for &r in radii {
        let a = Complex64::new(r, 0.0);
        let mut dev: f64 = 0.0;
        let mut excluded = 0;
        for &z in &samples {
            match rescale_ratio(w, a, z) {
                Ok(ratio) => dev = dev.max((ratio - 1.0).abs()),
                Err(_) => excluded += 1,
            }
        }
        ratio_sup_deviation.push(dev);
        excluded_samples.push(excluded);
    }

    let deviation_decreasing = ratio_sup_deviation.windows(2).all(|p| p[1] <= p[0]);
    let last_ok = match (ratio_sup_deviation.last(), excluded_samples.last()) {
        (Some(&d), Some(&0)) => d < SMOOTH_DEVIATION_THRESHOLD,
        _ => false,
    };
    let verdict = if monotone && last_ok {
        CheckVerdict::Pass
    } else {
        CheckVerdict::Fail
    };
    SmoothIncreaseReport {
        radii: radii.to_vec(),
        compact_radius,
        monotone,
        growth_trend,
        ratio_sup_deviation,
        excluded_samples,
        deviation_decreasing,
        verdict,
    }
}

/// True iff second differences of `1/phi` on a uniform `grid`-point mesh of
/// `[0, 1 - 1e-6]` are all `>= -1e-10`.
pub fn reciprocal_convexity_check<W: RadialWeight + ?Sized>(w: &W, grid: usize) -> Result<bool> {
    if grid < 3 {
        return Err(Error::Precondition(format!("convexity grid needs >= 3 points, got {grid}")));
    }
    let end = 1.0 - 1e-6;
    let psi = (0..grid)
        .map(|k| w.value(end * k as f64 / (grid - 1) as f64).map(|v| 1.0 / v))
        .collect::<Result<Vec<f64>>>()?;
    Ok(psi
        .windows(3)
        .all(|t| t[0] - 2.0 * t[1] + t[2] >= CONVEXITY_TOLERANCE))
}
