//! Numerical toolkit for planar harmonic mappings `f = h + conj(g)` on the
//! unit disc: spherical derivatives, phi-normality estimates, rescaling
//! sequences, preimage search with multiplicities and five/four-point
//! normality checks.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod exprparse;
pub mod mapfn;
pub mod normality;
pub mod phi;
pub mod rescale;
pub mod roots;
pub mod sampling;

pub use error::{Error, Result};
pub use exprparse::{parse, ComplexExpr};
pub use mapfn::{Disc, HarmonicMap};
pub use num_complex::Complex64;
pub use phi::PhiWeight;
