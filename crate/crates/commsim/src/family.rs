//! Named distribution families addressed by a single real parameter.

use std::fmt;
use std::str::FromStr;

use commsim_core::dist::geometric_half_norm;
use commsim_core::Distribution;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    /// Parameter ignored.
    Uniform,
    /// Parameter is `beta` in `(0, 1]`.
    Geometric,
    /// Parameter is the exponent `lambda > 0`.
    Zipf,
    /// Parameter is the support size `s`; support and masses come from the seed.
    Sparse,
    /// Parameter is the 1-based symbol carrying all the mass.
    Point,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Uniform => "uniform",
            FamilyKind::Geometric => "geometric",
            FamilyKind::Zipf => "zipf",
            FamilyKind::Sparse => "sparse",
            FamilyKind::Point => "point",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(FamilyKind::Uniform),
            "geometric" | "geo" => Ok(FamilyKind::Geometric),
            "zipf" => Ok(FamilyKind::Zipf),
            "sparse" => Ok(FamilyKind::Sparse),
            "point" => Ok(FamilyKind::Point),
            other => Err(Error::Family(format!(
                "unknown family `{other}` (expected uniform, geometric, zipf, sparse or point)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub kind: FamilyKind,
    pub param: f64,
}

impl Family {
    pub fn new(kind: FamilyKind, param: f64) -> Self {
        Self { kind, param }
    }

    pub fn uniform() -> Self {
        Self::new(FamilyKind::Uniform, 0.0)
    }

    pub fn geometric(beta: f64) -> Self {
        Self::new(FamilyKind::Geometric, beta)
    }

    pub fn zipf(lambda: f64) -> Self {
        Self::new(FamilyKind::Zipf, lambda)
    }

    pub fn sparse(s: usize) -> Self {
        Self::new(FamilyKind::Sparse, s as f64)
    }

    pub fn point(symbol: usize) -> Self {
        Self::new(FamilyKind::Point, symbol as f64)
    }

    fn count_param(&self, what: &str) -> Result<usize> {
        let x = self.param;
        if x.is_finite() && x >= 1.0 && x.fract() == 0.0 {
            Ok(x as usize)
        } else {
            Err(Error::Family(format!(
                "{}: {what} must be a positive integer, got {x}",
                self.kind
            )))
        }
    }

    /// Instantiates the family on `d` symbols. Only `sparse` consumes `seed`.
    pub fn build(&self, d: usize, seed: u64) -> Result<Distribution> {
        let dist = match self.kind {
            FamilyKind::Uniform => Distribution::uniform(d)?,
            FamilyKind::Geometric => Distribution::geometric(self.param, d)?,
            FamilyKind::Zipf => Distribution::zipf(self.param, d)?,
            FamilyKind::Sparse => {
                let s = self.count_param("support size")?;
                Distribution::sparse_random(s, d, &mut ChaCha8Rng::seed_from_u64(seed))?
            }
            FamilyKind::Point => {
                let symbol = self.count_param("symbol")?;
                Distribution::point_mass(d, symbol - 1)?
            }
        };
        Ok(dist)
    }

    /// Closed-form `||p||_{1/2}` where one exists.
    pub fn closed_form_half_norm(&self, d: usize) -> Option<f64> {
        match self.kind {
            FamilyKind::Uniform => Some(d as f64),
            FamilyKind::Geometric => geometric_half_norm(self.param, d).ok(),
            FamilyKind::Point => Some(1.0),
            FamilyKind::Zipf | FamilyKind::Sparse => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FamilyKind::Uniform => write!(f, "uniform"),
            kind => write!(f, "{kind}({})", self.param),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names() {
        assert_eq!(
            "geometric".parse::<FamilyKind>().unwrap(),
            FamilyKind::Geometric
        );
        assert!("cauchy".parse::<FamilyKind>().is_err());
    }

    #[test]
    fn builds_each_family() {
        assert_eq!(Family::uniform().build(4, 0).unwrap().probs(), &[0.25; 4]);
        assert_eq!(
            Family::point(3).build(4, 0).unwrap().probs(),
            &[0.0, 0.0, 1.0, 0.0]
        );
        let s = Family::sparse(5).build(100, 9).unwrap();
        assert_eq!(s.support_size(), 5);
        assert_eq!(s, Family::sparse(5).build(100, 9).unwrap());
        assert!(Family::zipf(-1.0).build(10, 0).is_err());
        assert!(Family::geometric(1.5).build(10, 0).is_err());
        assert!(Family::new(FamilyKind::Sparse, 2.5).build(10, 0).is_err());
        assert!(Family::point(11).build(10, 0).is_err());
        assert!(Family::point(0).build(10, 0).is_err());
    }

    #[test]
    fn closed_forms_match_numeric() {
        for fam in [Family::uniform(), Family::geometric(0.8), Family::point(2)] {
            let cf = fam.closed_form_half_norm(1000).unwrap();
            let num = fam.build(1000, 0).unwrap().half_norm();
            assert!((cf - num).abs() < 1e-9, "{fam}: {cf} vs {num}");
        }
        assert!(Family::zipf(2.0).closed_form_half_norm(10).is_none());
    }
}
