//! Built-in spaces. Every fixture is defined for `N = 3, 4, 5`; vectors that
//! are given for three dimensions are padded with zeros.

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::finsler::FinslerSpace;
use crate::finsleroid::{Finsleroid, QuarticPerturbation};
use crate::riemann::{AxisField, BaseMetric, ChargeField, RiemannField};
use crate::scalar::Scalar;

/// Either of the two space families known to the harness.
#[derive(Clone, Debug, PartialEq)]
pub enum Space {
    Finsleroid(Finsleroid),
    Quartic(QuarticPerturbation),
}

impl Space {
    pub fn as_finsleroid(&self) -> Option<&Finsleroid> {
        match self {
            Space::Finsleroid(f) => Some(f),
            Space::Quartic(_) => None,
        }
    }

    /// Whether `H(x)` is constant.
    pub fn is_homogeneous(&self) -> bool {
        self.base().charge_is_constant()
    }

    /// `g ≡ 0`: the Riemannian limit.
    pub fn is_riemannian(&self) -> bool {
        matches!(self, Space::Finsleroid(_))
            && matches!(self.base().charge, ChargeField::Constant { g } if g == 0.0)
    }

    pub fn has_flat_base(&self) -> bool {
        matches!(self.base().metric, BaseMetric::Flat)
    }

    pub fn has_deformation(&self) -> bool {
        matches!(self, Space::Finsleroid(_))
    }
}

impl FinslerSpace for Space {
    fn dim(&self) -> usize {
        self.base().dim
    }

    fn base(&self) -> &RiemannField {
        match self {
            Space::Finsleroid(f) => f.base(),
            Space::Quartic(q) => q.base(),
        }
    }

    fn metric<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        match self {
            Space::Finsleroid(f) => f.metric(x, y),
            Space::Quartic(q) => q.metric(x, y),
        }
    }

    fn h_scalar<S: Scalar>(&self, x: &[S]) -> S {
        match self {
            Space::Finsleroid(f) => f.h_scalar(x),
            Space::Quartic(q) => q.h_scalar(x),
        }
    }

    fn unit_field<S: Scalar>(&self, x: &[S], y: &[S]) -> Option<Vec<S>> {
        match self {
            Space::Finsleroid(f) => f.unit_field(x, y),
            Space::Quartic(q) => q.unit_field(x, y),
        }
    }

    fn admissible(&self, x: &[f64], y: &[f64]) -> Result<()> {
        match self {
            Space::Finsleroid(f) => f.admissible(x, y),
            Space::Quartic(q) => q.admissible(x, y),
        }
    }
}

/// A space given field by field in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpaceSpec {
    Finsleroid { field: RiemannField },
    Quartic { field: RiemannField, eps: f64 },
}

impl SpaceSpec {
    pub fn build(&self) -> Result<Space> {
        match self {
            SpaceSpec::Finsleroid { field } => Ok(Space::Finsleroid(Finsleroid::new(field.clone())?)),
            SpaceSpec::Quartic { field, eps } => {
                field.validate()?;
                Ok(Space::Quartic(QuarticPerturbation { field: field.clone(), eps: *eps }))
            }
        }
    }
}

pub struct FixtureInfo {
    pub name: &'static str,
    pub description: &'static str,
    build: fn(usize) -> SpaceSpec,
}

fn pad(v: &[f64], dim: usize) -> Vec<f64> {
    (0..dim).map(|i| v.get(i).copied().unwrap_or(0.0)).collect()
}

fn field(dim: usize, metric: BaseMetric, charge: ChargeField) -> RiemannField {
    RiemannField {
        dim,
        metric,
        axis: AxisField::Coordinate { index: 0 },
        charge,
        torsion: None,
    }
}

fn curv3_metric(dim: usize) -> BaseMetric {
    BaseMetric::Conformal { phi_grad: pad(&[0.1], dim) }
}

pub const FIXTURES: &[FixtureInfo] = &[
    FixtureInfo {
        name: "FLAT3",
        description: "flat base, axis along the first coordinate, constant charge g = 0.8",
        build: |n| SpaceSpec::Finsleroid {
            field: field(n, BaseMetric::Flat, ChargeField::Constant { g: 0.8 }),
        },
    },
    FixtureInfo {
        name: "CURV3",
        description: "conformal base exp(0.2 x^1) δ, axis along the first coordinate, charge g = 0.4 + 0.2 x^2",
        build: |n| SpaceSpec::Finsleroid {
            field: field(
                n,
                curv3_metric(n),
                ChargeField::Affine { g0: 0.4, grad: pad(&[0.0, 0.2], n) },
            ),
        },
    },
    FixtureInfo {
        name: "CURV3-CONST",
        description: "CURV3 base and axis with constant charge g = 0.4 (indicatrix-homogeneous)",
        build: |n| SpaceSpec::Finsleroid {
            field: field(n, curv3_metric(n), ChargeField::Constant { g: 0.4 }),
        },
    },
    FixtureInfo {
        name: "CURV3-RIEMANN",
        description: "CURV3 base with g = 0, the Riemannian limit",
        build: |n| SpaceSpec::Finsleroid {
            field: field(n, curv3_metric(n), ChargeField::Constant { g: 0.0 }),
        },
    },
    FixtureInfo {
        name: "SPHERE3",
        description: "round base of curvature 1 in stereographic coordinates, g = 0",
        build: |n| SpaceSpec::Finsleroid {
            field: field(n, BaseMetric::Sphere { kappa: 1.0 }, ChargeField::Constant { g: 0.0 }),
        },
    },
    FixtureInfo {
        name: "QUARTIC3",
        description: "flat-base quartic perturbation of a Riemannian norm; its indicatrix is not of constant curvature",
        build: |n| SpaceSpec::Quartic {
            field: field(n, BaseMetric::Flat, ChargeField::Constant { g: 0.0 }),
            eps: 0.3,
        },
    },
];

pub const DIMENSIONS: [usize; 3] = [3, 4, 5];

pub fn fixture_spec(name: &str, dim: usize) -> Result<SpaceSpec> {
    if !DIMENSIONS.contains(&dim) {
        return Err(GeomError::InvalidArgument(format!("dimension {dim} is not one of 3, 4, 5")));
    }
    FIXTURES
        .iter()
        .find(|f| f.name.eq_ignore_ascii_case(name))
        .map(|f| (f.build)(dim))
        .ok_or_else(|| GeomError::InvalidArgument(format!("unknown fixture `{name}`")))
}

pub fn fixture(name: &str, dim: usize) -> Result<Space> {
    fixture_spec(name, dim)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_builds_in_every_dimension() {
        for f in FIXTURES {
            for n in DIMENSIONS {
                let sp = fixture(f.name, n).unwrap();
                assert_eq!(sp.dim(), n);
                let y: Vec<f64> = (0..n).map(|i| 0.5 + 0.1 * i as f64).collect();
                sp.admissible(&vec![0.1; n], &y).unwrap();
            }
        }
    }

    #[test]
    fn unknown_names_and_dimensions_are_rejected() {
        assert!(fixture("nonexistent", 3).is_err());
        assert!(fixture("FLAT3", 6).is_err());
    }

    #[test]
    fn classification() {
        assert!(fixture("SPHERE3", 3).unwrap().is_riemannian());
        assert!(!fixture("CURV3", 3).unwrap().is_homogeneous());
        assert!(fixture("CURV3-CONST", 3).unwrap().is_homogeneous());
        assert!(!fixture("QUARTIC3", 3).unwrap().has_deformation());
    }
}
