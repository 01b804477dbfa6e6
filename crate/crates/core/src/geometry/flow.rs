use super::{BackendKind, FieldExpr};
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Hamiltonian flows known in closed form, with ι_{X_H}ω = dH.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowCatalogEntry {
    /// H = cos 2πx₁ on a torus: (x₁, y₁) ↦ (x₁, y₁ + t·sin 2πx₁).
    CosShear { dims: usize },
    /// Multivalued linear H on a torus: constant velocity.
    Translation { velocity: Vec<f64> },
    /// H = ζ on the sphere: rotation φ ↦ φ + 2t.
    SphereRotation,
}

impl FlowCatalogEntry {
    /// Catalog lookup by Hamiltonian.
    pub fn for_hamiltonian(kind: BackendKind, h: &FieldExpr) -> Result<Self> {
        match (kind, h) {
            (BackendKind::Torus2, FieldExpr::Cos { axis: 0, freq: 1 }) => Ok(Self::CosShear { dims: 2 }),
            (BackendKind::Torus4, FieldExpr::Cos { axis: 0, freq: 1 }) => Ok(Self::CosShear { dims: 4 }),
            (BackendKind::Sphere2, FieldExpr::SphereZ) => Ok(Self::SphereRotation),
            _ => Err(Error::Unsupported(format!(
                "no closed-form flow for H = {} on {}",
                h.describe(),
                kind.name()
            ))),
        }
    }

    pub fn hamiltonian(&self) -> Option<FieldExpr> {
        match self {
            Self::CosShear { .. } => Some(FieldExpr::Cos { axis: 0, freq: 1 }),
            Self::Translation { .. } => None,
            Self::SphereRotation => Some(FieldExpr::SphereZ),
        }
    }

    pub fn apply(&self, t: f64, p: &[f64]) -> Vec<f64> {
        let mut q = p.to_vec();
        match self {
            Self::CosShear { .. } => {
                q[1] = (p[1] + t * (2.0 * PI * p[0]).sin()).rem_euclid(1.0);
            }
            Self::Translation { velocity } => {
                for (qi, v) in q.iter_mut().zip(velocity) {
                    *qi = (*qi + t * v).rem_euclid(1.0);
                }
            }
            Self::SphereRotation => {
                q[0] = (p[0] + 2.0 * t).rem_euclid(2.0 * PI);
            }
        }
        q
    }

    pub fn jacobian(&self, t: f64, p: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::identity(p.len(), p.len());
        if let Self::CosShear { .. } = self {
            m[(1, 0)] = 2.0 * PI * t * (2.0 * PI * p[0]).cos();
        }
        m
    }

    /// Periods of the closed orbits on H⁻¹(E), shortest first.
    pub fn periods(&self, energy: f64) -> Result<Vec<f64>> {
        match self {
            Self::CosShear { .. } | Self::SphereRotation => {
                if energy.abs() >= 1.0 {
                    let critical = if energy >= 1.0 { 1.0 } else { -1.0 };
                    return Err(Error::CriticalLevel { level: energy, critical, tol: 0.0 });
                }
                Ok(if matches!(self, Self::SphereRotation) {
                    vec![PI]
                } else {
                    vec![1.0 / (1.0 - energy * energy).sqrt()]
                })
            }
            Self::Translation { velocity } => {
                let ints: Option<Vec<i64>> = velocity
                    .iter()
                    .map(|v| if v.fract() == 0.0 { Some(v.abs() as i64) } else { None })
                    .collect();
                Ok(match ints {
                    Some(ints) if ints.iter().any(|&i| i != 0) => {
                        let g = ints.iter().fold(0, |a, &b| gcd(a, b));
                        vec![1.0 / g as f64]
                    }
                    _ => Vec::new(),
                })
            }
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Apply the time-t map of a catalog flow pointwise.
pub fn exact_flow(entry: &FlowCatalogEntry, t: f64, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points.iter().map(|p| entry.apply(t, p)).collect()
}
