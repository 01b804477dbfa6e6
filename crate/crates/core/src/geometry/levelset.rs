use super::{Lattice, ScalarField, SymplecticBackend};
use crate::quadrature::gauss_legendre;
use crate::{Error, Result};
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct LevelSetVolume {
    pub value: f64,
    /// Richardson estimate of the bias left in the step-δ derivative
    pub error_estimate: f64,
}

struct Sample {
    value: f64,
    weight: f64,
    grad: f64,
}

/// Liouville measure of H⁻¹(E) as dV/dE, V(E) = Liouville volume of {H ≤ E}.
///
/// Closed-form fields are resampled on a fine grid (`refine` scales it).
pub fn levelset_liouville_volume(h: &ScalarField, energy: f64, backend: &SymplecticBackend) -> Result<LevelSetVolume> {
    levelset_volume_refined(h, energy, backend, 1)
}

pub(crate) fn levelset_volume_refined(
    h: &ScalarField,
    energy: f64,
    backend: &SymplecticBackend,
    refine: usize,
) -> Result<LevelSetVolume> {
    let (samples, spacing) = sample(h, backend, refine)?;
    let gmax = samples.iter().fold(0.0f64, |m, s| m.max(s.grad));
    let lo = samples.iter().fold(f64::INFINITY, |m, s| m.min(s.value));
    let hi = samples.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.value));
    let range = hi - lo;
    if gmax == 0.0 || range <= 0.0 {
        return Err(Error::CriticalLevel { level: energy, critical: lo, tol: 0.0 });
    }
    let tol = 0.05 * range;
    let mut critical = vec![lo, hi];
    critical.extend(samples.iter().filter(|s| s.grad < 0.02 * gmax).map(|s| s.value));
    let nearest = critical
        .iter()
        .cloned()
        .min_by(|a, b| (a - energy).abs().total_cmp(&(b - energy).abs()))
        .unwrap();
    if (nearest - energy).abs() < tol || energy < lo || energy > hi {
        return Err(Error::CriticalLevel { level: energy, critical: nearest, tol });
    }

    let volume = |e: f64, eps: f64| -> f64 {
        samples.iter().map(|s| s.weight / (1.0 + ((s.value - e) / eps).exp())).sum()
    };
    // the smoothing width has to cover the gaps between sampled values
    let delta = (0.02 * range).max(gmax * spacing);
    let deriv = |d: f64| (volume(energy + d, d / 2.0) - volume(energy - d, d / 2.0)) / (2.0 * d);
    let fine = deriv(delta);
    let coarse = deriv(2.0 * delta);
    // both estimates carry an O(δ²) bias; extrapolate it away
    Ok(LevelSetVolume { value: (4.0 * fine - coarse) / 3.0, error_estimate: (fine - coarse).abs() / 3.0 })
}

fn sample(h: &ScalarField, backend: &SymplecticBackend, refine: usize) -> Result<(Vec<Sample>, f64)> {
    let pf: f64 = (0..backend.n).map(|i| backend.omega[(2 * i, 2 * i + 1)]).product();
    match (&backend.lattice, &h.expr) {
        (Lattice::Torus(grid), Some(expr)) => {
            let m = refine * if grid.dims == 2 { 1024 } else { 24 };
            let cell = (1.0 / m as f64).powi(grid.dims as i32);
            let total = m.pow(grid.dims as u32);
            let samples = (0..total)
                .map(|i| {
                    let mut p = vec![0.0; grid.dims];
                    let mut r = i;
                    for mu in (0..grid.dims).rev() {
                        p[mu] = ((r % m) as f64 + 0.5) / m as f64;
                        r /= m;
                    }
                    let g = expr.grad(&p);
                    Sample { value: expr.eval(&p), weight: pf * cell, grad: g.iter().map(|x| x * x).sum::<f64>().sqrt() }
                })
                .collect();
            Ok((samples, 1.0 / m as f64))
        }
        (Lattice::Torus(grid), None) => {
            if refine != 1 {
                return Err(Error::Unsupported("sampled fields cannot be refined".into()));
            }
            let samples = (0..grid.sites)
                .map(|s| {
                    let g: f64 = (0..grid.dims)
                        .map(|mu| {
                            let d = (h.values[grid.shift(s, mu, 1)] - h.values[grid.shift(s, mu, -1)]) / (2.0 * grid.h);
                            d * d
                        })
                        .sum();
                    Sample { value: h.values[s], weight: backend.liouville_measure(s), grad: g.sqrt() }
                })
                .collect();
            Ok((samples, grid.h))
        }
        (Lattice::Sphere(_), Some(expr)) => {
            let nz = 400 * refine;
            let (z, w) = gauss_legendre(nz);
            let nphi = 400 * refine;
            let mut out = Vec::with_capacity(nz * nphi);
            for (zi, wi) in z.iter().zip(&w) {
                for j in 0..nphi {
                    let p = [2.0 * PI * j as f64 / nphi as f64, *zi];
                    let g = expr.grad(&p);
                    out.push(Sample {
                        value: expr.eval(&p),
                        weight: pf * wi * 2.0 * PI / nphi as f64,
                        grad: (g[0] * g[0] + g[1] * g[1]).sqrt(),
                    });
                }
            }
            Ok((out, 2.0 / nz as f64))
        }
        (Lattice::Sphere(_), None) => Err(Error::Unsupported("sphere level sets need a closed-form field".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_backend, BackendSpec, FieldExpr};
    use super::*;

    /// Independent oracle: V(E) = 2π(1 − arccos(E)/π) for H = cos 2πx on T².
    fn cos_oracle(e: f64) -> f64 {
        2.0 / (1.0 - e * e).sqrt()
    }

    #[test]
    fn cosine_level_sets_match_arccos_formula() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let h = ScalarField::from_expr(&b, FieldExpr::Cos { axis: 0, freq: 1 });
        for e in [0.0, 0.3, -0.5] {
            let v = levelset_liouville_volume(&h, e, &b).unwrap();
            assert!((v.value - cos_oracle(e)).abs() < 2e-3 * cos_oracle(e), "E={e}: {}", v.value);
            assert!(v.error_estimate < 1e-2);
        }
    }

    #[test]
    fn refinement_changes_less_than_one_percent() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let h = ScalarField::from_expr(&b, FieldExpr::Cos { axis: 0, freq: 1 });
        let a = levelset_volume_refined(&h, 0.0, &b, 1).unwrap().value;
        let c = levelset_volume_refined(&h, 0.0, &b, 2).unwrap().value;
        assert!((a - c).abs() < 0.01 * c);
    }

    #[test]
    fn constant_and_critical_levels_are_rejected() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let c = ScalarField::constant(&b, 1.0);
        assert!(matches!(levelset_liouville_volume(&c, 1.0, &b), Err(Error::CriticalLevel { .. })));
        let h = ScalarField::from_expr(&b, FieldExpr::Cos { axis: 0, freq: 1 });
        match levelset_liouville_volume(&h, 0.99, &b) {
            Err(Error::CriticalLevel { critical, .. }) => assert!((critical - 1.0).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sphere_height_level_sets() {
        // V(E) = π(E + 1) for ω = ½ dφ∧dζ
        let b = build_backend(&BackendSpec::sphere(4)).unwrap();
        let h = ScalarField::from_expr(&b, FieldExpr::SphereZ);
        let v = levelset_liouville_volume(&h, 0.2, &b).unwrap();
        assert!((v.value - PI).abs() < 1e-3, "{}", v.value);
    }

    #[test]
    fn sampled_field_without_expression_still_works() {
        let b = build_backend(&BackendSpec::torus2(64)).unwrap();
        let h = ScalarField::from_expr(&b, FieldExpr::Cos { axis: 0, freq: 1 });
        let raw = ScalarField::from_values(&b, h.values.clone()).unwrap();
        let v = levelset_liouville_volume(&raw, 0.0, &b).unwrap();
        assert!((v.value - 2.0).abs() < 0.02, "{}", v.value);
    }
}
