use super::{BackendKind, StructureRecipe, SymplecticBackend};
use crate::{Error, Result};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Coefficients of the non-integrable 4-torus preset.
const MIXING_COS: f64 = 0.3;
const MIXING_SIN: f64 = 0.2;

/// Block-diagonal J with J∂x = ∂y in each symplectic plane.
pub fn standard_complex_structure(n: usize) -> DMatrix<f64> {
    let d = 2 * n;
    let mut j = DMatrix::zeros(d, d);
    for i in 0..n {
        j[(2 * i, 2 * i + 1)] = -1.0;
        j[(2 * i + 1, 2 * i)] = 1.0;
    }
    j
}

/// Metric fed to the polar construction for the varying recipes.
pub fn preset_metric(kind: BackendKind, recipe: &StructureRecipe, x: &[f64]) -> DMatrix<f64> {
    let d = 2 * kind.n();
    match recipe {
        StructureRecipe::Standard => DMatrix::identity(d, d) * (2.0 * PI),
        StructureRecipe::Conformal { amplitude } => {
            DMatrix::identity(d, d) * (2.0 * PI * (amplitude * (2.0 * PI * x[0]).cos()).exp())
        }
        StructureRecipe::Mixing => {
            // axes (x1, y1, x2, y2); couples y1 with x2 and y2
            let mut g = DMatrix::identity(4, 4);
            let a = MIXING_COS * (2.0 * PI * x[0]).cos();
            let b = MIXING_SIN * (2.0 * PI * x[0]).sin();
            g[(1, 2)] = a;
            g[(2, 1)] = a;
            g[(1, 3)] = b;
            g[(3, 1)] = b;
            g * (2.0 * PI)
        }
    }
}

/// Compatible J from a metric: J = −A(−A²)^{-1/2} with A = G⁻¹ω, evaluated in
/// G-orthonormal coordinates so the square root is of a symmetric matrix.
pub fn compatible_j_from_metric(omega: &DMatrix<f64>, metric: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let d = omega.nrows();
    if omega.determinant().abs() < 1e-300 {
        return Err(Error::Invalid("ω is degenerate".into()));
    }
    metric
        .iter()
        .enumerate()
        .map(|(site, g)| {
            let chol = nalgebra::Cholesky::new(g.clone()).ok_or_else(|| Error::Incompatible {
                site,
                reason: "metric not positive definite".into(),
            })?;
            let l = chol.l();
            let l_inv = l.clone().try_inverse().expect("Cholesky factor invertible");
            let a = &l_inv * omega * l_inv.transpose();
            let p = a.transpose() * &a;
            let eig = nalgebra::SymmetricEigen::new(p);
            if eig.eigenvalues.min() <= 0.0 {
                return Err(Error::Numerical(format!("singular polar factor at site {site}")));
            }
            let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
            let p_inv_sqrt = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
            let jt = -(&a * p_inv_sqrt);
            let j = l_inv.transpose() * jt * l.transpose();
            debug_assert_eq!(j.nrows(), d);
            Ok(j)
        })
        .collect()
}

/// max over sites and coordinate pairs of |N(∂_a, ∂_b)|_β, derivatives by centered differences.
pub fn nijenhuis_norm(backend: &SymplecticBackend) -> Result<f64> {
    let grid = backend
        .torus()
        .ok_or_else(|| Error::Unsupported("Nijenhuis tensor is evaluated on tori only".into()))?;
    let d = backend.real_dim();
    if backend.is_constant_structure() {
        return Ok(0.0);
    }
    let mut worst: f64 = 0.0;
    for s in 0..grid.sites {
        let j = backend.j_at(s);
        let beta = backend.beta_at(s);
        let dj: Vec<DMatrix<f64>> = (0..d)
            .map(|mu| {
                (backend.j_at(grid.shift(s, mu, 1)) - backend.j_at(grid.shift(s, mu, -1))) / (2.0 * grid.h)
            })
            .collect();
        for a in 0..d {
            for b in (a + 1)..d {
                let mut nv = nalgebra::DVector::zeros(d);
                for c in 0..d {
                    let mut v = 0.0;
                    for e in 0..d {
                        v += j[(e, a)] * dj[e][(c, b)] - j[(e, b)] * dj[e][(c, a)];
                        v += j[(c, e)] * (dj[b][(e, a)] - dj[a][(e, b)]);
                    }
                    nv[c] = v;
                }
                let norm = (nv.transpose() * &beta * &nv)[(0, 0)].max(0.0).sqrt();
                worst = worst.max(norm);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::super::{build_backend, BackendSpec};
    use super::*;

    fn omega2() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 2.0 * PI, -2.0 * PI, 0.0])
    }

    #[test]
    fn polar_of_standard_metric_is_standard_j() {
        let g = DMatrix::identity(2, 2) * (2.0 * PI);
        let j = compatible_j_from_metric(&omega2(), &[g]).unwrap().remove(0);
        assert!((j - standard_complex_structure(1)).amax() < 1e-15);
    }

    #[test]
    fn conformal_metric_keeps_j_in_dimension_two() {
        for x in [0.0, 0.13, 0.5, 0.77] {
            let g = preset_metric(BackendKind::Torus2, &StructureRecipe::Conformal { amplitude: 0.3 }, &[x, 0.2]);
            let j = compatible_j_from_metric(&omega2(), &[g]).unwrap().remove(0);
            assert!((j - standard_complex_structure(1)).amax() < 1e-14);
        }
    }

    #[test]
    fn anisotropic_metric_gives_compatible_j() {
        let g = DMatrix::from_row_slice(2, 2, &[3.0, 0.7, 0.7, 1.5]);
        let j = compatible_j_from_metric(&omega2(), &[g.clone()]).unwrap().remove(0);
        assert!((&j * &j + DMatrix::identity(2, 2)).amax() < 1e-14);
        let beta = omega2() * &j;
        assert!((&beta - beta.transpose()).amax() < 1e-12);
        // in dimension two β is the conformal rescaling of G with det β = det ω
        let ratio = beta[(0, 0)] / g[(0, 0)];
        assert!((&beta - &g * ratio).amax() < 1e-12);
        assert!((beta.determinant() - 4.0 * PI * PI).abs() < 1e-10);
    }

    #[test]
    fn non_positive_metric_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(compatible_j_from_metric(&omega2(), &[g]), Err(Error::Incompatible { .. })));
    }

    #[test]
    fn constant_structures_are_integrable() {
        assert!(nijenhuis_norm(&build_backend(&BackendSpec::torus2(16)).unwrap()).unwrap() <= 1e-12);
        assert!(nijenhuis_norm(&build_backend(&BackendSpec::torus4(8)).unwrap()).unwrap() <= 1e-12);
        let conformal = BackendSpec::torus2(16).with_recipe(StructureRecipe::Conformal { amplitude: 0.3 });
        assert!(nijenhuis_norm(&build_backend(&conformal).unwrap()).unwrap() <= 1e-12);
    }

    #[test]
    fn mixing_preset_is_not_integrable_and_refines_stably() {
        let vals: Vec<f64> = [8, 10, 12]
            .iter()
            .map(|&n| nijenhuis_norm(&build_backend(&BackendSpec::torus4_mixing(n)).unwrap()).unwrap())
            .collect();
        assert!(vals.iter().all(|&v| v > 1e-3), "{vals:?}");
        // sampled maxima of a smooth field plus O(h²) difference error
        let spread = (vals[2] - vals[1]).abs();
        assert!(spread < (vals[1] - vals[0]).abs().max(0.05 * vals[2]), "{vals:?}");
    }

    #[test]
    fn sphere_has_no_nijenhuis_evaluation() {
        assert!(nijenhuis_norm(&build_backend(&BackendSpec::sphere(4)).unwrap()).is_err());
    }
}
