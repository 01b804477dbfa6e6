//! Monopole harmonics on the sphere of area 2π.
//!
//! Y_{q,l,m}(φ,ζ) = √((2l+1)/2π) · d^l_{m,q}(arccos ζ) · e^{−imφ}, l ≥ |q|,
//! orthonormal for the area form ½ dφ dζ. Half-integers are carried as
//! doubled integers. The phase convention makes the l = q level holomorphic
//! for the complex structure compatible with ω, as on the tori.

use crate::geometry::SphereGrid;
use crate::{Error, Result, C64};
use std::f64::consts::PI;

fn ln_factorial(n: i64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn ln_binomial(n: i64, r: i64) -> f64 {
    ln_factorial(n) - ln_factorial(r) - ln_factorial(n - r)
}

/// Jacobi polynomial P_n^{(a,b)}(x) by the three-term recurrence.
fn jacobi(n: i64, a: f64, b: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut p0 = 1.0;
    let mut p1 = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0;
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + a + b;
        let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (c * (c - 2.0) * x + a * a - b * b);
        let a3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
        let p2 = (a2 * p1 - a3 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Wigner small-d d^j_{m'm} at polar angle with cos θ = ζ; arguments doubled.
pub fn wigner_small_d(j2: i64, mp2: i64, m2: i64, zeta: f64) -> f64 {
    if mp2.abs() > j2 || m2.abs() > j2 || (j2 - m2) % 2 != 0 || (j2 - mp2) % 2 != 0 {
        return 0.0;
    }
    let jpm = (j2 + m2) / 2;
    let jmm = (j2 - m2) / 2;
    let jpmp = (j2 + mp2) / 2;
    let jmmp = (j2 - mp2) / 2;
    let k = jpm.min(jmm).min(jpmp).min(jmmp);
    let diff = (mp2 - m2) / 2;
    let (a, lambda) = if k == jpm {
        (diff, diff)
    } else if k == jmm {
        (-diff, 0)
    } else if k == jpmp {
        (-diff, 0)
    } else {
        (diff, diff)
    };
    let b = j2 - 2 * k - a;
    let ln_c = ln_binomial(j2 - k, k + a) - ln_binomial(k + b, b);
    let sign = if lambda.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let half_sin = ((1.0 - zeta) / 2.0).max(0.0).sqrt();
    let half_cos = ((1.0 + zeta) / 2.0).max(0.0).sqrt();
    sign * (0.5 * ln_c).exp() * half_sin.powi(a as i32) * half_cos.powi(b as i32) * jacobi(k, a as f64, b as f64, zeta)
}

/// Truncated basis of charge-q harmonics with l in [lmin, lmax], ordered by (l, m).
#[derive(Clone, Debug, PartialEq)]
pub struct MonopoleBasis {
    pub twice_q: i64,
    pub twice_lmin: i64,
    pub twice_lmax: i64,
    modes: Vec<(i64, i64)>,
}

impl MonopoleBasis {
    pub fn new(twice_q: i64, twice_lmin: i64, twice_lmax: i64) -> Self {
        assert!(twice_lmin >= twice_q.abs() && (twice_lmin - twice_q) % 2 == 0);
        let mut modes = Vec::new();
        let mut l2 = twice_lmin;
        while l2 <= twice_lmax {
            let mut m2 = -l2;
            while m2 <= l2 {
                modes.push((l2, m2));
                m2 += 2;
            }
            l2 += 2;
        }
        Self { twice_q, twice_lmin, twice_lmax, modes }
    }

    /// Sections of L^⊗k: charge g = k/2, levels l = g .. g + truncation.
    pub fn for_power(k: i64, truncation: usize) -> Self {
        Self::new(k, k, k + 2 * truncation as i64)
    }

    pub(crate) fn for_layout(k: i64, truncation: usize, len: usize) -> Result<Self> {
        let b = Self::for_power(k, truncation);
        if b.len() != len {
            return Err(Error::Mismatch(format!("sphere section of length {len}, basis has {}", b.len())));
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// (2l, 2m) of a mode.
    pub fn mode(&self, i: usize) -> (i64, i64) {
        self.modes[i]
    }

    pub fn index_of(&self, l2: i64, m2: i64) -> Option<usize> {
        self.modes.iter().position(|&x| x == (l2, m2))
    }

    /// Eigenvalue of the Bochner Laplacian ∇*∇ on this mode: (l(l+1) − q²)/R², R² = ½.
    pub fn bochner_eigenvalue(&self, i: usize) -> f64 {
        let (l2, _) = self.modes[i];
        let l = l2 as f64 / 2.0;
        let q = self.twice_q as f64 / 2.0;
        2.0 * (l * (l + 1.0) - q * q)
    }

    pub fn eval(&self, i: usize, phi: f64, zeta: f64) -> C64 {
        let (l2, m2) = self.modes[i];
        let norm = ((l2 as f64 + 1.0) / (2.0 * PI)).sqrt();
        C64::from_polar(norm * wigner_small_d(l2, m2, self.twice_q, zeta), -(m2 as f64) / 2.0 * phi)
    }

    fn radial_table(&self, grid: &SphereGrid) -> Vec<Vec<f64>> {
        self.modes
            .iter()
            .map(|&(l2, m2)| {
                let norm = ((l2 as f64 + 1.0) / (2.0 * PI)).sqrt();
                grid.zeta.iter().map(|&z| norm * wigner_small_d(l2, m2, self.twice_q, z)).collect()
            })
            .collect()
    }

    fn m_values(&self) -> Vec<i64> {
        let mut ms: Vec<i64> = self.modes.iter().map(|&(_, m2)| m2).collect();
        ms.sort_unstable();
        ms.dedup();
        ms
    }

    /// Values at the grid nodes (index iz·nφ + iφ).
    pub fn synthesize(&self, coeffs: &[C64], grid: &SphereGrid) -> Vec<C64> {
        let table = self.radial_table(grid);
        let nz = grid.zeta.len();
        let nphi = grid.phi.len();
        let ms = self.m_values();
        let mut partial = vec![vec![C64::new(0.0, 0.0); nz]; ms.len()];
        for (i, &(_, m2)) in self.modes.iter().enumerate() {
            if coeffs[i] == C64::new(0.0, 0.0) {
                continue;
            }
            let mi = ms.binary_search(&m2).unwrap();
            for iz in 0..nz {
                partial[mi][iz] += coeffs[i] * table[i][iz];
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); nz * nphi];
        for (mi, &m2) in ms.iter().enumerate() {
            let phases: Vec<C64> = grid.phi.iter().map(|&p| C64::from_polar(1.0, -(m2 as f64) / 2.0 * p)).collect();
            for iz in 0..nz {
                let a = partial[mi][iz];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for ip in 0..nphi {
                    out[iz * nphi + ip] += a * phases[ip];
                }
            }
        }
        out
    }

    /// L² projection of node values onto the basis.
    pub fn analyze(&self, values: &[C64], grid: &SphereGrid) -> Vec<C64> {
        let table = self.radial_table(grid);
        let nz = grid.zeta.len();
        let nphi = grid.phi.len();
        let ms = self.m_values();
        let dphi = 2.0 * PI / nphi as f64;
        let fourier: Vec<Vec<C64>> = ms
            .iter()
            .map(|&m2| {
                let phases: Vec<C64> = grid.phi.iter().map(|&p| C64::from_polar(dphi, m2 as f64 / 2.0 * p)).collect();
                (0..nz).map(|iz| (0..nphi).map(|ip| phases[ip] * values[iz * nphi + ip]).sum()).collect()
            })
            .collect();
        self.modes
            .iter()
            .enumerate()
            .map(|(i, &(_, m2))| {
                let mi = ms.binary_search(&m2).unwrap();
                (0..nz).map(|iz| fourier[mi][iz] * (0.5 * grid.zeta_weights[iz] * table[i][iz])).sum()
            })
            .collect()
    }

    pub fn galerkin_multiply(&self, coeffs: &[C64], f_values: &[f64], grid: &SphereGrid) -> Vec<C64> {
        let mut v = self.synthesize(coeffs, grid);
        for (x, f) in v.iter_mut().zip(f_values) {
            *x *= f;
        }
        self.analyze(&v, grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_backend, BackendSpec};

    /// Wigner's explicit sum, used as an independent oracle.
    fn wigner_sum(j2: i64, mp2: i64, m2: i64, theta: f64) -> f64 {
        let f = |x: i64| ln_factorial(x).exp();
        let (j, mp, m) = (j2, mp2, m2);
        let pre = (f((j + mp) / 2) * f((j - mp) / 2) * f((j + m) / 2) * f((j - m) / 2)).sqrt();
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let mut total = 0.0;
        for t in 0..=j {
            let args = [(j + m) / 2 - t, t, (mp - m) / 2 + t, (j - mp) / 2 - t];
            if args.iter().any(|&x| x < 0) {
                continue;
            }
            let sign = if ((mp - m) / 2 + t).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let denom: f64 = args.iter().map(|&x| f(x)).product();
            let cp = (j2 + (m2 - mp2) / 2 - 2 * t) as i32;
            let sp = ((mp2 - m2) / 2 + 2 * t) as i32;
            total += sign * pre / denom * c.powi(cp) * s.powi(sp);
        }
        total
    }

    #[test]
    fn small_d_matches_wigner_sum() {
        for j2 in 0..=9 {
            for mp2 in (-j2..=j2).step_by(2) {
                for m2 in (-j2..=j2).step_by(2) {
                    for theta in [0.3, 1.1, 2.0, 2.9] {
                        let a = wigner_small_d(j2, mp2, m2, f64::cos(theta));
                        let b = wigner_sum(j2, mp2, m2, theta);
                        assert!((a - b).abs() < 1e-12, "j2={j2} mp2={mp2} m2={m2}: {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn harmonics_are_orthonormal_under_quadrature() {
        let b = build_backend(&BackendSpec::sphere(6)).unwrap();
        let grid = b.sphere().unwrap();
        for k in [1, 2, 5] {
            let basis = MonopoleBasis::for_power(k, 6);
            for i in 0..basis.len() {
                let mut e = vec![C64::new(0.0, 0.0); basis.len()];
                e[i] = C64::new(1.0, 0.0);
                let back = basis.analyze(&basis.synthesize(&e, grid), grid);
                for (j, v) in back.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((v - want).norm() < 1e-12, "k={k} {i} {j} {v}");
                }
            }
        }
    }

    #[test]
    fn lowest_level_is_the_closed_form() {
        // d^g_{m,g} = √C(2g, g−m) sin^{g−m}(θ/2) cos^{g+m}(θ/2)
        let g2 = 4;
        for m2 in (-g2..=g2).step_by(2) {
            let zeta = 0.37;
            let (s, c) = (((1.0 - zeta) / 2.0f64).sqrt(), ((1.0 + zeta) / 2.0f64).sqrt());
            let gm = (g2 - m2) / 2;
            let gp = (g2 + m2) / 2;
            let want = ln_binomial(g2, gm).exp().sqrt() * s.powi(gm as i32) * c.powi(gp as i32);
            assert!((wigner_small_d(g2, m2, g2, zeta) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn counts_and_levels() {
        let b = MonopoleBasis::for_power(3, 2);
        assert_eq!(b.len(), 4 + 6 + 8);
        assert_eq!(b.mode(0), (3, -3));
        assert!(b.bochner_eigenvalue(0) - 3.0 < 1e-15);
        assert!((b.bochner_eigenvalue(4) - (2.0 * (2.5 * 3.5 - 2.25))).abs() < 1e-14);
    }

    #[test]
    fn galerkin_multiplication_by_constant_is_exact() {
        let b = build_backend(&BackendSpec::sphere(4)).unwrap();
        let grid = b.sphere().unwrap();
        let basis = MonopoleBasis::for_power(2, 4);
        let coeffs: Vec<C64> = (0..basis.len()).map(|i| C64::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05)).collect();
        let out = basis.galerkin_multiply(&coeffs, &vec![2.5; grid.sites], grid);
        for (a, c) in out.iter().zip(&coeffs) {
            assert!((a - c * 2.5).norm() < 1e-12);
        }
    }
}
