//! The prequantum bundle L^⊗k: Peierls link phases with a magnetic boundary
//! cocycle on tori, the charge-k monopole sector on the sphere.

mod monopole;
mod section;

pub use monopole::{wigner_small_d, MonopoleBasis};
pub use section::{covariant_gradient, entry_weights, inner_product, multiply, SectionLayout, SectionVector};

use crate::geometry::{Lattice, SymplecticBackend};
use crate::{Error, Result, C64};
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub enum GaugeData {
    /// Per axis, per site: the edge from the site to its forward neighbour.
    Lattice {
        link_phases: Vec<Vec<C64>>,
        boundary_cocycle: Vec<Vec<C64>>,
        transports: Vec<Vec<C64>>,
    },
    /// Monopole strength g = twice_g / 2.
    Monopole { twice_g: i64 },
}

/// L^⊗k realized on a backend.
///
/// Link phases are exp(ik∫A) for A = 2π Σ x_p dy_p. Covariant differences
/// transport ψ(x+e_μ) back to x with conj(link)·cocycle; the cocycle is the
/// transition function e^{2πik y_p} on edges that wrap the x_p axis.
#[derive(Clone, Debug)]
pub struct GaugeRealization {
    pub k: i64,
    /// Form degree of each fiber component; length is the fiber rank.
    pub degrees: Vec<u8>,
    pub data: GaugeData,
}

/// Build and verify L^⊗k. `k = 0` gives the trivial bundle.
pub fn realize_prequantum(backend: &SymplecticBackend, k: i64) -> Result<GaugeRealization> {
    if k < 0 {
        return Err(Error::Invalid(format!("tensor power must be nonnegative, got {k}")));
    }
    match &backend.lattice {
        Lattice::Sphere(_) => {
            Ok(GaugeRealization { k, degrees: vec![0], data: GaugeData::Monopole { twice_g: k } })
        }
        Lattice::Torus(grid) => {
            backend.spec.check_resolution(k as usize)?;
            let kf = k as f64;
            let mut link_phases = Vec::with_capacity(grid.dims);
            let mut boundary_cocycle = Vec::with_capacity(grid.dims);
            for mu in 0..grid.dims {
                let mut links = vec![C64::new(1.0, 0.0); grid.sites];
                let mut cocycle = vec![C64::new(1.0, 0.0); grid.sites];
                for s in 0..grid.sites {
                    if mu % 2 == 1 {
                        let x = grid.coord(s, mu - 1);
                        links[s] = C64::from_polar(1.0, kf * 2.0 * PI * x * grid.h);
                    } else if grid.index_along(s, mu) == grid.axis_len - 1 {
                        let y = grid.coord(s, mu + 1);
                        cocycle[s] = C64::from_polar(1.0, 2.0 * PI * kf * y);
                    }
                }
                link_phases.push(links);
                boundary_cocycle.push(cocycle);
            }
            let transports = combine(&link_phases, &boundary_cocycle);
            let gauge = GaugeRealization {
                k,
                degrees: vec![0],
                data: GaugeData::Lattice { link_phases, boundary_cocycle, transports },
            };
            let defect = gauge.plaquette_defect(backend)?;
            if defect > 1e-12 {
                return Err(Error::Numerical(format!("plaquette flux defect {defect:e}")));
            }
            let cocycle = gauge.cocycle_consistency_defect(backend)?;
            if cocycle > 1e-12 {
                return Err(Error::Numerical(format!("cocycle defect {cocycle:e}")));
            }
            Ok(gauge)
        }
    }
}

fn combine(links: &[Vec<C64>], cocycle: &[Vec<C64>]) -> Vec<Vec<C64>> {
    links
        .iter()
        .zip(cocycle)
        .map(|(l, c)| l.iter().zip(c).map(|(l, c)| l.conj() * c).collect())
        .collect()
}

impl GaugeRealization {
    pub fn fiber_rank(&self) -> usize {
        self.degrees.len()
    }

    /// Same bundle twisted by a graded fiber (used for 𝓔⊗L^⊗k).
    pub fn with_fiber(mut self, degrees: Vec<u8>) -> Self {
        self.degrees = degrees;
        self
    }

    pub fn monopole_twice_g(&self) -> Option<i64> {
        match self.data {
            GaugeData::Monopole { twice_g } => Some(twice_g),
            _ => None,
        }
    }

    /// Factor multiplying ψ(x+e_μ) in the covariant difference at x.
    #[inline]
    pub fn transport(&self, mu: usize, s: usize) -> C64 {
        match &self.data {
            GaugeData::Lattice { transports, .. } => transports[mu][s],
            GaugeData::Monopole { .. } => panic!("the sphere has no lattice links"),
        }
    }

    pub fn link_phase(&self, mu: usize, s: usize) -> C64 {
        match &self.data {
            GaugeData::Lattice { link_phases, .. } => link_phases[mu][s],
            GaugeData::Monopole { .. } => panic!("the sphere has no lattice links"),
        }
    }

    pub fn boundary_cocycle(&self, mu: usize, s: usize) -> C64 {
        match &self.data {
            GaugeData::Lattice { boundary_cocycle, .. } => boundary_cocycle[mu][s],
            GaugeData::Monopole { .. } => panic!("the sphere has no lattice links"),
        }
    }

    fn lattice_grid<'a>(&self, backend: &'a SymplecticBackend) -> Result<&'a crate::geometry::TorusGrid> {
        match (&self.data, backend.torus()) {
            (GaugeData::Lattice { transports, .. }, Some(g)) if transports.len() == g.dims && transports[0].len() == g.sites => Ok(g),
            (GaugeData::Lattice { .. }, _) => Err(Error::Mismatch("gauge was built for another backend".into())),
            _ => Err(Error::Unsupported("monopole sector has no lattice data".into())),
        }
    }

    /// Counterclockwise product of the four effective link phases of the
    /// (μ,ν) plaquette based at site s; equals exp(ik·Φ).
    pub fn plaquette_phase(&self, backend: &SymplecticBackend, mu: usize, nu: usize, s: usize) -> Result<C64> {
        let grid = self.lattice_grid(backend)?;
        let link = |a: usize, site: usize| self.transport(a, site).conj();
        let s_mu = grid.shift(s, mu, 1);
        let s_nu = grid.shift(s, nu, 1);
        Ok(link(mu, s) * link(nu, s_mu) * link(mu, s_nu).conj() * link(nu, s).conj())
    }

    /// max |plaquette − exp(ik·Ω_{μν}h²)| over all plaquettes, by traversal.
    pub fn plaquette_defect(&self, backend: &SymplecticBackend) -> Result<f64> {
        let grid = self.lattice_grid(backend)?;
        let mut worst: f64 = 0.0;
        for mu in 0..grid.dims {
            for nu in (mu + 1)..grid.dims {
                let expected = C64::from_polar(1.0, self.k as f64 * backend.omega[(mu, nu)] * grid.h * grid.h);
                for s in 0..grid.sites {
                    worst = worst.max((self.plaquette_phase(backend, mu, nu, s)? - expected).norm());
                }
            }
        }
        Ok(worst)
    }

    /// Total flux through the (μ,ν) coordinate 2-torus through the origin.
    pub fn plane_flux(&self, backend: &SymplecticBackend, mu: usize, nu: usize) -> Result<f64> {
        let grid = self.lattice_grid(backend)?;
        let mut total = 0.0;
        for s in 0..grid.sites {
            let on_plane = (0..grid.dims).all(|a| a == mu || a == nu || grid.index_along(s, a) == 0);
            if on_plane {
                total += self.plaquette_phase(backend, mu, nu, s)?.arg();
            }
        }
        Ok(total)
    }

    /// Transition function for crossing the x_p = 1 face at a chart point.
    fn transition(&self, axis: usize, point: &[f64]) -> C64 {
        if axis % 2 == 0 {
            C64::from_polar(1.0, 2.0 * PI * self.k as f64 * point[axis + 1])
        } else {
            C64::new(1.0, 0.0)
        }
    }

    /// Checks g_μ(p+e_ν)g_ν(p) = g_ν(p+e_μ)g_μ(p) on every boundary site and
    /// that the stored cocycle matches the transition function.
    pub fn cocycle_consistency_defect(&self, backend: &SymplecticBackend) -> Result<f64> {
        let grid = self.lattice_grid(backend)?;
        let mut worst: f64 = 0.0;
        for s in 0..grid.sites {
            let p = grid.point(s);
            for mu in 0..grid.dims {
                if grid.index_along(s, mu) == grid.axis_len - 1 {
                    let mut q = p.clone();
                    q[mu] += grid.h;
                    worst = worst.max((self.boundary_cocycle(mu, s) - self.transition(mu, &q)).norm());
                }
                for nu in 0..grid.dims {
                    if nu == mu {
                        continue;
                    }
                    let mut pn = p.clone();
                    pn[nu] += 1.0;
                    let mut pm = p.clone();
                    pm[mu] += 1.0;
                    let lhs = self.transition(mu, &pn) * self.transition(nu, &p);
                    let rhs = self.transition(nu, &pm) * self.transition(mu, &p);
                    worst = worst.max((lhs - rhs).norm());
                }
            }
        }
        Ok(worst)
    }

    /// Gauge data after ψ ↦ e^{iθ}ψ: transports become e^{iθ(x)}U_μ(x)e^{−iθ(x+e_μ)}.
    pub fn gauge_transformed(&self, backend: &SymplecticBackend, theta: &[f64]) -> Result<GaugeRealization> {
        let grid = self.lattice_grid(backend)?;
        if theta.len() != grid.sites {
            return Err(Error::Mismatch("gauge phase field has the wrong length".into()));
        }
        let GaugeData::Lattice { link_phases, boundary_cocycle, .. } = &self.data else { unreachable!() };
        let links: Vec<Vec<C64>> = (0..grid.dims)
            .map(|mu| {
                (0..grid.sites)
                    .map(|s| link_phases[mu][s] * C64::from_polar(1.0, theta[grid.shift(s, mu, 1)] - theta[s]))
                    .collect()
            })
            .collect();
        let transports = combine(&links, boundary_cocycle);
        Ok(GaugeRealization {
            k: self.k,
            degrees: self.degrees.clone(),
            data: GaugeData::Lattice { link_phases: links, boundary_cocycle: boundary_cocycle.clone(), transports },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_backend, BackendSpec};

    #[test]
    fn torus2_total_flux_is_two_pi_k() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let g = realize_prequantum(&b, 1).unwrap();
        assert!((g.plane_flux(&b, 0, 1).unwrap() - 2.0 * PI).abs() < 1e-12);
        let b = build_backend(&BackendSpec::torus2(32)).unwrap();
        let g = realize_prequantum(&b, 7).unwrap();
        assert!((g.plane_flux(&b, 0, 1).unwrap() - 14.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn torus4_flux_through_generating_tori() {
        let b = build_backend(&BackendSpec::torus4(8)).unwrap();
        let g = realize_prequantum(&b, 3).unwrap();
        assert!((g.plane_flux(&b, 0, 1).unwrap() - 6.0 * PI).abs() < 1e-10);
        assert!((g.plane_flux(&b, 2, 3).unwrap() - 6.0 * PI).abs() < 1e-10);
        for (mu, nu) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert!(g.plane_flux(&b, mu, nu).unwrap().abs() < 1e-10);
        }
        assert!(g.plaquette_defect(&b).unwrap() < 1e-12);
    }

    #[test]
    fn sphere_gets_monopole_sector() {
        let b = build_backend(&BackendSpec::sphere(8)).unwrap();
        assert_eq!(realize_prequantum(&b, 2).unwrap().monopole_twice_g(), Some(2));
    }

    #[test]
    fn gauge_transform_preserves_plaquettes() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let g = realize_prequantum(&b, 2).unwrap();
        let theta: Vec<f64> = (0..b.sites()).map(|s| (s as f64 * 0.7).sin() * 3.0).collect();
        let h = g.gauge_transformed(&b, &theta).unwrap();
        assert!(h.plaquette_defect(&b).unwrap() < 1e-12);
    }

    #[test]
    fn too_coarse_grid_is_refused() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        assert!(matches!(realize_prequantum(&b, 5), Err(Error::Resolution { .. })));
        assert!(realize_prequantum(&b, -1).is_err());
    }
}
