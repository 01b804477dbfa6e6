use super::{GaugeRealization, MonopoleBasis};
use crate::geometry::{Lattice, ScalarField, SymplecticBackend};
use crate::{Error, Result, C64};
use std::sync::Arc;

/// How a flat coefficient vector is split into sites and graded fiber slots.
#[derive(Clone, Debug, PartialEq)]
pub enum SectionLayout {
    /// `sites` points (lattice sites or sphere modes) times a fiber whose
    /// components carry the listed form degrees. Entry index = site·rank + component.
    Product { sites: usize, degrees: Vec<u8> },
    /// Sphere spin-c coefficients: an explicit degree and monopole block per entry.
    Monopole { blocks: Vec<MonopoleBasis>, degrees: Vec<u8> },
}

impl SectionLayout {
    pub fn scalar(sites: usize) -> Self {
        SectionLayout::Product { sites, degrees: vec![0] }
    }

    pub fn len(&self) -> usize {
        match self {
            SectionLayout::Product { sites, degrees } => sites * degrees.len(),
            SectionLayout::Monopole { blocks, .. } => blocks.iter().map(|b| b.len()).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fiber_rank(&self) -> usize {
        match self {
            SectionLayout::Product { degrees, .. } => degrees.len(),
            SectionLayout::Monopole { .. } => 1,
        }
    }

    /// Degree of every entry, in storage order.
    pub fn entry_degrees(&self) -> Vec<u8> {
        match self {
            SectionLayout::Product { sites, degrees } => (0..*sites).flat_map(|_| degrees.iter().cloned()).collect(),
            SectionLayout::Monopole { blocks, degrees } => {
                blocks.iter().zip(degrees).flat_map(|(b, &d)| std::iter::repeat(d).take(b.len())).collect()
            }
        }
    }
}

/// Complex coefficients of a section of 𝓔⊗L^⊗k.
#[derive(Clone, Debug, PartialEq)]
pub struct SectionVector {
    pub values: Vec<C64>,
    pub k: i64,
    pub layout: Arc<SectionLayout>,
}

impl SectionVector {
    pub fn new(values: Vec<C64>, k: i64, layout: Arc<SectionLayout>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Mismatch(format!("{} values for a layout of {}", values.len(), layout.len())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Invalid("non-finite section value".into()));
        }
        Ok(Self { values, k, layout })
    }

    pub fn zeros(k: i64, layout: Arc<SectionLayout>) -> Self {
        Self { values: vec![C64::new(0.0, 0.0); layout.len()], k, layout }
    }

    /// Phase gauge transform ψ ↦ e^{iθ}ψ, site by site.
    pub fn gauge_transformed(&self, theta: &[f64]) -> Result<Self> {
        let rank = self.layout.fiber_rank();
        if theta.len() * rank != self.values.len() {
            return Err(Error::Mismatch("gauge phase field has the wrong length".into()));
        }
        let values = self.values.iter().enumerate().map(|(i, v)| v * C64::from_polar(1.0, theta[i / rank])).collect();
        Ok(Self { values, k: self.k, layout: self.layout.clone() })
    }

    fn check_pair(&self, other: &SectionVector) -> Result<()> {
        if self.k != other.k {
            return Err(Error::Mismatch(format!("k-tags {} and {}", self.k, other.k)));
        }
        if self.layout != other.layout {
            return Err(Error::Mismatch("sections have different layouts".into()));
        }
        Ok(())
    }
}

/// Weight of every entry in the L² inner product.
pub fn entry_weights(backend: &SymplecticBackend, layout: &SectionLayout) -> Result<Vec<f64>> {
    match (&backend.lattice, layout) {
        (Lattice::Torus(g), SectionLayout::Product { sites, degrees }) => {
            if *sites != g.sites {
                return Err(Error::Mismatch(format!("layout has {sites} sites, backend {}", g.sites)));
            }
            Ok((0..*sites).flat_map(|s| std::iter::repeat(backend.site_measure(s)).take(degrees.len())).collect())
        }
        // monopole harmonics are orthonormal: coefficients carry the exact L² product
        (Lattice::Sphere(_), _) => Ok(vec![1.0; layout.len()]),
        _ => Err(Error::Mismatch("layout does not fit the backend".into())),
    }
}

/// ⟨s,t⟩ = Σ s̄·t·√det β·h^{2n}, with the identity fiber metric in the unitary frame.
pub fn inner_product(s: &SectionVector, t: &SectionVector, backend: &SymplecticBackend) -> Result<C64> {
    s.check_pair(t)?;
    let w = entry_weights(backend, &s.layout)?;
    Ok(s.values.iter().zip(&t.values).zip(&w).map(|((a, b), w)| a.conj() * b * w).sum())
}

/// M(f)s. Pointwise on tori; on the sphere the product is projected back onto
/// the truncated monopole basis (Galerkin), block by block.
pub fn multiply(f: &ScalarField, s: &SectionVector, backend: &SymplecticBackend) -> Result<SectionVector> {
    if f.values.len() != backend.sites() {
        return Err(Error::Mismatch("field lives on another backend".into()));
    }
    match (&backend.lattice, s.layout.as_ref()) {
        (Lattice::Torus(_), SectionLayout::Product { degrees, .. }) => {
            let rank = degrees.len();
            let values = s.values.iter().enumerate().map(|(i, v)| v * f.values[i / rank]).collect();
            Ok(SectionVector { values, k: s.k, layout: s.layout.clone() })
        }
        (Lattice::Sphere(grid), SectionLayout::Product { degrees, .. }) if degrees.len() == 1 => {
            let basis = MonopoleBasis::for_layout(s.k, grid.truncation, s.values.len())?;
            let values = basis.galerkin_multiply(&s.values, &f.values, grid);
            Ok(SectionVector { values, k: s.k, layout: s.layout.clone() })
        }
        (Lattice::Sphere(grid), SectionLayout::Monopole { blocks, .. }) => {
            let mut values = Vec::with_capacity(s.values.len());
            let mut start = 0;
            for b in blocks {
                values.extend(b.galerkin_multiply(&s.values[start..start + b.len()], &f.values, grid));
                start += b.len();
            }
            Ok(SectionVector { values, k: s.k, layout: s.layout.clone() })
        }
        _ => Err(Error::Mismatch("layout does not fit the backend".into())),
    }
}

/// Forward covariant differences (U_μ(x)ψ(x+e_μ) − ψ(x))/h, one section per axis.
///
/// Each difference is centered at the edge midpoint x + h/2·e_μ. Fiber
/// components are transported by the line-bundle phase only.
pub fn covariant_gradient(
    s: &SectionVector,
    gauge: &GaugeRealization,
    backend: &SymplecticBackend,
) -> Result<Vec<SectionVector>> {
    if s.k != gauge.k {
        return Err(Error::Mismatch(format!("section has k = {}, gauge k = {}", s.k, gauge.k)));
    }
    let grid = backend
        .torus()
        .ok_or_else(|| Error::Unsupported("sphere sections live in the exact basis; no lattice gradient".into()))?;
    let rank = s.layout.fiber_rank();
    if s.values.len() != grid.sites * rank || rank != gauge.fiber_rank() {
        return Err(Error::Mismatch("section does not match gauge and backend".into()));
    }
    Ok((0..grid.dims)
        .map(|mu| {
            let mut out = vec![C64::new(0.0, 0.0); s.values.len()];
            for site in 0..grid.sites {
                let next = grid.shift(site, mu, 1);
                let u = gauge.transport(mu, site);
                for c in 0..rank {
                    out[site * rank + c] = (u * s.values[next * rank + c] - s.values[site * rank + c]) / grid.h;
                }
            }
            SectionVector { values: out, k: s.k, layout: s.layout.clone() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::realize_prequantum;
    use super::*;
    use crate::geometry::{build_backend, BackendSpec, FieldExpr};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn random_section(n: usize, k: i64, seed: u64) -> SectionVector {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        SectionVector::new(values, k, Arc::new(SectionLayout::scalar(n))).unwrap()
    }

    fn norm(s: &SectionVector, b: &SymplecticBackend) -> f64 {
        inner_product(s, s, b).unwrap().re.sqrt()
    }

    #[test]
    fn volume_of_unit_section_is_two_pi() {
        let b = build_backend(&BackendSpec::torus2(32)).unwrap();
        let one = SectionVector::new(vec![C64::new(1.0, 0.0); b.sites()], 0, Arc::new(SectionLayout::scalar(b.sites())))
            .unwrap();
        assert!((inner_product(&one, &one, &b).unwrap().re - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn inner_product_is_conjugate_symmetric() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let s = random_section(b.sites(), 3, 1);
        let t = random_section(b.sites(), 3, 2);
        let a = inner_product(&s, &t, &b).unwrap();
        let c = inner_product(&t, &s, &b).unwrap();
        assert!((a - c.conj()).norm() < 1e-15 * (1.0 + a.norm()));
        assert!(inner_product(&s, &s, &b).unwrap().re > 0.0);
    }

    #[test]
    fn constant_section_is_flat_at_zero_flux() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let g = realize_prequantum(&b, 0).unwrap();
        let one = SectionVector::new(vec![C64::new(2.0, -1.0); b.sites()], 0, Arc::new(SectionLayout::scalar(b.sites())))
            .unwrap();
        for d in covariant_gradient(&one, &g, &b).unwrap() {
            assert!(d.values.iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn plane_wave_gradient_matches_discrete_symbol() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let g = realize_prequantum(&b, 0).unwrap();
        let h = 1.0 / 16.0;
        for m in [1, 3, 5] {
            let values = (0..b.sites()).map(|s| C64::from_polar(1.0, 2.0 * PI * m as f64 * b.point(s)[0])).collect();
            let wave = SectionVector::new(values, 0, Arc::new(SectionLayout::scalar(b.sites()))).unwrap();
            let grad = covariant_gradient(&wave, &g, &b).unwrap();
            let symbol = 2.0 * (PI * h * m as f64).sin() / h;
            for s in 0..b.sites() {
                assert!((grad[0].values[s].norm() - symbol).abs() < 1e-11);
                assert!(grad[1].values[s].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_norm_is_gauge_invariant() {
        let b = build_backend(&BackendSpec::torus2(24)).unwrap();
        let g = realize_prequantum(&b, 5).unwrap();
        let s = random_section(b.sites(), 5, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let theta: Vec<f64> = (0..b.sites()).map(|_| rng.gen::<f64>() * 2.0 * PI).collect();
        let g2 = g.gauge_transformed(&b, &theta).unwrap();
        let s2 = s.gauge_transformed(&theta).unwrap();
        let d1 = covariant_gradient(&s, &g, &b).unwrap();
        let d2 = covariant_gradient(&s2, &g2, &b).unwrap();
        for (a, c) in d1.iter().zip(&d2) {
            assert!((norm(a, &b) - norm(c, &b)).abs() < 1e-12 * norm(a, &b));
            let expected = a.gauge_transformed(&theta).unwrap();
            for (x, y) in expected.values.iter().zip(&c.values) {
                assert!((x - y).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn mismatched_k_is_an_error() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let g = realize_prequantum(&b, 1).unwrap();
        let s = random_section(b.sites(), 2, 4);
        assert!(matches!(covariant_gradient(&s, &g, &b), Err(Error::Mismatch(_))));
        assert!(inner_product(&s, &random_section(b.sites(), 1, 5), &b).is_err());
    }

    #[test]
    fn multiplication_algebra_on_tori() {
        let b = build_backend(&BackendSpec::torus2(16)).unwrap();
        let f = ScalarField::from_expr(&b, FieldExpr::parse("cos(2pi x)").unwrap());
        let g = ScalarField::from_expr(&b, FieldExpr::parse("sin(2pi y) + 0.5").unwrap());
        let s = random_section(b.sites(), 1, 6);
        let t = random_section(b.sites(), 1, 7);
        let one = ScalarField::constant(&b, 1.0);
        assert_eq!(multiply(&one, &s, &b).unwrap(), s);
        // equal up to the rounding of reassociating two real factors
        let fg = multiply(&f, &multiply(&g, &s, &b).unwrap(), &b).unwrap();
        let direct = multiply(&f.product(&g), &s, &b).unwrap();
        for (x, y) in fg.values.iter().zip(&direct.values) {
            assert!((x - y).norm() <= 4.0 * f64::EPSILON * x.norm());
        }
        let lhs = inner_product(&multiply(&f, &s, &b).unwrap(), &t, &b).unwrap();
        let rhs = inner_product(&s, &multiply(&f, &t, &b).unwrap(), &b).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        let bound = f.max_abs() * norm(&s, &b);
        assert!(norm(&multiply(&f, &s, &b).unwrap(), &b) <= bound * (1.0 + 1e-14));
    }
}
