//! The two quantum spaces, their Toeplitz algebras, and how far apart they are.

use crate::bundle::{multiply, realize_prequantum, SectionLayout, SectionVector};
use crate::geometry::{Lattice, ScalarField, SymplecticBackend};
use crate::linalg::{axpy, orthogonalize, wdot, wnorm};
use crate::operators::{dirac_operator, rescaled_laplacian, HermitianOperatorHandle};
use crate::spectral::{gap_report, lowest_eigenpairs_with, riemann_roch_dimension, GapReport, LanczosOptions, SpectralResult};
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    AlmostKahler,
    Spinc,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::AlmostKahler => "almost_kahler",
            Scheme::Spinc => "spinc",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceProvenance {
    pub operator: String,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub gap: GapReport,
    /// Spin-c only: eigenvalues below this count as kernel.
    pub kernel_threshold: Option<f64>,
    /// Spin-c only: lowest eigenvalue of D² on odd-degree sections.
    pub odd_sector_min: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct QuantumSpace {
    pub k: i64,
    pub scheme: Scheme,
    pub basis: Vec<SectionVector>,
    pub weights: Arc<Vec<f64>>,
    pub backend: String,
    pub provenance: SpaceProvenance,
}

impl QuantumSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn layout(&self) -> &Arc<SectionLayout> {
        &self.basis[0].layout
    }

    pub fn gram_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((wdot(&a.values, &b.values, &self.weights) - want).norm());
            }
        }
        worst
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    /// Eigenpairs requested beyond dₖ (at least one is always added).
    pub extra: usize,
    pub lanczos: LanczosOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-9, extra: 3, lanczos: LanczosOptions::default() }
    }
}

impl SolveOptions {
    pub fn count(&self, d_k: usize) -> usize {
        d_k + self.extra.max(1)
    }

    pub fn lanczos(&self) -> LanczosOptions {
        LanczosOptions { tol: self.tol, ..self.lanczos.clone() }
    }

    /// D² is far stiffer than Δ•ₖ (its norm grows like h⁻⁴), so the default
    /// budget is 150·m block steps instead of 50·m.
    pub fn dirac_lanczos(&self, m: usize) -> LanczosOptions {
        let mut o = self.lanczos();
        o.max_block_steps = o.max_block_steps.or(Some(150 * m));
        o
    }
}

/// Δ•ₖ on the backend.
pub fn almost_kahler_operator(backend: &SymplecticBackend, k: i64) -> Result<HermitianOperatorHandle> {
    let gauge = realize_prequantum(backend, k)?;
    rescaled_laplacian(backend, &gauge, k)
}

pub fn almost_kahler_space(backend: &SymplecticBackend, k: i64, opts: &SolveOptions) -> Result<QuantumSpace> {
    let op = almost_kahler_operator(backend, k)?;
    let d_k = riemann_roch_dimension(backend.kind(), k);
    let result = lowest_eigenpairs_with(&op, opts.count(d_k), &opts.lanczos())?;
    almost_kahler_space_from(backend, k, &op, &result)
}

/// 𝓗ₖ from an existing spectral run of Δ•ₖ.
pub fn almost_kahler_space_from(
    backend: &SymplecticBackend,
    k: i64,
    op: &HermitianOperatorHandle,
    result: &SpectralResult,
) -> Result<QuantumSpace> {
    if k < 1 {
        return Err(Error::Invalid("quantum spaces need k ≥ 1".into()));
    }
    let gap = checked_gap(result, backend, k)?;
    if !gap.accepted {
        return Err(Error::GapUnresolved { position: gap.d_k, band_edge: gap.a_measured, next: gap.gap_next });
    }
    let vectors = orthonormalize(&result.eigenvectors[..gap.d_k], &op.weights)?;
    let basis = vectors.into_iter().map(|v| SectionVector { values: v, k, layout: op.layout.clone() }).collect();
    Ok(QuantumSpace {
        k,
        scheme: Scheme::AlmostKahler,
        basis,
        weights: op.weights.clone(),
        backend: backend.spec.descriptor(),
        provenance: SpaceProvenance {
            operator: op.name.clone(),
            eigenvalues: result.eigenvalues.clone(),
            residuals: result.residuals.clone(),
            gap,
            kernel_threshold: None,
            odd_sector_min: None,
        },
    })
}

fn checked_gap(result: &SpectralResult, backend: &SymplecticBackend, k: i64) -> Result<GapReport> {
    let gap = gap_report(result, backend.kind(), k)?;
    let need = gap.d_k + 1;
    let unconverged = (0..need).find(|&i| !(result.residuals[i] <= result.tol * result.eigenvalues[i].abs().max(1.0)));
    if let Some(i) = unconverged {
        return Err(Error::Numerical(format!(
            "eigenpair {i} not converged (residual {:e}); raise the iteration budget",
            result.residuals[i]
        )));
    }
    Ok(gap)
}

/// D² on even and odd degrees, plus the full (0,*) layout.
pub struct SpincSectors {
    pub dirac: HermitianOperatorHandle,
    pub even: HermitianOperatorHandle,
    pub odd: HermitianOperatorHandle,
}

pub fn spinc_sectors(backend: &SymplecticBackend, k: i64) -> Result<SpincSectors> {
    let gauge = realize_prequantum(backend, k)?;
    let dirac = dirac_operator(backend, &gauge, k)?;
    let d2 = dirac.squared("dirac_squared");
    let even = d2.parity_sector(0, "dirac_squared_even")?;
    let odd = d2.parity_sector(1, "dirac_squared_odd")?;
    Ok(SpincSectors { dirac, even, odd })
}

pub fn spinc_space(backend: &SymplecticBackend, k: i64, opts: &SolveOptions) -> Result<QuantumSpace> {
    if k < 1 {
        return Err(Error::Invalid("spin-c quantization needs k ≥ 1".into()));
    }
    let sectors = spinc_sectors(backend, k)?;
    let d_k = riemann_roch_dimension(backend.kind(), k);
    let m = opts.count(d_k);
    let even = lowest_eigenpairs_with(&sectors.even, m, &opts.dirac_lanczos(m))?;
    let odd = lowest_eigenpairs_with(&sectors.odd, 2, &opts.dirac_lanczos(2))?;
    spinc_space_from(backend, k, &sectors, &even, Some(odd.eigenvalues[0]))
}

/// 𝓠ₖ = ker D⁺ from an even-sector spectral run of D². The measured gap is
/// the largest jump in the computed eigenvalues; eigenvalues below half of the
/// eigenvalue above that jump count as kernel, and the count must equal dₖ.
pub fn spinc_space_from(
    backend: &SymplecticBackend,
    k: i64,
    sectors: &SpincSectors,
    even: &SpectralResult,
    odd_sector_min: Option<f64>,
) -> Result<QuantumSpace> {
    if k < 1 {
        return Err(Error::Invalid("spin-c quantization needs k ≥ 1".into()));
    }
    let gap = checked_gap(even, backend, k)?;
    let threshold = kernel_threshold(&even.eigenvalues);
    let found = even.eigenvalues.iter().filter(|&&l| l < threshold).count();
    if found != gap.d_k {
        return Err(Error::KernelDimension {
            found,
            expected: gap.d_k,
            hint: "the lattice is too coarse for this k; increase the resolution".into(),
        });
    }
    let full_layout = sectors.dirac.layout.clone();
    let degrees = full_layout.entry_degrees();
    let even_index: Vec<usize> = (0..degrees.len()).filter(|&i| degrees[i] % 2 == 0).collect();
    let vectors = orthonormalize(&even.eigenvectors[..gap.d_k], &sectors.even.weights)?;
    let basis = vectors
        .into_iter()
        .map(|v| {
            let mut values = vec![C64::new(0.0, 0.0); full_layout.len()];
            for (x, &i) in v.iter().zip(&even_index) {
                values[i] = *x;
            }
            SectionVector { values, k, layout: full_layout.clone() }
        })
        .collect();
    Ok(QuantumSpace {
        k,
        scheme: Scheme::Spinc,
        basis,
        weights: sectors.dirac.weights.clone(),
        backend: backend.spec.descriptor(),
        provenance: SpaceProvenance {
            operator: sectors.even.name.clone(),
            eigenvalues: even.eigenvalues.clone(),
            residuals: even.residuals.clone(),
            gap,
            kernel_threshold: Some(threshold),
            odd_sector_min,
        },
    })
}

/// Half the eigenvalue just above the largest jump of the sorted list.
pub fn kernel_threshold(eigenvalues: &[f64]) -> f64 {
    let jump = (0..eigenvalues.len().saturating_sub(1))
        .max_by(|&a, &b| {
            let da = eigenvalues[a + 1] - eigenvalues[a];
            let db = eigenvalues[b + 1] - eigenvalues[b];
            da.total_cmp(&db)
        })
        .unwrap_or(0);
    eigenvalues.get(jump + 1).copied().unwrap_or(f64::INFINITY) / 2.0
}

/// ‖higher-degree part‖ / ‖degree-0 part‖ for each basis vector.
pub fn degree_profile(space: &QuantumSpace) -> Vec<f64> {
    let degrees = space.layout().entry_degrees();
    space
        .basis
        .iter()
        .map(|v| {
            let (mut low, mut high) = (0.0, 0.0);
            for ((x, q), w) in v.values.iter().zip(&degrees).zip(space.weights.iter()) {
                if *q == 0 {
                    low += x.norm_sqr() * w;
                } else {
                    high += x.norm_sqr() * w;
                }
            }
            (high / low).sqrt()
        })
        .collect()
}

/// Re-express 𝓗ₖ as degree-0 sections inside the (0,*) layout of `target`.
pub fn embed_degree_zero(space: &QuantumSpace, target: &QuantumSpace) -> Result<QuantumSpace> {
    if space.k != target.k || space.backend != target.backend {
        return Err(Error::Mismatch("spaces live on different bundles".into()));
    }
    let layout = target.layout().clone();
    let src = space.layout();
    let place: Box<dyn Fn(&[C64]) -> Result<Vec<C64>>> = match (src.as_ref(), layout.as_ref()) {
        (SectionLayout::Product { sites, degrees }, SectionLayout::Product { sites: s2, degrees: d2 })
            if degrees.len() == 1 && sites == s2 =>
        {
            let r = d2.len();
            let zero = d2.iter().position(|&q| q == 0).ok_or_else(|| Error::Mismatch("no degree-0 slot".into()))?;
            let len = layout.len();
            Box::new(move |v: &[C64]| {
                let mut out = vec![C64::new(0.0, 0.0); len];
                for (s, x) in v.iter().enumerate() {
                    out[s * r + zero] = *x;
                }
                Ok(out)
            })
        }
        (SectionLayout::Product { sites, degrees }, SectionLayout::Monopole { blocks, degrees: bd })
            if degrees.len() == 1 && bd.first() == Some(&0) && blocks[0].len() == *sites =>
        {
            let len = layout.len();
            Box::new(move |v: &[C64]| {
                let mut out = vec![C64::new(0.0, 0.0); len];
                out[..v.len()].copy_from_slice(v);
                Ok(out)
            })
        }
        _ => return Err(Error::Mismatch("cannot embed this layout as degree-0 sections".into())),
    };
    let basis = space
        .basis
        .iter()
        .map(|b| Ok(SectionVector { values: place(&b.values)?, k: b.k, layout: layout.clone() }))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantumSpace { basis, weights: target.weights.clone(), ..space.clone() })
}

fn orthonormalize(vectors: &[Vec<C64>], w: &[f64]) -> Result<Vec<Vec<C64>>> {
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut v = v.clone();
        orthogonalize(&mut v, &out, w);
        let n = wnorm(&v, w);
        if !(n > 1e-8) {
            return Err(Error::Numerical("eigenvectors are linearly dependent".into()));
        }
        v.iter_mut().for_each(|x| *x /= n);
        out.push(v);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ToeplitzMatrix {
    pub matrix: DMatrix<C64>,
    pub k: i64,
    pub scheme: Scheme,
    pub symbol: String,
}

impl ToeplitzMatrix {
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn op_norm(&self) -> f64 {
        spectral_norm(&self.matrix)
    }
}

/// Matrix of ⟨ψ_i, M(f)ψ_j⟩ in the orthonormal basis, Hermitian-symmetrized.
pub fn toeplitz(space: &QuantumSpace, f: &ScalarField, backend: &SymplecticBackend) -> Result<ToeplitzMatrix> {
    if space.backend != backend.spec.descriptor() {
        return Err(Error::Mismatch("space and symbol live on different backends".into()));
    }
    let images: Vec<SectionVector> = space.basis.par_iter().map(|b| multiply(f, b, backend)).collect::<Result<_>>()?;
    let d = space.dim();
    let mut m = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = wdot(&space.basis[i].values, &images[j].values, &space.weights);
        }
    }
    let matrix = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    Ok(ToeplitzMatrix { matrix, k: space.k, scheme: space.scheme, symbol: f.describe() })
}

/// sin of the largest principal angle, computed from the residual B − A(AᴴB)
/// so that small angles keep full relative accuracy.
pub fn projector_distance(a: &QuantumSpace, b: &QuantumSpace) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Mismatch(format!("subspace dimensions {} and {}", a.dim(), b.dim())));
    }
    if a.layout() != b.layout() || a.weights.len() != b.weights.len() {
        return Err(Error::Mismatch("subspaces live in different ambient spaces".into()));
    }
    let w = &a.weights;
    let d = a.dim();
    let residuals: Vec<Vec<C64>> = b
        .basis
        .par_iter()
        .map(|bv| {
            let mut r = bv.values.clone();
            for av in &a.basis {
                let c = wdot(&av.values, &r, w);
                axpy(-c, &av.values, &mut r);
            }
            r
        })
        .collect();
    let mut g = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] = wdot(&residuals[i], &residuals[j], w);
        }
    }
    let top = hermitian_eigenvalues(&((&g + g.adjoint()) * C64::new(0.5, 0.0))).last().cloned().unwrap_or(0.0);
    Ok(top.max(0.0).sqrt().min(1.0))
}

/// ‖A T Aᴴ − B S Bᴴ‖ computed in the joint span of both bases.
pub fn toeplitz_difference(a: &QuantumSpace, t: &ToeplitzMatrix, b: &QuantumSpace, s: &ToeplitzMatrix) -> f64 {
    let mut joint: Vec<Vec<C64>> = Vec::new();
    for v in a.basis.iter().chain(&b.basis) {
        let mut x = v.values.clone();
        orthogonalize(&mut x, &joint, &a.weights);
        let n = wnorm(&x, &a.weights);
        if n > 1e-12 {
            x.iter_mut().for_each(|c| *c /= n);
            joint.push(x);
        }
    }
    let coords = |sp: &QuantumSpace| {
        DMatrix::from_fn(joint.len(), sp.dim(), |i, j| wdot(&joint[i], &sp.basis[j].values, &a.weights))
    };
    let ca = coords(a);
    let cb = coords(b);
    let m = &ca * &t.matrix * ca.adjoint() - &cb * &s.matrix * cb.adjoint();
    spectral_norm(&m)
}

/// Πₖ(x,x) = Σ_j |ψ_j(x)|² at every site (sphere: at the quadrature nodes).
pub fn bergman_diagonal(space: &QuantumSpace, backend: &SymplecticBackend) -> Result<ScalarField> {
    let mut values = vec![0.0; backend.sites()];
    match (&backend.lattice, space.layout().as_ref()) {
        (Lattice::Torus(g), SectionLayout::Product { sites, degrees }) if *sites == g.sites => {
            let r = degrees.len();
            for b in &space.basis {
                for (i, x) in b.values.iter().enumerate() {
                    values[i / r] += x.norm_sqr();
                }
            }
        }
        (Lattice::Sphere(grid), layout) => {
            let blocks = match layout {
                SectionLayout::Product { .. } => vec![crate::bundle::MonopoleBasis::for_power(space.k, grid.truncation)],
                SectionLayout::Monopole { blocks, .. } => blocks.clone(),
            };
            for b in &space.basis {
                let mut start = 0;
                for block in &blocks {
                    let nodes = block.synthesize(&b.values[start..start + block.len()], grid);
                    for (v, x) in values.iter_mut().zip(nodes) {
                        *v += x.norm_sqr();
                    }
                    start += block.len();
                }
            }
        }
        _ => return Err(Error::Mismatch("space does not fit the backend".into())),
    }
    ScalarField::from_values(backend, values)
}

/// ∫ f dvol with the backend's Riemannian site measure.
pub fn integrate(f: &ScalarField, backend: &SymplecticBackend) -> f64 {
    f.values.iter().enumerate().map(|(s, v)| v * backend.site_measure(s)).sum()
}

pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}
