//! Matrix-free self-adjoint operators: Bochner and rescaled Laplacians, the
//! Clifford table, and the spin-c Dirac operator with its square.

mod clifford;
mod remainder;
mod sphere;
mod stencil;

pub use clifford::{clifford_table, fiber_degrees, CliffordTable};
pub use remainder::{dirac_square_remainder, RemainderEstimate};

use crate::bundle::{entry_weights, GaugeRealization, MonopoleBasis, SectionLayout, SectionVector};
use crate::geometry::{Lattice, SymplecticBackend};
use crate::{Error, Result, C64};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::sync::Arc;

/// A linear map on flat coefficient vectors. Implementations must be pure.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

/// Self-adjoint operator with respect to the weighted product Σ w_i x̄_i y_i.
#[derive(Clone)]
pub struct HermitianOperatorHandle {
    pub name: String,
    pub k: i64,
    pub backend: String,
    pub layout: Arc<SectionLayout>,
    pub weights: Arc<Vec<f64>>,
    /// True when the operator exchanges even and odd form degrees.
    pub odd: bool,
    /// Multiple of the identity added to the underlying map.
    pub shift: f64,
    op: Arc<dyn LinearOperator>,
}

impl std::fmt::Debug for HermitianOperatorHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HermitianOperatorHandle")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("backend", &self.backend)
            .field("dim", &self.dim())
            .field("odd", &self.odd)
            .field("shift", &self.shift)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct HermiticityCertificate {
    pub probes: usize,
    pub max_relative_defect: f64,
    pub norm_estimate: f64,
}

impl HermiticityCertificate {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative_defect <= tol
    }
}

impl HermitianOperatorHandle {
    pub fn new(
        name: impl Into<String>,
        k: i64,
        backend: &SymplecticBackend,
        layout: Arc<SectionLayout>,
        op: Arc<dyn LinearOperator>,
        odd: bool,
    ) -> Result<Self> {
        let weights = entry_weights(backend, &layout)?;
        Self::with_weights(name, k, backend.spec.descriptor(), layout, Arc::new(weights), op, odd)
    }

    pub fn with_weights(
        name: impl Into<String>,
        k: i64,
        backend: String,
        layout: Arc<SectionLayout>,
        weights: Arc<Vec<f64>>,
        op: Arc<dyn LinearOperator>,
        odd: bool,
    ) -> Result<Self> {
        if op.dim() != layout.len() || weights.len() != layout.len() {
            return Err(Error::Mismatch(format!(
                "operator dimension {} vs layout {} vs weights {}",
                op.dim(),
                layout.len(),
                weights.len()
            )));
        }
        Ok(Self { name: name.into(), k, backend, layout, weights, odd, shift: 0.0, op })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn apply_raw(&self, x: &[C64], y: &mut [C64]) {
        self.op.apply(x, y);
        if self.shift != 0.0 {
            y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += x * self.shift);
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim()];
        self.apply_raw(x, &mut y);
        y
    }

    pub fn apply(&self, s: &SectionVector) -> Result<SectionVector> {
        if s.layout.as_ref() != self.layout.as_ref() || s.k != self.k {
            return Err(Error::Mismatch(format!("section does not fit operator {}", self.name)));
        }
        Ok(SectionVector { values: self.apply_vec(&s.values), k: s.k, layout: s.layout.clone() })
    }

    /// Weighted inner product ⟨a,b⟩ = Σ w ā b.
    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        crate::linalg::wdot(a, b, &self.weights)
    }

    pub fn norm(&self, a: &[C64]) -> f64 {
        self.inner(a, a).re.max(0.0).sqrt()
    }

    pub fn shifted(&self, c: f64, name: impl Into<String>) -> Self {
        let mut out = self.clone();
        out.shift += c;
        out.name = name.into();
        out
    }

    /// The operator applied twice, as a new handle.
    pub fn squared(&self, name: impl Into<String>) -> Self {
        let inner = self.clone();
        let mut out = self.clone();
        out.op = Arc::new(Square(inner));
        out.shift = 0.0;
        out.odd = false;
        out.name = name.into();
        out
    }

    /// Restriction to the entries of one degree parity (0 even, 1 odd). Only
    /// meaningful for operators that preserve parity.
    pub fn parity_sector(&self, parity: u8, name: impl Into<String>) -> Result<Self> {
        if self.odd {
            return Err(Error::Invalid("an odd operator has no parity sectors".into()));
        }
        let degrees = self.layout.entry_degrees();
        let index: Vec<usize> = (0..degrees.len()).filter(|&i| degrees[i] % 2 == parity).collect();
        let layout = match self.layout.as_ref() {
            SectionLayout::Product { sites, degrees } => {
                SectionLayout::Product { sites: *sites, degrees: degrees.iter().cloned().filter(|d| d % 2 == parity).collect() }
            }
            SectionLayout::Monopole { blocks, degrees } => {
                let keep: Vec<usize> = (0..blocks.len()).filter(|&b| degrees[b] % 2 == parity).collect();
                SectionLayout::Monopole {
                    blocks: keep.iter().map(|&b| blocks[b].clone()).collect(),
                    degrees: keep.iter().map(|&b| degrees[b]).collect(),
                }
            }
        };
        let weights: Vec<f64> = index.iter().map(|&i| self.weights[i]).collect();
        let op = Sector { inner: self.clone(), index };
        let mut out = Self::with_weights(name, self.k, self.backend.clone(), Arc::new(layout), Arc::new(weights), Arc::new(op), false)?;
        out.shift = 0.0;
        Ok(out)
    }

    /// Form degree of every entry.
    pub fn entry_degrees(&self) -> Vec<u8> {
        self.layout.entry_degrees()
    }

    fn random_vector(&self, rng: &mut impl Rng) -> Vec<C64> {
        (0..self.dim()).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()
    }

    /// Power-iteration estimate of the operator norm.
    pub fn norm_estimate(&self, iterations: usize, seed: u64) -> f64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = self.random_vector(&mut rng);
        let mut est: f64 = 0.0;
        for _ in 0..iterations {
            let nv = self.norm(&v);
            if nv == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let w = self.apply_vec(&v);
            est = est.max(self.norm(&w));
            v = w;
        }
        est
    }

    /// Checks |⟨Av,w⟩ − ⟨v,Aw⟩| ≤ tol·‖A‖·‖v‖·‖w‖ on random probe pairs.
    pub fn hermiticity_certificate(&self, probes: usize, seed: u64) -> HermiticityCertificate {
        let norm = self.norm_estimate(30, seed ^ 0x5eed).max(f64::MIN_POSITIVE);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let v = self.random_vector(&mut rng);
            let w = self.random_vector(&mut rng);
            let av = self.apply_vec(&v);
            let aw = self.apply_vec(&w);
            let defect = (self.inner(&av, &w) - self.inner(&v, &aw)).norm();
            worst = worst.max(defect / (norm * self.norm(&v) * self.norm(&w)));
        }
        HermiticityCertificate { probes, max_relative_defect: worst, norm_estimate: norm }
    }
}

struct Square(HermitianOperatorHandle);

impl LinearOperator for Square {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let t = self.0.apply_vec(x);
        self.0.apply_raw(&t, y);
    }
}

struct Sector {
    inner: HermitianOperatorHandle,
    index: Vec<usize>,
}

impl LinearOperator for Sector {
    fn dim(&self) -> usize {
        self.index.len()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let mut full = vec![C64::new(0.0, 0.0); self.inner.dim()];
        for (v, &i) in x.iter().zip(&self.index) {
            full[i] = *v;
        }
        let out = self.inner.apply_vec(&full);
        for (v, &i) in y.iter_mut().zip(&self.index) {
            *v = out[i];
        }
    }
}

/// Δₖ = ∇*∇ on L^⊗k twisted by the fiber recorded in `gauge.degrees`.
pub fn bochner_laplacian(backend: &SymplecticBackend, gauge: &GaugeRealization, k: i64) -> Result<HermitianOperatorHandle> {
    check_gauge(backend, gauge, k)?;
    match &backend.lattice {
        Lattice::Torus(_) => {
            let op = stencil::TorusBochner::new(backend, gauge)?;
            let layout = SectionLayout::Product { sites: backend.sites(), degrees: gauge.degrees.clone() };
            HermitianOperatorHandle::new("bochner_laplacian", k, backend, Arc::new(layout), Arc::new(op), false)
        }
        Lattice::Sphere(grid) => {
            if gauge.fiber_rank() != 1 {
                return Err(Error::Unsupported("sphere Laplacian is built on L^⊗k only".into()));
            }
            let basis = MonopoleBasis::for_power(k, grid.truncation);
            let diag = (0..basis.len()).map(|i| basis.bochner_eigenvalue(i)).collect();
            let layout = SectionLayout::scalar(basis.len());
            HermitianOperatorHandle::new("bochner_laplacian", k, backend, Arc::new(layout), Arc::new(sphere::Diagonal(diag)), false)
        }
    }
}

/// Δ•ₖ = Δₖ − nk.
pub fn rescaled_laplacian(backend: &SymplecticBackend, gauge: &GaugeRealization, k: i64) -> Result<HermitianOperatorHandle> {
    let lap = bochner_laplacian(backend, gauge, k)?;
    Ok(lap.shifted(-(backend.n as f64) * k as f64, "rescaled_laplacian"))
}

/// Spin-c Dirac operator on (0,*)-forms with values in L^⊗k. The fiber of
/// `gauge` is ignored; the full (0,*) fiber is used.
pub fn dirac_operator(backend: &SymplecticBackend, gauge: &GaugeRealization, k: i64) -> Result<HermitianOperatorHandle> {
    check_gauge(backend, gauge, k)?;
    match &backend.lattice {
        Lattice::Torus(_) => {
            let table = clifford_table(backend)?;
            let gauge = gauge.clone().with_fiber(table.degrees.clone());
            let op = stencil::TorusDirac::new(backend, &gauge, &table)?;
            let layout = SectionLayout::Product { sites: backend.sites(), degrees: table.degrees.clone() };
            HermitianOperatorHandle::new("dirac", k, backend, Arc::new(layout), Arc::new(op), true)
        }
        Lattice::Sphere(grid) => {
            let (layout, op) = sphere::dirac(k, grid.truncation);
            HermitianOperatorHandle::new("dirac", k, backend, Arc::new(layout), Arc::new(op), true)
        }
    }
}

/// σ as a diagonal handle on the layout of a Dirac operator.
pub fn grading_operator(dirac: &HermitianOperatorHandle, n: usize) -> Result<HermitianOperatorHandle> {
    let diag = dirac.entry_degrees().iter().map(|&q| 2.0 * q as f64 - n as f64).collect();
    HermitianOperatorHandle::with_weights(
        "sigma",
        dirac.k,
        dirac.backend.clone(),
        dirac.layout.clone(),
        dirac.weights.clone(),
        Arc::new(sphere::Diagonal(diag)),
        false,
    )
}

fn check_gauge(backend: &SymplecticBackend, gauge: &GaugeRealization, k: i64) -> Result<()> {
    if gauge.k != k {
        return Err(Error::Mismatch(format!("gauge built for k = {}, operator requested for k = {k}", gauge.k)));
    }
    if backend.kind().is_torus() {
        backend.spec.check_resolution(k as usize)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
