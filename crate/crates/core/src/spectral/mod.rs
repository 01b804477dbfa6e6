//! Lowest eigenpairs of matrix-free Hermitian operators, Riemann–Roch
//! dimensions, gap detection and drift fits.

use crate::fit::{affine_fit, AffineFit};
use crate::geometry::BackendKind;
use crate::linalg::{combine, orthogonalize, wdot, wnorm};
use crate::operators::HermitianOperatorHandle;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOL: f64 = 1e-9;

/// dim H⁰ of L^⊗k: k on T², k² on T⁴, k + 1 on S².
pub fn riemann_roch_dimension(kind: BackendKind, k: i64) -> usize {
    assert!(k >= 0);
    let k = k as usize;
    match kind {
        BackendKind::Torus2 => k,
        BackendKind::Torus4 => k * k,
        BackendKind::Sphere2 => k + 1,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub block_size: usize,
    pub block_steps: usize,
    pub restarts: usize,
    pub matvecs: usize,
    pub reorthogonalizations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal in the operator's weighted inner product.
    pub eigenvectors: Vec<Vec<C64>>,
    pub residuals: Vec<f64>,
    pub tol: f64,
    pub converged: bool,
    pub diagnostics: SolverDiagnostics,
}

impl SpectralResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Largest |Gram − I| entry under the given weights.
    pub fn gram_defect(&self, weights: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.eigenvectors.iter().enumerate() {
            for (j, b) in self.eigenvectors.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((wdot(a, b, weights) - want).norm());
            }
        }
        worst
    }
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    pub tol: f64,
    pub seed: u64,
    /// Block size; defaults to the requested count.
    pub block: Option<usize>,
    /// Budget in block steps; defaults to 50·m.
    pub max_block_steps: Option<usize>,
    /// Largest Krylov basis kept between restarts.
    pub max_basis: Option<usize>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, seed: 0x1a2b_3c4d, block: None, max_block_steps: None, max_basis: None }
    }
}

/// Lowest `m` eigenpairs, default options.
pub fn lowest_eigenpairs(op: &HermitianOperatorHandle, m: usize, tol: f64) -> Result<SpectralResult> {
    lowest_eigenpairs_with(op, m, &LanczosOptions { tol, ..Default::default() })
}

/// Block Lanczos with full reorthogonalization and thick restart. The Krylov
/// basis is kept W-orthonormal; Ritz pairs come from the projected matrix.
/// A block at least as large as the widest near-degenerate cluster is needed
/// to resolve exact multiplicities, hence the default block size m.
pub fn lowest_eigenpairs_with(op: &HermitianOperatorHandle, m: usize, opts: &LanczosOptions) -> Result<SpectralResult> {
    let n = op.dim();
    if m == 0 || m >= n {
        return Err(Error::Invalid(format!("requested {m} eigenpairs of a {n}-dimensional operator")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    let w: &[f64] = &op.weights;
    let b = opts.block.unwrap_or(m).clamp(1, n);
    let keep = (m + (m / 4).max(4)).min(n);
    let ncv = opts.max_basis.unwrap_or((keep + 8 * b).max(3 * keep).max(160)).max(keep + b).min(n);
    let budget = opts.max_block_steps.unwrap_or(50 * m).max(1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut diag = SolverDiagnostics { block_size: b, block_steps: 0, restarts: 0, matvecs: 0, reorthogonalizations: 0 };

    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(ncv);
    // hcols[j][i] = ⟨v_i, A v_j⟩ for i ≤ j
    let mut hcols: Vec<Vec<C64>> = Vec::with_capacity(ncv);
    let mut next: Vec<Vec<C64>> = (0..b).map(|_| random_vector(n, &mut rng)).collect();

    loop {
        // grow the Krylov basis block by block
        while basis.len() < ncv && diag.block_steps < budget {
            let mut images = Vec::with_capacity(b);
            for mut v in std::mem::take(&mut next) {
                if basis.len() >= ncv {
                    break;
                }
                let before = wnorm(&v, w);
                orthogonalize(&mut v, &basis, w);
                diag.reorthogonalizations += 1;
                let mut nv = wnorm(&v, w);
                if !(nv > 1e-10 * before) || nv == 0.0 {
                    // deflated direction: replace by a fresh random one
                    v = random_vector(n, &mut rng);
                    orthogonalize(&mut v, &basis, w);
                    nv = wnorm(&v, w);
                }
                v.iter_mut().for_each(|x| *x /= nv);
                let av = op.apply_vec(&v);
                diag.matvecs += 1;
                basis.push(v);
                hcols.push(basis.iter().map(|u| wdot(u, &av, w)).collect());
                images.push(av);
            }
            diag.block_steps += 1;
            if images.is_empty() {
                break;
            }
            next = images;
        }

        // Rayleigh–Ritz
        let dimk = basis.len();
        let mut h = DMatrix::<C64>::zeros(dimk, dimk);
        for (j, col) in hcols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                h[(i, j)] = *v;
                h[(j, i)] = v.conj();
            }
            h[(j, j)] = C64::new(col[j].re, 0.0);
        }
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..dimk).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let kept = keep.min(dimk);
        let mut ritz_vals = Vec::with_capacity(kept);
        let mut ritz_vecs = Vec::with_capacity(kept);
        let mut res_vecs = Vec::with_capacity(kept);
        let mut res_norms = Vec::with_capacity(kept);
        for &c in order.iter().take(kept) {
            let y: Vec<C64> = eig.eigenvectors.column(c).iter().cloned().collect();
            let theta = eig.eigenvalues[c];
            let u = combine(&basis, &y);
            let mut r = op.apply_vec(&u);
            diag.matvecs += 1;
            crate::linalg::axpy(C64::new(-theta, 0.0), &u, &mut r);
            res_norms.push(wnorm(&r, w));
            ritz_vals.push(theta);
            ritz_vecs.push(u);
            res_vecs.push(r);
        }
        let done = (0..m).all(|i| res_norms[i] <= opts.tol * ritz_vals[i].abs().max(1.0));
        if done || diag.block_steps >= budget || dimk == n {
            let converged = done;
            let eigenvalues = ritz_vals[..m].to_vec();
            let eigenvectors = ritz_vecs[..m].to_vec();
            let residuals = res_norms[..m].to_vec();
            return Ok(SpectralResult { eigenvalues, eigenvectors, residuals, tol: opts.tol, converged, diagnostics: diag });
        }

        // thick restart: keep the lowest Ritz vectors, continue from the worst residuals
        diag.restarts += 1;
        let mut worst: Vec<usize> = (0..kept).collect();
        worst.sort_by(|&a, &b| {
            let ra = res_norms[a] / ritz_vals[a].abs().max(1.0);
            let rb = res_norms[b] / ritz_vals[b].abs().max(1.0);
            rb.total_cmp(&ra)
        });
        next = worst.iter().take(b).map(|&i| res_vecs[i].clone()).collect();
        hcols = (0..kept)
            .map(|j| {
                let mut col = vec![C64::new(0.0, 0.0); j + 1];
                col[j] = C64::new(ritz_vals[j], 0.0);
                col
            })
            .collect();
        basis = ritz_vecs;
    }
}

fn random_vector(n: usize, rng: &mut impl Rng) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()
}

/// Materialize the operator in the W-orthonormal coordinates and diagonalize
/// densely. For dimensions up to a few thousand; used as an oracle.
pub fn dense_spectrum(op: &HermitianOperatorHandle) -> Result<Vec<f64>> {
    let n = op.dim();
    if n > 4000 {
        return Err(Error::Invalid(format!("dense oracle refused for dimension {n}")));
    }
    let sw: Vec<f64> = op.weights.iter().map(|w| w.sqrt()).collect();
    let mut a = DMatrix::<C64>::zeros(n, n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C64::new(1.0 / sw[j], 0.0);
        let col = op.apply_vec(&e);
        for i in 0..n {
            a[(i, j)] = col[i] * sw[i];
        }
        e[j] = C64::new(0.0, 0.0);
    }
    let herm = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut vals: Vec<f64> = herm.symmetric_eigen().eigenvalues.iter().cloned().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    pub k: i64,
    pub d_k: usize,
    /// max_{j ≤ dₖ} |λ_j|
    pub a_measured: f64,
    /// λ_{dₖ+1}
    pub gap_next: f64,
    pub accepted: bool,
}

/// Position-based gap: the dₖ-th against the (dₖ+1)-th eigenvalue.
pub fn gap_report(result: &SpectralResult, kind: BackendKind, k: i64) -> Result<GapReport> {
    let d_k = riemann_roch_dimension(kind, k);
    if result.len() < d_k + 1 {
        return Err(Error::InsufficientPairs { have: result.len(), need: d_k + 1 });
    }
    let a_measured = result.eigenvalues[..d_k].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap_next = result.eigenvalues[d_k];
    Ok(GapReport { k, d_k, a_measured, gap_next, accepted: gap_next - a_measured > 0.0 })
}

/// Affine fit of min spec Δₖ against k.
pub fn drift_fit(points: &[(i64, f64)]) -> Result<AffineFit> {
    if points.len() < 4 {
        return Err(Error::TooFewPoints { have: points.len(), need: 4 });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    affine_fit(&xs, &ys)
}

#[cfg(test)]
mod tests;
