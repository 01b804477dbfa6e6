//! Discretized symplectic backends (X, ω, J, β).
//!
//! Tori are uniform periodic grids on the unit cube with ω = 2π Σ dxᵢ∧dyᵢ.
//! The sphere is described in the chart (φ, ζ = cos θ) with ω = ½ dφ∧dζ,
//! total area 2π, sampled on a Gauss–Legendre × uniform product grid.

mod field;
mod flow;
mod levelset;
mod structure;

pub use field::{poisson_bracket, FieldExpr, ScalarField};
pub use flow::{exact_flow, FlowCatalogEntry};
pub use levelset::{levelset_liouville_volume, LevelSetVolume};
pub use structure::{compatible_j_from_metric, nijenhuis_norm, preset_metric, standard_complex_structure};

use crate::quadrature::gauss_legendre;
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest tensor power the sphere quadrature is sized for.
pub const SPHERE_MAX_K: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Torus2,
    Torus4,
    Sphere2,
}

impl BackendKind {
    pub fn n(self) -> usize {
        match self {
            BackendKind::Torus4 => 2,
            _ => 1,
        }
    }

    pub fn is_torus(self) -> bool {
        !matches!(self, BackendKind::Sphere2)
    }

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Torus2 => "torus2",
            BackendKind::Torus4 => "torus4",
            BackendKind::Sphere2 => "sphere2",
        }
    }
}

/// How the almost complex structure is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "recipe")]
pub enum StructureRecipe {
    /// Constant standard J; β = 2π·I on tori.
    Standard,
    /// G = 2π·exp(a·cos 2πx₁)·I, passed through the polar construction.
    Conformal { amplitude: f64 },
    /// The non-integrable 4-torus preset (x₁-dependent metric mixing the planes).
    Mixing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub kind: BackendKind,
    /// Sites per axis on tori, truncation degree on the sphere.
    pub resolution: usize,
    pub recipe: StructureRecipe,
}

impl BackendSpec {
    pub fn torus2(n: usize) -> Self {
        Self { kind: BackendKind::Torus2, resolution: n, recipe: StructureRecipe::Standard }
    }

    pub fn torus4(n: usize) -> Self {
        Self { kind: BackendKind::Torus4, resolution: n, recipe: StructureRecipe::Standard }
    }

    pub fn torus4_mixing(n: usize) -> Self {
        Self { kind: BackendKind::Torus4, resolution: n, recipe: StructureRecipe::Mixing }
    }

    pub fn sphere(truncation: usize) -> Self {
        Self { kind: BackendKind::Sphere2, resolution: truncation, recipe: StructureRecipe::Standard }
    }

    pub fn with_recipe(mut self, recipe: StructureRecipe) -> Self {
        self.recipe = recipe;
        self
    }

    /// Canonical text used for hashing and provenance.
    pub fn descriptor(&self) -> String {
        let recipe = match &self.recipe {
            StructureRecipe::Standard => "standard".to_string(),
            StructureRecipe::Conformal { amplitude } => format!("conformal({amplitude:e})"),
            StructureRecipe::Mixing => "mixing".to_string(),
        };
        format!("{}:res={}:{}", self.kind.name(), self.resolution, recipe)
    }

    /// Smallest admissible resolution for tensor power `k` (k = 0 gives the floor).
    pub fn minimum_resolution(kind: BackendKind, k: usize) -> usize {
        let root = (k as f64).sqrt().ceil() as usize;
        match kind {
            BackendKind::Torus2 => 16.max(8 * root),
            BackendKind::Torus4 => 8.max(4 * root),
            BackendKind::Sphere2 => 2,
        }
    }

    pub fn check_resolution(&self, k: usize) -> Result<()> {
        let min = Self::minimum_resolution(self.kind, k);
        if self.resolution < min {
            return Err(Error::Resolution {
                what: format!("{} at k={k}", self.kind.name()),
                got: self.resolution,
                min,
            });
        }
        if self.kind == BackendKind::Sphere2 && k > SPHERE_MAX_K {
            return Err(Error::Unsupported(format!("sphere quadrature is sized for k <= {SPHERE_MAX_K}")));
        }
        Ok(())
    }
}

/// Periodic grid on [0,1)^dims.
#[derive(Clone, Debug)]
pub struct TorusGrid {
    pub axis_len: usize,
    pub dims: usize,
    pub h: f64,
    pub sites: usize,
    strides: Vec<usize>,
}

impl TorusGrid {
    pub fn new(axis_len: usize, dims: usize) -> Self {
        let mut strides = vec![1; dims];
        for mu in (0..dims.saturating_sub(1)).rev() {
            strides[mu] = strides[mu + 1] * axis_len;
        }
        Self { axis_len, dims, h: 1.0 / axis_len as f64, sites: axis_len.pow(dims as u32), strides }
    }

    /// Integer coordinate of site `s` along axis `mu` (axis 0 varies slowest).
    #[inline]
    pub fn index_along(&self, s: usize, mu: usize) -> usize {
        (s / self.strides[mu]) % self.axis_len
    }

    #[inline]
    pub fn coord(&self, s: usize, mu: usize) -> f64 {
        self.index_along(s, mu) as f64 * self.h
    }

    pub fn point(&self, s: usize) -> Vec<f64> {
        (0..self.dims).map(|mu| self.coord(s, mu)).collect()
    }

    /// Site reached by `steps` moves along `mu`, with periodic wrap.
    #[inline]
    pub fn shift(&self, s: usize, mu: usize, steps: isize) -> usize {
        let i = self.index_along(s, mu) as isize;
        let n = self.axis_len as isize;
        let j = (i + steps).rem_euclid(n) as usize;
        s + j * self.strides[mu] - (i as usize) * self.strides[mu]
    }

    /// Table of forward neighbours along every axis.
    pub fn neighbor_table(&self, steps: isize) -> Vec<Vec<u32>> {
        (0..self.dims)
            .map(|mu| (0..self.sites).map(|s| self.shift(s, mu, steps) as u32).collect())
            .collect()
    }
}

/// Product quadrature on the sphere in the chart (φ, ζ).
#[derive(Clone, Debug)]
pub struct SphereGrid {
    pub truncation: usize,
    pub zeta: Vec<f64>,
    pub zeta_weights: Vec<f64>,
    pub phi: Vec<f64>,
    pub sites: usize,
}

impl SphereGrid {
    fn new(truncation: usize) -> Self {
        let gmax = SPHERE_MAX_K / 2;
        let nz = truncation + gmax + 12;
        let nphi = 2 * (truncation + gmax) + 24;
        let (zeta, zeta_weights) = gauss_legendre(nz);
        let phi = (0..nphi).map(|j| 2.0 * PI * j as f64 / nphi as f64).collect();
        Self { truncation, zeta, zeta_weights, phi, sites: nz * nphi }
    }

    #[inline]
    pub fn split(&self, s: usize) -> (usize, usize) {
        (s / self.phi.len(), s % self.phi.len())
    }

    pub fn point(&self, s: usize) -> Vec<f64> {
        let (iz, ip) = self.split(s);
        vec![self.phi[ip], self.zeta[iz]]
    }
}

#[derive(Clone, Debug)]
pub enum Lattice {
    Torus(TorusGrid),
    Sphere(SphereGrid),
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub max_j_square_error: f64,
    pub max_compatibility_error: f64,
    pub min_beta_eigenvalue: f64,
    pub max_beta_condition: f64,
    pub nijenhuis: Option<f64>,
    pub integrable: bool,
    pub exact_basis: bool,
}

#[derive(Clone, Debug)]
pub struct SymplecticBackend {
    pub spec: BackendSpec,
    pub n: usize,
    pub lattice: Lattice,
    pub omega: DMatrix<f64>,
    j_field: Vec<f64>,
    beta_field: Vec<f64>,
    vol_density: Vec<f64>,
    pub validation: ValidationReport,
}

impl SymplecticBackend {
    pub fn kind(&self) -> BackendKind {
        self.spec.kind
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn sites(&self) -> usize {
        match &self.lattice {
            Lattice::Torus(g) => g.sites,
            Lattice::Sphere(g) => g.sites,
        }
    }

    pub fn torus(&self) -> Option<&TorusGrid> {
        match &self.lattice {
            Lattice::Torus(g) => Some(g),
            _ => None,
        }
    }

    pub fn sphere(&self) -> Option<&SphereGrid> {
        match &self.lattice {
            Lattice::Sphere(g) => Some(g),
            _ => None,
        }
    }

    /// Chart coordinates of a site.
    pub fn point(&self, s: usize) -> Vec<f64> {
        match &self.lattice {
            Lattice::Torus(g) => g.point(s),
            Lattice::Sphere(g) => g.point(s),
        }
    }

    pub fn j_at(&self, s: usize) -> DMatrix<f64> {
        let d = self.real_dim();
        DMatrix::from_row_slice(d, d, &self.j_field[s * d * d..(s + 1) * d * d])
    }

    pub fn beta_at(&self, s: usize) -> DMatrix<f64> {
        let d = self.real_dim();
        DMatrix::from_row_slice(d, d, &self.beta_field[s * d * d..(s + 1) * d * d])
    }

    pub fn vol_density(&self, s: usize) -> f64 {
        self.vol_density[s]
    }

    /// Riemannian measure carried by one site (density times cell volume or quadrature weight).
    pub fn site_measure(&self, s: usize) -> f64 {
        match &self.lattice {
            Lattice::Torus(g) => self.vol_density[s] * g.h.powi(2 * self.n as i32),
            Lattice::Sphere(g) => {
                let (iz, _) = g.split(s);
                self.vol_density[s] * g.zeta_weights[iz] * 2.0 * PI / g.phi.len() as f64
            }
        }
    }

    /// Symplectic (Liouville) measure carried by one site.
    pub fn liouville_measure(&self, s: usize) -> f64 {
        let pf = pfaffian(&self.omega);
        match &self.lattice {
            Lattice::Torus(g) => pf * g.h.powi(2 * self.n as i32),
            Lattice::Sphere(g) => {
                let (iz, _) = g.split(s);
                pf * g.zeta_weights[iz] * 2.0 * PI / g.phi.len() as f64
            }
        }
    }

    /// Total symplectic volume ∫ωⁿ/n!.
    pub fn symplectic_volume(&self) -> f64 {
        (0..self.sites()).map(|s| self.liouville_measure(s)).sum()
    }

    pub fn omega_inverse(&self) -> DMatrix<f64> {
        self.omega.clone().try_inverse().expect("ω is nondegenerate")
    }

    pub fn is_constant_structure(&self) -> bool {
        matches!(self.spec.recipe, StructureRecipe::Standard) && self.kind().is_torus()
    }
}

/// Pfaffian of the 2×2 or 4×4 block-diagonal constant ω used here.
fn pfaffian(omega: &DMatrix<f64>) -> f64 {
    let d = omega.nrows();
    (0..d / 2).map(|i| omega[(2 * i, 2 * i + 1)]).product()
}

fn torus_omega(n: usize) -> DMatrix<f64> {
    let d = 2 * n;
    let mut m = DMatrix::zeros(d, d);
    for i in 0..n {
        m[(2 * i, 2 * i + 1)] = 2.0 * PI;
        m[(2 * i + 1, 2 * i)] = -2.0 * PI;
    }
    m
}

fn sphere_structure(zeta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let s2 = 1.0 - zeta * zeta;
    let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0 / s2, s2, 0.0]);
    let beta = DMatrix::from_row_slice(2, 2, &[0.5 * s2, 0.0, 0.0, 0.5 / s2]);
    (j, beta)
}

/// Build and validate a backend.
pub fn build_backend(spec: &BackendSpec) -> Result<SymplecticBackend> {
    spec.check_resolution(0)?;
    let n = spec.kind.n();
    let d = 2 * n;
    let (lattice, omega) = match spec.kind {
        BackendKind::Sphere2 => {
            if spec.recipe != StructureRecipe::Standard {
                return Err(Error::Unsupported("the sphere carries only its round structure".into()));
            }
            let omega = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0]);
            (Lattice::Sphere(SphereGrid::new(spec.resolution)), omega)
        }
        kind => {
            if spec.recipe == StructureRecipe::Mixing && kind != BackendKind::Torus4 {
                return Err(Error::Unsupported("the mixing preset lives on the 4-torus".into()));
            }
            (Lattice::Torus(TorusGrid::new(spec.resolution, d)), torus_omega(n))
        }
    };
    let sites = match &lattice {
        Lattice::Torus(g) => g.sites,
        Lattice::Sphere(g) => g.sites,
    };

    let mut j_field = Vec::with_capacity(sites * d * d);
    let mut beta_field = Vec::with_capacity(sites * d * d);
    let mut vol_density = Vec::with_capacity(sites);
    let mut report = ValidationReport {
        max_j_square_error: 0.0,
        max_compatibility_error: 0.0,
        min_beta_eigenvalue: f64::INFINITY,
        max_beta_condition: 0.0,
        nijenhuis: None,
        integrable: true,
        exact_basis: spec.kind == BackendKind::Sphere2,
    };

    let standard = standard_complex_structure(n);
    for s in 0..sites {
        let (j, beta) = match &lattice {
            Lattice::Sphere(g) => sphere_structure(g.zeta[g.split(s).0]),
            Lattice::Torus(g) => {
                let j = match spec.recipe {
                    StructureRecipe::Standard => standard.clone(),
                    _ => {
                        let metric = preset_metric(spec.kind, &spec.recipe, &g.point(s));
                        compatible_j_from_metric(&omega, std::slice::from_ref(&metric))
                            .map_err(|e| match e {
                                Error::Incompatible { reason, .. } => Error::Incompatible { site: s, reason },
                                other => other,
                            })?
                            .remove(0)
                    }
                };
                let beta = &omega * &j;
                (j, beta)
            }
        };
        let jsq = (&j * &j + DMatrix::identity(d, d)).amax();
        let compat = (&beta - &omega * &j).amax();
        let asym = (&beta - beta.transpose()).amax();
        if asym > 1e-10 * beta.amax() {
            return Err(Error::Incompatible { site: s, reason: format!("β not symmetric (defect {asym:e})") });
        }
        let eig = nalgebra::SymmetricEigen::new(beta.clone()).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if lo <= 0.0 {
            return Err(Error::Incompatible { site: s, reason: format!("β not positive definite (eigenvalue {lo:e})") });
        }
        report.max_j_square_error = report.max_j_square_error.max(jsq);
        report.max_compatibility_error = report.max_compatibility_error.max(compat);
        report.min_beta_eigenvalue = report.min_beta_eigenvalue.min(lo);
        report.max_beta_condition = report.max_beta_condition.max(hi / lo);
        vol_density.push(beta.determinant().sqrt());
        for r in 0..d {
            for c in 0..d {
                j_field.push(j[(r, c)]);
                beta_field.push(beta[(r, c)]);
            }
        }
    }
    if report.max_j_square_error > 1e-12 {
        return Err(Error::Incompatible { site: 0, reason: format!("J² + I = {:e}", report.max_j_square_error) });
    }

    let mut backend = SymplecticBackend {
        spec: spec.clone(),
        n,
        lattice,
        omega,
        j_field,
        beta_field,
        vol_density,
        validation: report,
    };
    if spec.kind.is_torus() {
        let nij = nijenhuis_norm(&backend)?;
        backend.validation.nijenhuis = Some(nij);
        backend.validation.integrable = n == 1 || nij <= 1e-8;
    }
    Ok(backend)
}
