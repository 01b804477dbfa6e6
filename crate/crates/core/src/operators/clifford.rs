//! Clifford action on the (0,*)-form fiber in a unitary β-frame.
//!
//! Fiber basis: bitmasks S ⊂ {0..n−1}, |S⟩ = a†_{s1}···a†_{sq}|0⟩ with
//! s1 < ··· < sq, degree q = |S|. For a covector ξ,
//! c(ξ) = Σ_a (ξ(e_a) + iξ(Je_a)) a†_a + (−ξ(e_a) + iξ(Je_a)) a_a,
//! which satisfies c(ξ)c(η) + c(η)c(ξ) = −2β⁻¹(ξ,η).

use crate::geometry::SymplecticBackend;
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};

pub(crate) type CMat = DMatrix<C64>;

pub fn fiber_degrees(n: usize) -> Vec<u8> {
    (0..1usize << n).map(|s| s.count_ones() as u8).collect()
}

/// Matrix of a†_a on the 2ⁿ-dimensional fiber.
pub(crate) fn creation(n: usize, a: usize) -> CMat {
    let dim = 1 << n;
    let mut m = CMat::zeros(dim, dim);
    for s in 0..dim {
        if s & (1 << a) == 0 {
            let below = (s & ((1 << a) - 1)).count_ones();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            m[(s | (1 << a), s)] = C64::new(sign, 0.0);
        }
    }
    m
}

/// β-orthonormal frame (e_0, Je_0, e_1, Je_1, …) as columns, from Gram–Schmidt
/// of the coordinate vectors ∂_{x_a}.
pub(crate) fn unitary_frame(j: &DMatrix<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let d = j.nrows();
    let n = d / 2;
    let ip = |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * beta * v)[(0, 0)];
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(d);
    for a in 0..n {
        let mut v = DVector::zeros(d);
        v[2 * a] = 1.0;
        for c in &cols {
            let p = ip(c, &v);
            v -= c * p;
        }
        let e = &v / ip(&v, &v).sqrt();
        let je = j * &e;
        cols.push(e);
        cols.push(je);
    }
    DMatrix::from_columns(&cols)
}

/// Raising half c^r(ξ) = Σ_a (ξ(e_a) + iξ(Je_a)) a†_a for ξ given by components.
pub(crate) fn raising_part(frame: &DMatrix<f64>, xi: &[f64]) -> CMat {
    let d = frame.nrows();
    let n = d / 2;
    let mut m = CMat::zeros(1 << n, 1 << n);
    for a in 0..n {
        let xe: f64 = (0..d).map(|mu| xi[mu] * frame[(mu, 2 * a)]).sum();
        let xj: f64 = (0..d).map(|mu| xi[mu] * frame[(mu, 2 * a + 1)]).sum();
        m += creation(n, a) * C64::new(xe, xj);
    }
    m
}

/// Full Clifford action c(ξ) = c^r(ξ) − c^r(ξ)ᴴ.
pub(crate) fn clifford_action(frame: &DMatrix<f64>, xi: &[f64]) -> CMat {
    let r = raising_part(frame, xi);
    &r - r.adjoint()
}

/// Action on the fiber of the frame change u ∈ U(n): |b⟩ ↦ Σ_a u_ab |a⟩ on
/// degree one, extended multiplicatively to exterior powers.
pub(crate) fn fock_lift(u: &CMat) -> CMat {
    let n = u.nrows();
    let dim = 1 << n;
    let cre: Vec<CMat> = (0..n).map(|a| creation(n, a)).collect();
    let mut out = CMat::zeros(dim, dim);
    for s in 0..dim {
        let mut state = DVector::<C64>::zeros(dim);
        state[0] = C64::new(1.0, 0.0);
        for b in (0..n).rev().filter(|b| s & (1 << b) != 0) {
            let mut op = CMat::zeros(dim, dim);
            for a in 0..n {
                op += &cre[a] * u[(a, b)];
            }
            state = op * state;
        }
        out.set_column(s, &state);
    }
    out
}

/// Unitary part of the matrix of complex coordinates of `next` in the frame `base`.
pub(crate) fn frame_transport(base: &DMatrix<f64>, next: &DMatrix<f64>, beta: &DMatrix<f64>) -> CMat {
    let n = base.ncols() / 2;
    let mut s = CMat::zeros(n, n);
    for a in 0..n {
        let e = base.column(2 * a);
        let je = base.column(2 * a + 1);
        for b in 0..n {
            let v = next.column(2 * b);
            let re = (v.transpose() * beta * e)[(0, 0)];
            let im = (v.transpose() * beta * je)[(0, 0)];
            s[(a, b)] = C64::new(re, im);
        }
    }
    let svd = s.svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// Per-site Clifford data in the (0,*) fiber basis.
#[derive(Clone, Debug)]
pub struct CliffordTable {
    pub n: usize,
    pub degrees: Vec<u8>,
    /// Diagonal of σ, equal to 2q − n.
    pub sigma: Vec<f64>,
    /// c(dx^μ) per site and coordinate direction.
    pub coordinate_actions: Vec<Vec<CMat>>,
    /// Raising halves c^r(dx^μ), the part used by the discretized Dirac operator.
    pub coordinate_raising: Vec<Vec<CMat>>,
    pub frames: Vec<DMatrix<f64>>,
    pub max_clifford_defect: f64,
    pub max_sigma_defect: f64,
}

impl CliffordTable {
    pub fn rank(&self) -> usize {
        self.degrees.len()
    }

    /// c(ξ) at a site for an arbitrary covector.
    pub fn action(&self, site: usize, xi: &[f64]) -> CMat {
        clifford_action(&self.frames[site], xi)
    }
}

/// σ = −i Σ_{j>l} ω(v_j,v_l) c(ξ_j)c(ξ_l) over a β-orthonormal frame v with dual coframe ξ.
pub(crate) fn sigma_double_sum(frame: &DMatrix<f64>, omega: &DMatrix<f64>, beta: &DMatrix<f64>) -> CMat {
    let d = frame.nrows();
    let dual: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let v = beta * frame.column(j);
            v.iter().cloned().collect()
        })
        .collect();
    let cs: Vec<CMat> = dual.iter().map(|xi| clifford_action(frame, xi)).collect();
    let mut sigma = CMat::zeros(cs[0].nrows(), cs[0].nrows());
    for j in 0..d {
        for l in 0..j {
            let w = (frame.column(j).transpose() * omega * frame.column(l))[(0, 0)];
            sigma += &cs[j] * &cs[l] * C64::new(0.0, -w);
        }
    }
    sigma
}

pub fn clifford_table(backend: &SymplecticBackend) -> Result<CliffordTable> {
    let n = backend.n;
    let d = 2 * n;
    let degrees = fiber_degrees(n);
    let sigma: Vec<f64> = degrees.iter().map(|&q| 2.0 * q as f64 - n as f64) .collect();
    let sites = backend.sites();
    let mut frames: Vec<DMatrix<f64>> = Vec::with_capacity(sites);
    let mut actions: Vec<Vec<CMat>> = Vec::with_capacity(sites);
    let mut raising: Vec<Vec<CMat>> = Vec::with_capacity(sites);
    let mut max_clifford: f64 = 0.0;
    let mut max_sigma: f64 = 0.0;
    let constant = backend.is_constant_structure();
    for s in 0..sites {
        if constant && s > 0 {
            frames.push(frames[0].clone());
            actions.push(actions[0].clone());
            raising.push(raising[0].clone());
            continue;
        }
        let j = backend.j_at(s);
        let beta = backend.beta_at(s);
        let frame = unitary_frame(&j, &beta);
        let ortho = (frame.transpose() * &beta * &frame - DMatrix::identity(d, d)).amax();
        if !(ortho < 1e-10) {
            return Err(Error::Numerical(format!("frame construction failed at site {s}")));
        }
        let coords: Vec<Vec<f64>> = (0..d).map(|mu| (0..d).map(|nu| if nu == mu { 1.0 } else { 0.0 }).collect()).collect();
        let acts: Vec<CMat> = coords.iter().map(|xi| clifford_action(&frame, xi)).collect();
        let rais: Vec<CMat> = coords.iter().map(|xi| raising_part(&frame, xi)).collect();
        let binv = beta.clone().try_inverse().expect("β invertible");
        for mu in 0..d {
            for nu in 0..d {
                let anti = &acts[mu] * &acts[nu] + &acts[nu] * &acts[mu];
                let want = CMat::identity(1 << n, 1 << n) * C64::new(-2.0 * binv[(mu, nu)], 0.0);
                max_clifford = max_clifford.max((anti - want).camax() / binv.amax());
            }
        }
        let sig = sigma_double_sum(&frame, &backend.omega, &beta);
        let want = CMat::from_diagonal(&DVector::from_iterator(1 << n, sigma.iter().map(|&v| C64::new(v, 0.0))));
        max_sigma = max_sigma.max((sig - want).camax());
        frames.push(frame);
        actions.push(acts);
        raising.push(rais);
    }
    if max_clifford > 1e-12 || max_sigma > 1e-10 {
        return Err(Error::Numerical(format!(
            "Clifford relations violated: relation defect {max_clifford:e}, σ defect {max_sigma:e}"
        )));
    }
    Ok(CliffordTable {
        n,
        degrees,
        sigma,
        coordinate_actions: actions,
        coordinate_raising: raising,
        frames,
        max_clifford_defect: max_clifford,
        max_sigma_defect: max_sigma,
    })
}
