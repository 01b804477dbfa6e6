//! Lattice stencils on tori: transport data, the divergence-form Bochner
//! Laplacian and the chiral Dirac stencil.

use super::clifford::{fock_lift, frame_transport, CliffordTable};
use super::LinearOperator;
use crate::bundle::GaugeRealization;
use crate::geometry::SymplecticBackend;
use crate::{Error, Result, C64};
use rayon::prelude::*;

const MAX_RANK: usize = 4;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Edge transports T_μ(s), carrying x(s+e_μ) back to s: line-bundle phase
/// times, for graded fibers on varying structures, the frame transport.
pub(crate) struct Links {
    pub h: f64,
    pub dims: usize,
    pub sites: usize,
    pub rank: usize,
    pub fwd: Vec<Vec<u32>>,
    pub bwd: Vec<Vec<u32>>,
    phase: Vec<Vec<C64>>,
    fiber: Option<Vec<Vec<C64>>>,
}

impl Links {
    pub fn new(backend: &SymplecticBackend, gauge: &GaugeRealization) -> Result<Self> {
        let grid = backend.torus().ok_or_else(|| Error::Unsupported("lattice stencil on a non-torus backend".into()))?;
        let rank = gauge.fiber_rank();
        if rank > MAX_RANK {
            return Err(Error::Unsupported(format!("fiber rank {rank} exceeds {MAX_RANK}")));
        }
        let phase: Vec<Vec<C64>> = (0..grid.dims).map(|mu| (0..grid.sites).map(|s| gauge.transport(mu, s)).collect()).collect();
        let fiber = if rank > 1 && !backend.is_constant_structure() {
            let table = super::clifford_table(backend)?;
            if table.rank() != rank {
                return Err(Error::Mismatch("graded fiber does not match the (0,*) fiber".into()));
            }
            Some(
                (0..grid.dims)
                    .map(|mu| {
                        (0..grid.sites)
                            .into_par_iter()
                            .flat_map_iter(|s| {
                                let next = grid.shift(s, mu, 1);
                                let u = frame_transport(&table.frames[s], &table.frames[next], &backend.beta_at(s));
                                let f = fock_lift(&u);
                                (0..rank).flat_map(move |a| (0..rank).map(move |b| (a, b))).map(move |(a, b)| f[(a, b)]).collect::<Vec<_>>()
                            })
                            .collect()
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(Self {
            h: grid.h,
            dims: grid.dims,
            sites: grid.sites,
            rank,
            fwd: grid.neighbor_table(1),
            bwd: grid.neighbor_table(-1),
            phase,
            fiber,
        })
    }

    /// out = T_μ(s) v
    #[inline]
    pub fn push(&self, mu: usize, s: usize, v: &[C64], out: &mut [C64]) {
        let p = self.phase[mu][s];
        let r = self.rank;
        match &self.fiber {
            None => {
                for c in 0..r {
                    out[c] = p * v[c];
                }
            }
            Some(f) => {
                let m = &f[mu][s * r * r..(s + 1) * r * r];
                for a in 0..r {
                    let mut acc = ZERO;
                    for b in 0..r {
                        acc += m[a * r + b] * v[b];
                    }
                    out[a] = p * acc;
                }
            }
        }
    }

    /// out = T_μ(s)ᴴ v
    #[inline]
    pub fn pull(&self, mu: usize, s: usize, v: &[C64], out: &mut [C64]) {
        let p = self.phase[mu][s].conj();
        let r = self.rank;
        match &self.fiber {
            None => {
                for c in 0..r {
                    out[c] = p * v[c];
                }
            }
            Some(f) => {
                let m = &f[mu][s * r * r..(s + 1) * r * r];
                for a in 0..r {
                    let mut acc = ZERO;
                    for b in 0..r {
                        acc += m[b * r + a].conj() * v[b];
                    }
                    out[a] = p * acc;
                }
            }
        }
    }
}

/// Quadratic-form Laplacian M⁻¹ Σ Dᴴ W D: forward differences weighted by the
/// mid-edge average of √g·g^{μμ}, centered differences for the off-diagonal
/// metric terms. Hermitian by construction with respect to M = √g·h^{2n}.
pub(crate) struct TorusBochner {
    links: Links,
    edge_w: Vec<Vec<f64>>,
    cross: Option<Vec<Vec<f64>>>,
    inv_mass: Vec<f64>,
}

impl TorusBochner {
    pub fn new(backend: &SymplecticBackend, gauge: &GaugeRealization) -> Result<Self> {
        let links = Links::new(backend, gauge)?;
        let d = links.dims;
        let cell = links.h.powi(d as i32);
        let dens: Vec<Vec<f64>> = (0..links.sites)
            .map(|s| {
                let binv = backend.beta_at(s).try_inverse().expect("β invertible");
                let g = backend.vol_density(s);
                binv.iter().map(|v| v * g * cell).collect()
            })
            .collect();
        let edge_w = (0..d)
            .map(|mu| {
                (0..links.sites)
                    .map(|s| 0.5 * (dens[s][mu * d + mu] + dens[links.fwd[mu][s] as usize][mu * d + mu]))
                    .collect()
            })
            .collect();
        let off = dens.iter().any(|m| (0..d).any(|a| (0..d).any(|b| a != b && m[a * d + b] != 0.0)));
        let cross = off.then(|| {
            dens.iter()
                .map(|m| {
                    let mut c = m.clone();
                    for a in 0..d {
                        c[a * d + a] = 0.0;
                    }
                    c
                })
                .collect()
        });
        let inv_mass = (0..links.sites).map(|s| 1.0 / backend.site_measure(s)).collect();
        Ok(Self { links, edge_w, cross, inv_mass })
    }
}

impl LinearOperator for TorusBochner {
    fn dim(&self) -> usize {
        self.links.sites * self.links.rank
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let l = &self.links;
        let (r, h, d) = (l.rank, l.h, l.dims);
        let edges: Vec<Vec<C64>> = (0..d)
            .map(|mu| {
                let mut e = vec![ZERO; l.sites * r];
                e.par_chunks_mut(r).enumerate().for_each(|(s, es)| {
                    let nb = l.fwd[mu][s] as usize;
                    l.push(mu, s, &x[nb * r..nb * r + r], es);
                    let w = self.edge_w[mu][s] / h;
                    for c in 0..r {
                        es[c] = (es[c] - x[s * r + c]) * w;
                    }
                });
                e
            })
            .collect();
        let weighted_centered = self.cross.as_ref().map(|cross| {
            let mut p = vec![ZERO; l.sites * r * d];
            p.par_chunks_mut(r * d).enumerate().for_each(|(s, ps)| {
                let mut a = [ZERO; MAX_RANK];
                let mut b = [ZERO; MAX_RANK];
                for mu in 0..d {
                    let f = l.fwd[mu][s] as usize;
                    let bk = l.bwd[mu][s] as usize;
                    l.push(mu, s, &x[f * r..f * r + r], &mut a);
                    l.pull(mu, bk, &x[bk * r..bk * r + r], &mut b);
                    for c in 0..r {
                        ps[mu * r + c] = (a[c] - b[c]) / (2.0 * h);
                    }
                }
            });
            let mut q = vec![ZERO; l.sites * r * d];
            q.par_chunks_mut(r * d).enumerate().for_each(|(s, qs)| {
                let cs = &cross[s];
                let ps = &p[s * r * d..(s + 1) * r * d];
                for mu in 0..d {
                    for nu in 0..d {
                        let w = cs[mu * d + nu];
                        if w != 0.0 {
                            for c in 0..r {
                                qs[mu * r + c] += ps[nu * r + c] * w;
                            }
                        }
                    }
                }
            });
            q
        });
        y.par_chunks_mut(r).enumerate().for_each(|(s, ys)| {
            let mut acc = [ZERO; MAX_RANK];
            let mut t = [ZERO; MAX_RANK];
            let mut u = [ZERO; MAX_RANK];
            for mu in 0..d {
                let bk = l.bwd[mu][s] as usize;
                let e = &edges[mu];
                l.pull(mu, bk, &e[bk * r..bk * r + r], &mut t);
                for c in 0..r {
                    acc[c] += (t[c] - e[s * r + c]) / h;
                }
                if let Some(q) = &weighted_centered {
                    let f = l.fwd[mu][s] as usize;
                    let stride = r * d;
                    l.pull(mu, bk, &q[bk * stride + mu * r..bk * stride + mu * r + r], &mut t);
                    l.push(mu, s, &q[f * stride + mu * r..f * stride + mu * r + r], &mut u);
                    for c in 0..r {
                        acc[c] += (t[c] - u[c]) / (2.0 * h);
                    }
                }
            }
            for c in 0..r {
                ys[c] = acc[c] * self.inv_mass[s];
            }
        });
    }
}

/// D = D_r + D_r†, with D_r = Σ_μ c^r(dx^μ)·∂⁺_μ and ∂⁺_μ the second-order
/// one-sided covariant difference (−3x(s) + 4T x(s+e_μ) − T T x(s+2e_μ))/2h.
/// D_r raises form degree by one, so D is odd exactly.
pub(crate) struct TorusDirac {
    links: Links,
    raise: Vec<Vec<C64>>,
    mass: Vec<f64>,
}

impl TorusDirac {
    pub fn new(backend: &SymplecticBackend, gauge: &GaugeRealization, table: &CliffordTable) -> Result<Self> {
        let links = Links::new(backend, gauge)?;
        let r = links.rank;
        let raise = (0..links.dims)
            .map(|mu| {
                (0..links.sites)
                    .flat_map(|s| {
                        let m = &table.coordinate_raising[s][mu];
                        (0..r * r).map(move |i| m[(i / r, i % r)])
                    })
                    .collect()
            })
            .collect();
        let mass = (0..links.sites).map(|s| backend.site_measure(s)).collect();
        Ok(Self { links, raise, mass })
    }
}

#[inline]
fn matvec(m: &[C64], v: &[C64], r: usize, out: &mut [C64]) {
    for a in 0..r {
        let mut acc = ZERO;
        for b in 0..r {
            acc += m[a * r + b] * v[b];
        }
        out[a] += acc;
    }
}

#[inline]
fn matvec_adj(m: &[C64], v: &[C64], r: usize, scale: f64, out: &mut [C64]) {
    for a in 0..r {
        let mut acc = ZERO;
        for b in 0..r {
            acc += m[b * r + a].conj() * v[b];
        }
        out[a] = acc * scale;
    }
}

impl LinearOperator for TorusDirac {
    fn dim(&self) -> usize {
        self.links.sites * self.links.rank
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let l = &self.links;
        let (r, h, d) = (l.rank, l.h, l.dims);
        let rr = r * r;
        // u_μ = c^r(dx^μ)ᴴ M x / 2h, needed by the adjoint half
        let lowered: Vec<Vec<C64>> = (0..d)
            .map(|mu| {
                let mut u = vec![ZERO; l.sites * r];
                u.par_chunks_mut(r).enumerate().for_each(|(s, us)| {
                    let m = &self.raise[mu][s * rr..(s + 1) * rr];
                    matvec_adj(m, &x[s * r..s * r + r], r, self.mass[s] / (2.0 * h), us);
                });
                u
            })
            .collect();
        y.par_chunks_mut(r).enumerate().for_each(|(s, ys)| {
            let mut acc = [ZERO; MAX_RANK];
            let mut diff = [ZERO; MAX_RANK];
            let mut t = [ZERO; MAX_RANK];
            let mut t2 = [ZERO; MAX_RANK];
            for mu in 0..d {
                let s1 = l.fwd[mu][s] as usize;
                let s2 = l.fwd[mu][s1] as usize;
                l.push(mu, s1, &x[s2 * r..s2 * r + r], &mut t);
                for c in 0..r {
                    t2[c] = x[s1 * r + c] * 4.0 - t[c];
                }
                l.push(mu, s, &t2, &mut t);
                for c in 0..r {
                    diff[c] = (t[c] - x[s * r + c] * 3.0) / (2.0 * h);
                }
                matvec(&self.raise[mu][s * rr..(s + 1) * rr], &diff, r, &mut acc);
            }
            let mut adj = [ZERO; MAX_RANK];
            for mu in 0..d {
                let u = &lowered[mu];
                let b1 = l.bwd[mu][s] as usize;
                let b2 = l.bwd[mu][b1] as usize;
                l.pull(mu, b2, &u[b2 * r..b2 * r + r], &mut t);
                for c in 0..r {
                    t2[c] = u[b1 * r + c] * 4.0 - t[c];
                }
                l.pull(mu, b1, &t2, &mut t);
                for c in 0..r {
                    adj[c] += t[c] - u[s * r + c] * 3.0;
                }
            }
            let inv = 1.0 / self.mass[s];
            for c in 0..r {
                ys[c] = acc[c] + adj[c] * inv;
            }
        });
    }
}
