use super::profile::TestFunctionProfile;
use super::rate::{RateExpectation, RatePoint, RateSeries};
use crate::geometry::{levelset_liouville_volume, poisson_bracket, FlowCatalogEntry, ScalarField, SymplecticBackend};
use crate::quantization::{
    embed_degree_zero, projector_distance, spectral_norm, toeplitz, toeplitz_difference, QuantumSpace, ToeplitzMatrix,
};
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

/// s in ‖i·k[T(f),T(g)] − s·T({f,g})‖, fixed by `calibrate_commutator_sign` on the
/// flat 2-torus at k = 10 and frozen here.
pub const COMMUTATOR_SIGN: f64 = -1.0;

pub const EGOROV_MAX_TIME: f64 = 2.0;

/// Gate on ‖UᴴU − I‖ for the Egorov propagator.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Gate on ‖C + Cᴴ‖/‖C‖ for C = k[T(f),T(g)].
pub const ANTI_HERMITIAN_TOL: f64 = 1e-10;

/// {f,g} from closed-form gradients when both symbols have one, otherwise
/// from the backend's difference stencil.
pub fn symbol_bracket(f: &ScalarField, g: &ScalarField, backend: &SymplecticBackend) -> Result<ScalarField> {
    let (Some(fe), Some(ge)) = (&f.expr, &g.expr) else {
        return poisson_bracket(f, g, backend);
    };
    let winv = backend.omega_inverse();
    let d = backend.real_dim();
    let values = (0..backend.sites())
        .map(|s| {
            let p = backend.point(s);
            let (df, dg) = (fe.grad(&p), ge.grad(&p));
            let mut v = 0.0;
            for mu in 0..d {
                for nu in (mu + 1)..d {
                    let w = winv[(mu, nu)];
                    if w != 0.0 {
                        v += w * (df[mu] * dg[nu] - df[nu] * dg[mu]);
                    }
                }
            }
            v
        })
        .collect();
    ScalarField::from_values(backend, values)
}

/// f∘φ_t sampled at the sites; needs a closed-form f.
pub fn pullback(f: &ScalarField, entry: &FlowCatalogEntry, t: f64, backend: &SymplecticBackend) -> Result<ScalarField> {
    let expr = f
        .expr
        .as_ref()
        .ok_or_else(|| Error::Unsupported("composing a sampled field with a flow needs interpolation".into()))?;
    let values = (0..backend.sites()).map(|s| expr.eval(&entry.apply(t, &backend.point(s)))).collect();
    ScalarField::from_values(backend, values)
}

fn check_spaces(spaces: &[QuantumSpace], backend: &SymplecticBackend) -> Result<()> {
    let descriptor = backend.spec.descriptor();
    if let Some(s) = spaces.iter().find(|s| s.backend != descriptor) {
        return Err(Error::Mismatch(format!("space at k = {} lives on {}", s.k, s.backend)));
    }
    if spaces.windows(2).any(|w| w[0].scheme != w[1].scheme) {
        return Err(Error::Mismatch("series mixes quantization schemes".into()));
    }
    Ok(())
}

fn non_constant(f: &ScalarField, name: &str) -> Result<()> {
    if f.max() - f.min() == 0.0 {
        return Err(Error::Invalid(format!("symbol {name} = {} is constant", f.describe())));
    }
    Ok(())
}

fn points(ks: &[i64], values: &[f64]) -> Vec<RatePoint> {
    ks.iter().zip(values).map(|(&k, &value)| RatePoint { k, value }).collect()
}

fn commutator(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

#[derive(Clone, Debug, Serialize)]
pub struct DeformationSeries {
    /// | ‖T(f)‖ − max|f| |
    pub norm: RateSeries,
    /// ‖T(f)T(g) − T(fg)‖
    pub product: RateSeries,
    /// ‖i·k[T(f),T(g)] − s·T({f,g})‖
    pub commutator: RateSeries,
    pub commutator_sign: f64,
    /// Largest ‖C + Cᴴ‖/‖C‖ over k for C = k[T(f),T(g)].
    pub anti_hermitian_defect: f64,
}

struct DeformationPoint {
    norm: f64,
    product: f64,
    commutator: f64,
    anti_hermitian: f64,
}

fn deformation_point(
    space: &QuantumSpace,
    f: &ScalarField,
    g: &ScalarField,
    fg: &ScalarField,
    bracket: &ScalarField,
    backend: &SymplecticBackend,
) -> Result<DeformationPoint> {
    let tf = toeplitz(space, f, backend)?.matrix;
    let tg = toeplitz(space, g, backend)?.matrix;
    let tfg = toeplitz(space, fg, backend)?.matrix;
    let tb = toeplitz(space, bracket, backend)?.matrix;
    let k = space.k as f64;
    let c = commutator(&tf, &tg) * C64::new(k, 0.0);
    let c_norm = spectral_norm(&c);
    let anti_hermitian = if c_norm > 0.0 { spectral_norm(&(&c + c.adjoint())) / c_norm } else { 0.0 };
    let compared = &c * C64::i() - &tb * C64::new(COMMUTATOR_SIGN, 0.0);
    Ok(DeformationPoint {
        norm: (spectral_norm(&tf) - f.max_abs()).abs(),
        product: spectral_norm(&(&tf * &tg - &tfg)),
        commutator: spectral_norm(&compared),
        anti_hermitian,
    })
}

/// The three deformation-estimate series over the given quantum spaces
/// (increasing k, one scheme).
pub fn deformation_suite(
    backend: &SymplecticBackend,
    spaces: &[QuantumSpace],
    f: &ScalarField,
    g: &ScalarField,
    expectation: RateExpectation,
) -> Result<DeformationSeries> {
    check_spaces(spaces, backend)?;
    non_constant(f, "f")?;
    non_constant(g, "g")?;
    let fg = f.product(g);
    let bracket = symbol_bracket(f, g, backend)?;
    let rows: Vec<DeformationPoint> =
        spaces.par_iter().map(|s| deformation_point(s, f, g, &fg, &bracket, backend)).collect::<Result<_>>()?;
    let anti_hermitian_defect = rows.iter().map(|r| r.anti_hermitian).fold(0.0, f64::max);
    if anti_hermitian_defect > ANTI_HERMITIAN_TOL {
        return Err(Error::Numerical(format!("k[T(f),T(g)] fails anti-Hermiticity by {anti_hermitian_defect:.2e}")));
    }
    let ks: Vec<i64> = spaces.iter().map(|s| s.k).collect();
    let scheme = spaces.first().map(|s| s.scheme.name()).unwrap_or("none");
    let series = |name: &str, pick: fn(&DeformationPoint) -> f64| {
        let values: Vec<f64> = rows.iter().map(pick).collect();
        RateSeries::new(format!("{scheme}_{name}"), points(&ks, &values), expectation)
    };
    Ok(DeformationSeries {
        norm: series("norm_defect", |r| r.norm)?,
        product: series("product_defect", |r| r.product)?,
        commutator: series("commutator_defect", |r| r.commutator)?,
        commutator_sign: COMMUTATOR_SIGN,
        anti_hermitian_defect,
    })
}

/// The s ∈ {±1} minimizing ‖i·k[T(f),T(g)] − s·T({f,g})‖ on one space.
pub fn calibrate_commutator_sign(
    space: &QuantumSpace,
    f: &ScalarField,
    g: &ScalarField,
    backend: &SymplecticBackend,
) -> Result<f64> {
    let tf = toeplitz(space, f, backend)?.matrix;
    let tg = toeplitz(space, g, backend)?.matrix;
    let tb = toeplitz(space, &symbol_bracket(f, g, backend)?, backend)?.matrix;
    let a = commutator(&tf, &tg) * C64::new(0.0, space.k as f64);
    let plus = spectral_norm(&(&a - &tb));
    let minus = spectral_norm(&(&a + &tb));
    Ok(if plus <= minus { 1.0 } else { -1.0 })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    pub k: i64,
    /// ‖S(f) − T(f)‖ as operators on the ambient space.
    pub difference: f64,
    pub distance: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonSeries {
    pub difference: RateSeries,
    /// sin of the largest principal angle between the two spaces.
    pub distance: RateSeries,
    pub bounds: Vec<BoundCheck>,
}

/// ‖Sₖ(f) − Tₖ(f)‖ and the projector distance, with the bound
/// ‖S(f) − T(f)‖ ≤ 2·max|f|·dist checked at every k. The two lists must share k values.
pub fn scheme_comparison_suite(
    backend: &SymplecticBackend,
    almost_kahler: &[QuantumSpace],
    spinc: &[QuantumSpace],
    f: &ScalarField,
    expectation: RateExpectation,
) -> Result<ComparisonSeries> {
    check_spaces(almost_kahler, backend)?;
    check_spaces(spinc, backend)?;
    if almost_kahler.len() != spinc.len() || almost_kahler.iter().zip(spinc).any(|(a, b)| a.k != b.k) {
        return Err(Error::Mismatch("scheme comparison needs both spaces at every k".into()));
    }
    let fmax = f.max_abs();
    let bounds: Vec<BoundCheck> = almost_kahler
        .par_iter()
        .zip(spinc)
        .map(|(a, q)| {
            let e = embed_degree_zero(a, q)?;
            let t = toeplitz(&e, f, backend)?;
            let s = toeplitz(q, f, backend)?;
            let difference = toeplitz_difference(&e, &t, q, &s);
            let distance = projector_distance(&e, q)?;
            let bound = 2.0 * fmax * distance;
            // rounding slack for spaces that agree to machine precision
            let holds = difference <= bound + 1e-12 * fmax.max(1.0);
            Ok(BoundCheck { k: a.k, difference, distance, bound, holds })
        })
        .collect::<Result<_>>()?;
    let ks: Vec<i64> = bounds.iter().map(|b| b.k).collect();
    let diffs: Vec<f64> = bounds.iter().map(|b| b.difference).collect();
    let dists: Vec<f64> = bounds.iter().map(|b| b.distance).collect();
    Ok(ComparisonSeries {
        difference: RateSeries::new("scheme_comparison", points(&ks, &diffs), expectation)?,
        distance: RateSeries::new("projector_distance", points(&ks, &dists), expectation)?,
        bounds,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EgorovSeries {
    pub series: RateSeries,
    pub time: f64,
    pub flow: FlowCatalogEntry,
    /// Largest ‖UᴴU − I‖ over k.
    pub unitarity_defect: f64,
}

/// e^{−iktT} by Hermitian eigendecomposition; the identity at t = 0.
pub fn propagator(t_h: &ToeplitzMatrix, t: f64) -> DMatrix<C64> {
    let d = t_h.matrix.nrows();
    if t == 0.0 {
        return DMatrix::identity(d, d);
    }
    let eig = t_h.matrix.clone().symmetric_eigen();
    let k = t_h.k as f64;
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -k * t * l)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// ‖e^{−iktT(H)} T(f) e^{iktT(H)} − T(f∘φ_t)‖ over the given spaces.
pub fn egorov_defect(
    backend: &SymplecticBackend,
    entry: &FlowCatalogEntry,
    spaces: &[QuantumSpace],
    f: &ScalarField,
    t: f64,
    expectation: RateExpectation,
) -> Result<EgorovSeries> {
    check_spaces(spaces, backend)?;
    if !(t.abs() <= EGOROV_MAX_TIME) {
        return Err(Error::Invalid(format!("Egorov time {t} outside [−{EGOROV_MAX_TIME}, {EGOROV_MAX_TIME}]")));
    }
    let h_expr = entry
        .hamiltonian()
        .ok_or_else(|| Error::Unsupported(format!("{entry:?} has no single-valued Hamiltonian")))?;
    FlowCatalogEntry::for_hamiltonian(backend.kind(), &h_expr)?;
    let h = ScalarField::from_expr(backend, h_expr);
    let moved = pullback(f, entry, t, backend)?;
    let rows: Vec<(f64, f64)> = spaces
        .par_iter()
        .map(|s| {
            let th = toeplitz(s, &h, backend)?;
            let tf = toeplitz(s, f, backend)?.matrix;
            let target = toeplitz(s, &moved, backend)?.matrix;
            let u = propagator(&th, t);
            let d = u.nrows();
            let unitarity = spectral_norm(&(u.adjoint() * &u - DMatrix::<C64>::identity(d, d)));
            let evolved = &u * tf * u.adjoint();
            Ok((spectral_norm(&(evolved - target)), unitarity))
        })
        .collect::<Result<_>>()?;
    let unitarity_defect = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    if unitarity_defect > UNITARITY_TOL {
        return Err(Error::Numerical(format!("propagator unitarity defect {unitarity_defect:.2e}")));
    }
    let ks: Vec<i64> = spaces.iter().map(|s| s.k).collect();
    let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok(EgorovSeries {
        series: RateSeries::new("egorov_defect", points(&ks, &values), expectation)?,
        time: t,
        flow: entry.clone(),
        unitarity_defect,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedTrace {
    pub k: i64,
    pub energy: f64,
    pub value: f64,
    pub eigenvalues: Vec<f64>,
}

/// Σᵢ φ(k(Eᵢ − E)) over the eigenvalues of a Toeplitz matrix.
pub fn weighted_trace_of(t: &ToeplitzMatrix, energy: f64, profile: &TestFunctionProfile) -> WeightedTrace {
    let eigenvalues = t.eigenvalues();
    let k = t.k as f64;
    let value = eigenvalues.iter().map(|e| profile.phi(k * (e - energy))).sum();
    WeightedTrace { k: t.k, energy, value, eigenvalues }
}

pub fn weighted_trace(
    space: &QuantumSpace,
    h: &ScalarField,
    energy: f64,
    profile: &TestFunctionProfile,
    backend: &SymplecticBackend,
) -> Result<WeightedTrace> {
    Ok(weighted_trace_of(&toeplitz(space, h, backend)?, energy, profile))
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceSeries {
    /// |W_k / k^{power} − C₀₀|
    pub series: RateSeries,
    pub energy: f64,
    /// C₀₀ = (2π)^{−n} φ̂(0) vol(H⁻¹(E))
    pub leading_coefficient: f64,
    pub level_volume: f64,
    pub level_volume_error: f64,
    pub power: i32,
    pub shortest_period: Option<f64>,
    pub traces: Vec<WeightedTrace>,
    /// Deviation over |C₀₀| at each k (absent when C₀₀ = 0).
    pub relative_deviation: Option<Vec<f64>>,
}

/// Leading term of the trace formula: W_k/k^{n−1} against C₀₀.
///
/// Refuses test functions whose support reaches a closed orbit on H⁻¹(E).
pub fn trace_formula_check(
    backend: &SymplecticBackend,
    entry: &FlowCatalogEntry,
    energy: f64,
    profile: &TestFunctionProfile,
    spaces: &[QuantumSpace],
    expectation: RateExpectation,
) -> Result<TraceSeries> {
    check_spaces(spaces, backend)?;
    let h_expr = entry
        .hamiltonian()
        .ok_or_else(|| Error::Unsupported(format!("{entry:?} has no single-valued Hamiltonian")))?;
    let periods = entry.periods(energy)?;
    let offending: Vec<f64> = periods.iter().cloned().filter(|p| *p <= profile.support).collect();
    if !offending.is_empty() {
        return Err(Error::PeriodicOrbits { support: profile.support, periods: offending });
    }
    let h = ScalarField::from_expr(backend, h_expr);
    let volume = levelset_liouville_volume(&h, energy, backend)?;
    let n = backend.kind().n() as i32;
    let leading = (2.0 * std::f64::consts::PI).powi(-n) * profile.phi_hat_zero() * volume.value;
    let power = n - 1;
    let traces: Vec<WeightedTrace> =
        spaces.par_iter().map(|s| weighted_trace(s, &h, energy, profile, backend)).collect::<Result<_>>()?;
    let deviations: Vec<f64> =
        traces.iter().map(|w| (w.value / (w.k as f64).powi(power) - leading).abs()).collect();
    let ks: Vec<i64> = spaces.iter().map(|s| s.k).collect();
    let relative_deviation = (leading != 0.0).then(|| deviations.iter().map(|d| d / leading.abs()).collect());
    Ok(TraceSeries {
        series: RateSeries::new("trace_leading_term", points(&ks, &deviations), expectation)?,
        energy,
        leading_coefficient: leading,
        level_volume: volume.value,
        level_volume_error: volume.error_estimate,
        power,
        shortest_period: periods.first().cloned(),
        traces,
        relative_deviation,
    })
}
