use super::*;
use crate::geometry::{build_backend, BackendSpec, FieldExpr, FlowCatalogEntry, ScalarField, SymplecticBackend};
use crate::quantization::{almost_kahler_space, spinc_space, QuantumSpace, Scheme, SolveOptions, ToeplitzMatrix};
use crate::{Error, C64};
use nalgebra::DMatrix;

const INVERSE: RateExpectation = RateExpectation::Slope { slope: -1.0, tolerance: 0.25 };
const DECAY: RateExpectation = RateExpectation::Decay { noise: 0.01 };

fn sphere() -> SymplecticBackend {
    build_backend(&BackendSpec::sphere(8)).unwrap()
}

fn sphere_spaces(b: &SymplecticBackend, ks: std::ops::RangeInclusive<i64>) -> Vec<QuantumSpace> {
    ks.map(|k| almost_kahler_space(b, k, &SolveOptions::default()).unwrap()).collect()
}

fn field(b: &SymplecticBackend, e: FieldExpr) -> ScalarField {
    ScalarField::from_expr(b, e)
}

#[test]
fn weighted_trace_matches_direct_eigenvalue_sum() {
    // Hermitian 5×5 with eigenvalues fixed by hand: Q diag(λ) Qᴴ with a Householder Q
    let lambda = [-0.9, -0.3, 0.05, 0.4, 0.8];
    let v = DMatrix::from_fn(5, 1, |i, _| C64::new(1.0 + i as f64, 0.5 * i as f64));
    let v = &v / C64::new(v.norm(), 0.0);
    let q = DMatrix::<C64>::identity(5, 5) - &v * v.adjoint() * C64::new(2.0, 0.0);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(5, lambda.iter().map(|&l| C64::new(l, 0.0))));
    let t = ToeplitzMatrix { matrix: &q * d * q.adjoint(), k: 3, scheme: Scheme::AlmostKahler, symbol: "hand".into() };
    let p = TestFunctionProfile::bump(0.7).unwrap();
    let w = weighted_trace_of(&t, 0.1, &p);
    let direct: f64 = lambda.iter().map(|l| p.phi(3.0 * (l - 0.1))).sum();
    assert!((w.value - direct).abs() < 1e-12, "{} vs {direct}", w.value);
    for (a, b) in w.eigenvalues.iter().zip(lambda) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn weighted_trace_laws() {
    let b = sphere();
    let s = almost_kahler_space(&b, 4, &SolveOptions::default()).unwrap();
    let h = field(&b, FieldExpr::SphereZ);
    let p = TestFunctionProfile::bump(0.7).unwrap();
    let zero = TestFunctionProfile::zero(0.7).unwrap();
    assert_eq!(weighted_trace(&s, &h, 0.1, &zero, &b).unwrap().value, 0.0);

    let base = weighted_trace(&s, &h, 0.1, &p, &b).unwrap().value;
    let shifted = weighted_trace(&s, &h.shifted(0.37), 0.47, &p, &b).unwrap().value;
    assert!((base - shifted).abs() < 1e-10, "{base} vs {shifted}");

    let doubled = weighted_trace(&s, &h, 0.1, &p.scaled(2.0).unwrap(), &b).unwrap().value;
    assert!((doubled - 2.0 * base).abs() < 1e-12);
}

#[test]
fn equal_symbols_give_zero_commutator_series() {
    let b = sphere();
    let spaces = sphere_spaces(&b, 2..=5);
    let f = field(&b, FieldExpr::SphereX);
    let d = deformation_suite(&b, &spaces, &f, &f, INVERSE).unwrap();
    assert!(d.commutator.values().iter().all(|v| *v == 0.0));
    assert!(d.commutator.passed && d.commutator.fit.is_none());
    assert_eq!(d.norm.points.len(), 4);
}

#[test]
fn deformation_suite_on_sphere_decays_like_one_over_k() {
    // exact monopole basis: only the O(1/k) law is left, but the product defect
    // behaves like C/(k + 5), so the fit starts well past small k
    let b = sphere();
    let spaces: Vec<QuantumSpace> =
        (16..=40).step_by(4).map(|k| almost_kahler_space(&b, k, &SolveOptions::default()).unwrap()).collect();
    let f = field(&b, FieldExpr::SphereX);
    let g = field(&b, FieldExpr::SphereY);
    let d = deformation_suite(&b, &spaces, &f, &g, INVERSE).unwrap();
    for s in [&d.norm, &d.product, &d.commutator] {
        assert!(s.passed, "{}: slope {:?} residual {:?} {}", s.claim, s.slope(), s.max_residual_log10, s.note);
    }
    assert!(d.anti_hermitian_defect < ANTI_HERMITIAN_TOL);
}

#[test]
fn deformation_suite_rejects_bad_input() {
    let b = sphere();
    let spaces = sphere_spaces(&b, 2..=4);
    let f = field(&b, FieldExpr::SphereX);
    let c = ScalarField::constant(&b, 1.0);
    assert!(matches!(deformation_suite(&b, &spaces, &f, &f, INVERSE), Err(Error::TooFewPoints { .. })));
    assert!(deformation_suite(&b, &spaces, &c, &f, INVERSE).is_err());
}

#[test]
fn commutator_sign_on_sphere_matches_frozen_sign() {
    let b = sphere();
    let s = almost_kahler_space(&b, 10, &SolveOptions::default()).unwrap();
    let f = field(&b, FieldExpr::SphereX);
    let g = field(&b, FieldExpr::SphereY);
    assert_eq!(calibrate_commutator_sign(&s, &f, &g, &b).unwrap(), COMMUTATOR_SIGN);
}

#[test]
fn sphere_schemes_agree() {
    let b = sphere();
    let ks = 1..=4;
    let ak = sphere_spaces(&b, ks.clone());
    let q: Vec<QuantumSpace> = ks.map(|k| spinc_space(&b, k, &SolveOptions::default()).unwrap()).collect();
    for f in [field(&b, FieldExpr::SphereZ), ScalarField::constant(&b, 2.5)] {
        let c = scheme_comparison_suite(&b, &ak, &q, &f, INVERSE).unwrap();
        assert!(c.bounds.iter().all(|x| x.holds && x.difference < 1e-12), "{:?}", c.bounds);
    }
}

#[test]
fn egorov_trivial_cases() {
    let b = sphere();
    let spaces = sphere_spaces(&b, 3..=6);
    let entry = FlowCatalogEntry::SphereRotation;
    let f = field(&b, FieldExpr::SphereX);
    let e0 = egorov_defect(&b, &entry, &spaces, &f, 0.0, INVERSE).unwrap();
    assert!(e0.series.values().iter().all(|v| *v == 0.0));

    // f a function of H: T(f) = T(H) commutes with the propagator
    let h = field(&b, FieldExpr::SphereZ);
    let e = egorov_defect(&b, &entry, &spaces, &h, 0.8, INVERSE).unwrap();
    assert!(e.series.values().iter().all(|v| *v < 1e-12), "{:?}", e.series.values());
    assert!(e.unitarity_defect < UNITARITY_TOL);

    assert!(egorov_defect(&b, &entry, &spaces, &f, 2.5, INVERSE).is_err());
    let drift = FlowCatalogEntry::Translation { velocity: vec![1.0, 0.0] };
    assert!(matches!(egorov_defect(&b, &drift, &spaces, &f, 0.5, INVERSE), Err(Error::Unsupported(_))));
}

#[test]
fn egorov_rotation_is_exact_on_sphere() {
    // rotation about the axis of H is a symmetry of the monopole spaces, so the
    // relation holds with no error beyond the O(1/k) Toeplitz symbol calculus
    let b = sphere();
    let spaces = sphere_spaces(&b, 4..=9);
    let f = field(&b, FieldExpr::SphereX);
    let e = egorov_defect(&b, &FlowCatalogEntry::SphereRotation, &spaces, &f, 0.5, INVERSE).unwrap();
    let v = e.series.values();
    assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{v:?}");
}

#[test]
fn trace_check_refuses_long_support() {
    let b = sphere();
    let p = TestFunctionProfile::bump(3.5).unwrap();
    match trace_formula_check(&b, &FlowCatalogEntry::SphereRotation, 0.0, &p, &[], DECAY) {
        Err(Error::PeriodicOrbits { periods, .. }) => assert!((periods[0] - std::f64::consts::PI).abs() < 1e-15),
        other => panic!("{other:?}"),
    }
}

#[test]
fn trace_check_with_zero_profile_is_identically_zero() {
    let b = sphere();
    let spaces = sphere_spaces(&b, 2..=5);
    let p = TestFunctionProfile::zero(0.7).unwrap();
    let t = trace_formula_check(&b, &FlowCatalogEntry::SphereRotation, 0.2, &p, &spaces, DECAY).unwrap();
    assert_eq!(t.leading_coefficient, 0.0);
    assert!(t.series.values().iter().all(|v| *v == 0.0) && t.series.passed);
}
