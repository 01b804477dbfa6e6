use super::*;
use crate::bundle::{realize_prequantum, SectionLayout};
use crate::geometry::{build_backend, BackendSpec};
use crate::operators::{bochner_laplacian, dirac_operator, rescaled_laplacian, LinearOperator};
use std::sync::Arc;

struct Diag(Vec<f64>);

impl LinearOperator for Diag {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for i in 0..x.len() {
            y[i] = x[i] * self.0[i];
        }
    }
}

fn diagonal_handle(d: Vec<f64>) -> HermitianOperatorHandle {
    let n = d.len();
    HermitianOperatorHandle::with_weights(
        "diag",
        0,
        "test".into(),
        Arc::new(SectionLayout::scalar(n)),
        Arc::new(vec![1.0; n]),
        Arc::new(Diag(d)),
        false,
    )
    .unwrap()
}

#[test]
fn riemann_roch_closed_forms() {
    assert_eq!(riemann_roch_dimension(BackendKind::Torus2, 7), 7);
    assert_eq!(riemann_roch_dimension(BackendKind::Torus4, 3), 9);
    assert_eq!(riemann_roch_dimension(BackendKind::Sphere2, 3), 4);
}

#[test]
fn diagonal_oracle_with_multiplicities() {
    let mut d: Vec<f64> = (0..300).map(|i| 10.0 + (i as f64 * 0.37).sin() * 5.0 + i as f64 * 0.1).collect();
    for v in d.iter_mut().take(3) {
        *v = -1.0;
    }
    d[50] = 0.5;
    d[51] = 0.5;
    let op = diagonal_handle(d.clone());
    let r = lowest_eigenpairs(&op, 8, 1e-11).unwrap();
    assert!(r.converged);
    let mut sorted = d;
    sorted.sort_by(f64::total_cmp);
    for (got, want) in r.eigenvalues.iter().zip(&sorted) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    assert!(r.gram_defect(&op.weights) < 1e-10);
    assert!(r.residuals.iter().zip(&r.eigenvalues).all(|(res, l)| *res <= 1e-11 * l.abs().max(1.0)));
}

#[test]
fn lanczos_matches_dense_on_magnetic_laplacian() {
    let b = build_backend(&BackendSpec::torus2(16)).unwrap();
    let g = realize_prequantum(&b, 3).unwrap();
    let op = bochner_laplacian(&b, &g, 3).unwrap();
    let dense = dense_spectrum(&op).unwrap();
    let r = lowest_eigenpairs(&op, 8, 1e-10).unwrap();
    assert!(r.converged);
    for (a, b) in r.eigenvalues.iter().zip(&dense) {
        assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn lanczos_matches_dense_on_dirac_square() {
    let b = build_backend(&BackendSpec::torus2(16)).unwrap();
    let g = realize_prequantum(&b, 2).unwrap();
    let d2 = dirac_operator(&b, &g, 2).unwrap().squared("d2");
    let dense = dense_spectrum(&d2).unwrap();
    let r = lowest_eigenpairs(&d2, 8, 1e-10).unwrap();
    assert!(r.converged);
    for (a, b) in r.eigenvalues.iter().zip(&dense) {
        assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn landau_band_and_gap() {
    let b = build_backend(&BackendSpec::torus2(32)).unwrap();
    let g = realize_prequantum(&b, 4).unwrap();
    let op = rescaled_laplacian(&b, &g, 4).unwrap();
    let r = lowest_eigenpairs(&op, 8, 1e-9).unwrap();
    assert!(r.converged);
    let rep = gap_report(&r, BackendKind::Torus2, 4).unwrap();
    assert_eq!(rep.d_k, 4);
    assert!(rep.accepted);
    assert!(rep.a_measured < 0.2, "{rep:?}");
    assert!((rep.gap_next - 8.0).abs() < 0.5, "{rep:?}");
}

#[test]
fn gap_report_needs_enough_pairs() {
    let op = diagonal_handle((0..50).map(|i| i as f64).collect());
    let r = lowest_eigenpairs(&op, 3, 1e-10).unwrap();
    assert!(matches!(gap_report(&r, BackendKind::Torus2, 3), Err(Error::InsufficientPairs { have: 3, need: 4 })));
}

#[test]
fn drift_fit_contract() {
    assert!(matches!(drift_fit(&[(1, 1.0), (2, 2.0), (3, 3.0)]), Err(Error::TooFewPoints { .. })));
    let pts: Vec<(i64, f64)> = (4..=8).map(|k| (k, k as f64 - 0.3 + 0.01 * (k as f64).sin())).collect();
    let f = drift_fit(&pts).unwrap();
    let shifted: Vec<(i64, f64)> = pts.iter().map(|&(k, v)| (k, v + 5.0)).collect();
    let g = drift_fit(&shifted).unwrap();
    assert!((g.intercept - f.intercept - 5.0).abs() < 1e-12);
    assert!((g.slope - f.slope).abs() < 1e-12);
}

#[test]
fn rejects_bad_requests() {
    let op = diagonal_handle(vec![1.0, 2.0, 3.0]);
    assert!(lowest_eigenpairs(&op, 3, 1e-9).is_err());
    assert!(lowest_eigenpairs(&op, 1, 0.0).is_err());
}

#[test]
fn deterministic_reruns() {
    let b = build_backend(&BackendSpec::torus2(16)).unwrap();
    let g = realize_prequantum(&b, 2).unwrap();
    let op = bochner_laplacian(&b, &g, 2).unwrap();
    let a = lowest_eigenpairs(&op, 4, 1e-9).unwrap();
    let c = lowest_eigenpairs(&op, 4, 1e-9).unwrap();
    assert_eq!(a.eigenvalues, c.eigenvalues);
    assert_eq!(a.eigenvectors, c.eigenvectors);
}
