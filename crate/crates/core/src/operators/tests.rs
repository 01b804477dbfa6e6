use super::*;
use crate::bundle::realize_prequantum;
use crate::geometry::{build_backend, BackendSpec};
use crate::spectral::{lowest_eigenpairs, riemann_roch_dimension};
use rand::{Rng, SeedableRng};

fn random(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()
}

fn setup(spec: BackendSpec, k: i64) -> (SymplecticBackend, GaugeRealization) {
    let b = build_backend(&spec).unwrap();
    let g = realize_prequantum(&b, k).unwrap();
    (b, g)
}

#[test]
fn hermitian_on_every_backend() {
    for (spec, k) in [
        (BackendSpec::torus2(16), 3),
        (BackendSpec::torus4(8), 1),
        (BackendSpec::torus4_mixing(8), 1),
        (BackendSpec::sphere(6), 3),
    ] {
        let (b, g) = setup(spec.clone(), k);
        let lap = bochner_laplacian(&b, &g, k).unwrap();
        let d = dirac_operator(&b, &g, k).unwrap();
        let d2 = d.squared("d2");
        for op in [&lap, &d, &d2] {
            let c = op.hermiticity_certificate(10, 7);
            assert!(c.passes(1e-10), "{} on {}: {c:?}", op.name, spec.descriptor());
        }
    }
}

#[test]
fn twisted_laplacian_is_hermitian_on_varying_structure() {
    let (b, g) = setup(BackendSpec::torus4_mixing(8), 1);
    let table = clifford_table(&b).unwrap();
    let g = g.with_fiber(table.degrees.clone());
    let lap = bochner_laplacian(&b, &g, 1).unwrap();
    assert!(lap.hermiticity_certificate(10, 3).passes(1e-10));
}

#[test]
fn scalar_kernel_at_zero_flux() {
    let (b, g) = setup(BackendSpec::torus2(16), 0);
    let lap = bochner_laplacian(&b, &g, 0).unwrap();
    let ones = vec![C64::new(1.0, 0.0); lap.dim()];
    let y = lap.apply_vec(&ones);
    assert!(y.iter().all(|v| v.norm() < 1e-10));
    let r = lowest_eigenpairs(&lap, 2, 1e-10).unwrap();
    assert!(r.eigenvalues[0].abs() < 1e-9);
    assert!(r.eigenvalues[1] > 1.0);
}

#[test]
fn lowest_landau_level() {
    let (b, g) = setup(BackendSpec::torus2(32), 5);
    let lap = bochner_laplacian(&b, &g, 5).unwrap();
    let r = lowest_eigenpairs(&lap, 6, 1e-9).unwrap();
    assert!(r.converged);
    for l in &r.eigenvalues[..5] {
        assert!((l - 5.0).abs() < 0.2, "{:?}", r.eigenvalues);
    }
    assert!(r.eigenvalues[5] > 12.0, "{:?}", r.eigenvalues);
}

#[test]
fn rescaled_is_an_exact_shift() {
    let (b, g) = setup(BackendSpec::torus4(8), 2);
    let lap = bochner_laplacian(&b, &g, 2).unwrap();
    let res = rescaled_laplacian(&b, &g, 2).unwrap();
    let x = random(lap.dim(), 1);
    let a = lap.apply_vec(&x);
    let c = res.apply_vec(&x);
    for ((a, c), x) in a.iter().zip(&c).zip(&x) {
        assert!((a - 4.0 * x - c).norm() <= 1e-12 * a.norm().max(1.0));
    }
}

#[test]
fn sphere_lowest_band_is_exactly_zero() {
    let (b, g) = setup(BackendSpec::sphere(8), 4);
    let res = rescaled_laplacian(&b, &g, 4).unwrap();
    let r = lowest_eigenpairs(&res, 6, 1e-12).unwrap();
    for l in &r.eigenvalues[..5] {
        assert!(l.abs() < 1e-12);
    }
    // next monopole level l = g + 1: 2((g+1)(g+2) − g²) − k = 2k + 4
    assert!((r.eigenvalues[5] - 12.0).abs() < 1e-10, "{:?}", r.eigenvalues);
}

#[test]
fn dirac_is_odd_with_exact_zeros() {
    for spec in [BackendSpec::torus2(16), BackendSpec::torus4_mixing(8), BackendSpec::sphere(5)] {
        let (b, g) = setup(spec, 2);
        let d = dirac_operator(&b, &g, 2).unwrap();
        let degrees = d.entry_degrees();
        let mut x = random(d.dim(), 4);
        for (v, q) in x.iter_mut().zip(&degrees) {
            if q % 2 == 1 {
                *v = C64::new(0.0, 0.0);
            }
        }
        let y = d.apply_vec(&x);
        assert!(y.iter().zip(&degrees).all(|(v, q)| q % 2 == 1 || *v == C64::new(0.0, 0.0)));
        assert!(y.iter().any(|v| v.norm() > 0.0));
    }
}

#[test]
fn dirac_square_preserves_degree_for_constant_structure() {
    let (b, g) = setup(BackendSpec::torus4(8), 1);
    let d2 = dirac_operator(&b, &g, 1).unwrap().squared("d2");
    let degrees = d2.entry_degrees();
    let mut x = random(d2.dim(), 9);
    for (v, q) in x.iter_mut().zip(&degrees) {
        if *q != 0 {
            *v = C64::new(0.0, 0.0);
        }
    }
    let y = d2.apply_vec(&x);
    let total: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let leaked: f64 = y.iter().zip(&degrees).filter(|(_, q)| **q != 0).map(|(v, _)| v.norm_sqr()).sum::<f64>().sqrt();
    assert!(leaked <= 1e-12 * total, "{leaked} vs {total}");
}

#[test]
fn gauge_covariance() {
    for spec in [BackendSpec::torus2(16), BackendSpec::torus4_mixing(8)] {
        let (b, g) = setup(spec, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let theta: Vec<f64> = (0..b.sites()).map(|_| rng.gen::<f64>() * 6.0).collect();
        let g2 = g.gauge_transformed(&b, &theta).unwrap();
        for (a, a2) in [
            (bochner_laplacian(&b, &g, 1).unwrap(), bochner_laplacian(&b, &g2, 1).unwrap()),
            (dirac_operator(&b, &g, 1).unwrap(), dirac_operator(&b, &g2, 1).unwrap()),
        ] {
            let x = SectionVector::new(random(a.dim(), 2), 1, a.layout.clone()).unwrap();
            let lhs = a2.apply(&x.gauge_transformed(&theta).unwrap()).unwrap();
            let rhs = a.apply(&x).unwrap().gauge_transformed(&theta).unwrap();
            let scale = rhs.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (l, r) in lhs.values.iter().zip(&rhs.values) {
                assert!((l - r).norm() < 1e-12 * scale);
            }
        }
    }
}

#[test]
fn grading_operator_is_two_q_minus_n() {
    let (b, g) = setup(BackendSpec::torus4(8), 1);
    let d = dirac_operator(&b, &g, 1).unwrap();
    let s = grading_operator(&d, 2).unwrap();
    let ones = vec![C64::new(1.0, 0.0); s.dim()];
    let y = s.apply_vec(&ones);
    assert_eq!(&y[..4], &[C64::new(-2.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(2.0, 0.0)]);
}

#[test]
fn sphere_dirac_kernel_and_odd_gap() {
    let (b, g) = setup(BackendSpec::sphere(6), 3);
    let d2 = dirac_operator(&b, &g, 3).unwrap().squared("d2");
    let even = d2.parity_sector(0, "even").unwrap();
    let odd = d2.parity_sector(1, "odd").unwrap();
    let re = lowest_eigenpairs(&even, 5, 1e-12).unwrap();
    assert!(re.eigenvalues[..4].iter().all(|l| l.abs() < 1e-12));
    assert!(re.eigenvalues[4] > 1.0);
    let ro = lowest_eigenpairs(&odd, 1, 1e-12).unwrap();
    // 2((g+1)(g+2) − g(g+1)) = 4(g+1) with g = 3/2
    assert!((ro.eigenvalues[0] - 10.0).abs() < 1e-10);
}

#[test]
fn torus_dirac_even_kernel() {
    let (b, g) = setup(BackendSpec::torus2(32), 4);
    let d2 = dirac_operator(&b, &g, 4).unwrap().squared("d2");
    let even = d2.parity_sector(0, "even").unwrap();
    let r = lowest_eigenpairs(&even, 6, 1e-9).unwrap();
    let dk = riemann_roch_dimension(b.kind(), 4);
    assert!(r.eigenvalues[dk - 1] < 0.1 * r.eigenvalues[dk], "{:?}", r.eigenvalues);
}

#[test]
fn remainder_on_sphere_is_curvature_constant() {
    let (b, g) = setup(BackendSpec::sphere(6), 4);
    let est = dirac_square_remainder(&b, &g, 4).unwrap();
    assert!((est.norm - 2.0).abs() < 1e-10, "{est:?}");
}

#[test]
fn remainder_is_small_against_k() {
    let (b, g) = setup(BackendSpec::torus2(32), 4);
    let est = dirac_square_remainder(&b, &g, 4).unwrap();
    assert!(est.converged && est.norm < 4.0, "{est:?}");
}
