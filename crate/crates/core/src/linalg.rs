//! Deterministic weighted vector kernels. Reductions are split into fixed
//! chunks so results do not depend on the thread schedule.

use crate::C64;
use rayon::prelude::*;

const CHUNK: usize = 4096;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Σ w ā b
pub fn wdot(a: &[C64], b: &[C64], w: &[f64]) -> C64 {
    let parts: Vec<C64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .zip(w.par_chunks(CHUNK))
        .map(|((a, b), w)| a.iter().zip(b).zip(w).fold(ZERO, |acc, ((a, b), w)| acc + a.conj() * b * *w))
        .collect();
    parts.into_iter().fold(ZERO, |acc, p| acc + p)
}

pub fn wnorm(a: &[C64], w: &[f64]) -> f64 {
    wdot(a, a, w).re.max(0.0).sqrt()
}

/// y += c·x
pub fn axpy(c: C64, x: &[C64], y: &mut [C64]) {
    y.par_chunks_mut(CHUNK).zip(x.par_chunks(CHUNK)).for_each(|(y, x)| {
        for (y, x) in y.iter_mut().zip(x) {
            *y += c * x;
        }
    });
}

pub fn scale(c: f64, x: &mut [C64]) {
    x.par_iter_mut().for_each(|v| *v *= c);
}

/// Σ_j coeffs[j]·cols[j]
pub fn combine(cols: &[Vec<C64>], coeffs: &[C64]) -> Vec<C64> {
    let n = cols.first().map_or(0, |c| c.len());
    let mut out = vec![ZERO; n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(i, o)| {
        let start = i * CHUNK;
        let len = o.len();
        for (col, c) in cols.iter().zip(coeffs) {
            if *c == ZERO {
                continue;
            }
            for (o, v) in o.iter_mut().zip(&col[start..start + len]) {
                *o += c * v;
            }
        }
    });
    out
}

/// Project `v` off the W-orthonormal `basis` twice (classical Gram–Schmidt, reorthogonalized).
pub fn orthogonalize(v: &mut [C64], basis: &[Vec<C64>], w: &[f64]) {
    for _ in 0..2 {
        let coeffs: Vec<C64> = basis.iter().map(|b| wdot(b, v, w)).collect();
        for (b, c) in basis.iter().zip(coeffs) {
            axpy(-c, b, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_is_schedule_independent() {
        let n = 50_000;
        let a: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let b: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.7).cos(), 1.0 / (1.0 + i as f64))).collect();
        let w: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let first = wdot(&a, &b, &w);
        for _ in 0..5 {
            assert_eq!(wdot(&a, &b, &w), first);
        }
        let serial: C64 = a.iter().zip(&b).zip(&w).map(|((a, b), w)| a.conj() * b * *w).sum();
        assert!((serial - first).norm() < 1e-9 * serial.norm());
    }

    #[test]
    fn orthogonalize_removes_components() {
        let w = vec![2.0; 3];
        let e0 = vec![C64::new(1.0 / 2f64.sqrt(), 0.0), ZERO, ZERO];
        let mut v = vec![C64::new(1.0, 1.0), C64::new(2.0, 0.0), ZERO];
        orthogonalize(&mut v, &[e0.clone()], &w);
        assert!(wdot(&e0, &v, &w).norm() < 1e-15);
        assert_eq!(v[1], C64::new(2.0, 0.0));
    }
}
