//! Operators diagonal in the monopole-harmonic basis.

use super::LinearOperator;
use crate::bundle::{MonopoleBasis, SectionLayout};
use crate::C64;

pub(crate) struct Diagonal(pub Vec<f64>);

impl LinearOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for ((y, x), d) in y.iter_mut().zip(x).zip(&self.0) {
            *y = x * d;
        }
    }
}

/// Pairs each even mode with the odd mode of the same (l, m).
pub(crate) struct PairedDirac {
    even_len: usize,
    /// (even index, odd index, coupling)
    pairs: Vec<(usize, usize, f64)>,
}

impl LinearOperator for PairedDirac {
    fn dim(&self) -> usize {
        self.even_len + self.pairs.len()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for &(e, o, c) in &self.pairs {
            let o = self.even_len + o;
            y[o] = x[e] * c;
            y[e] = x[o] * c;
        }
    }
}

/// Dirac operator on the sphere: degree 0 is L^⊗k (charge g = k/2), degree 1
/// is L^⊗k ⊗ T^{0,1*} (charge g + 1). Both carry l up to g + truncation and
/// D pairs equal (l, m) with D² = 2(l(l+1) − g(g+1)).
pub(crate) fn dirac(k: i64, truncation: usize) -> (SectionLayout, PairedDirac) {
    let even = MonopoleBasis::for_power(k, truncation);
    let odd = MonopoleBasis::new(k + 2, k + 2, even.twice_lmax);
    let g = k as f64 / 2.0;
    let pairs = (0..odd.len())
        .map(|o| {
            let (l2, m2) = odd.mode(o);
            let e = even.index_of(l2, m2).expect("odd modes are a subset of even modes");
            let l = l2 as f64 / 2.0;
            (e, o, (2.0 * (l * (l + 1.0) - g * (g + 1.0))).sqrt())
        })
        .collect();
    let even_len = even.len();
    (SectionLayout::Monopole { blocks: vec![even, odd], degrees: vec![0, 1] }, PairedDirac { even_len, pairs })
}
