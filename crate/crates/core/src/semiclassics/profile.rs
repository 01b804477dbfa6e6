use crate::quadrature::gauss_legendre;
use crate::{Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

pub const PROFILE_NODES: usize = 4096;

/// Points where the 4096- and 2048-node rules are compared.
const ERROR_PROBES: [f64; 9] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 80.0];

/// Even test function φ with φ̂(t) = a·exp(−1/(1 − (t/T₀)²)) on |t| < T₀ and 0 outside,
/// φ(x) = (1/2π)∫φ̂(t)e^{ixt}dt = (1/π)∫₀^{T₀}φ̂(t)cos(xt)dt.
#[derive(Clone, Debug, Serialize)]
pub struct TestFunctionProfile {
    pub support: f64,
    pub amplitude: f64,
    pub quadrature_error: f64,
    #[serde(skip)]
    nodes: Vec<f64>,
    /// Quadrature weight times φ̂(node)/π.
    #[serde(skip)]
    weights: Vec<f64>,
}

fn bump(t: f64, t0: f64) -> f64 {
    let u = t / t0;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

fn rule(n: usize, t0: f64, amplitude: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let nodes: Vec<f64> = x.iter().map(|u| 0.5 * t0 * (u + 1.0)).collect();
    let weights = nodes.iter().zip(&w).map(|(t, wi)| 0.5 * t0 * wi * amplitude * bump(*t, t0) / PI).collect();
    (nodes, weights)
}

fn eval(nodes: &[f64], weights: &[f64], x: f64) -> f64 {
    nodes.iter().zip(weights).map(|(t, w)| w * (x * t).cos()).sum()
}

impl TestFunctionProfile {
    pub fn bump(support: f64) -> Result<Self> {
        Self::with_amplitude(support, 1.0)
    }

    /// φ̂ ≡ 0.
    pub fn zero(support: f64) -> Result<Self> {
        Self::with_amplitude(support, 0.0)
    }

    pub fn with_amplitude(support: f64, amplitude: f64) -> Result<Self> {
        if !(support > 0.0 && support.is_finite()) || !amplitude.is_finite() {
            return Err(Error::Invalid(format!("test function support {support}, amplitude {amplitude}")));
        }
        let (nodes, weights) = rule(PROFILE_NODES, support, amplitude);
        let (cn, cw) = rule(PROFILE_NODES / 2, support, amplitude);
        let quadrature_error = ERROR_PROBES
            .iter()
            .map(|&x| (eval(&nodes, &weights, x) - eval(&cn, &cw, x)).abs())
            .fold(0.0, f64::max);
        if quadrature_error >= 1e-8 {
            return Err(Error::Numerical(format!("test function quadrature error {quadrature_error:.2e}")));
        }
        Ok(Self { support, amplitude, quadrature_error, nodes, weights })
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::with_amplitude(self.support, self.amplitude * c)
    }

    pub fn phi_hat(&self, t: f64) -> f64 {
        self.amplitude * bump(t, self.support)
    }

    pub fn phi_hat_zero(&self) -> f64 {
        self.phi_hat(0.0)
    }

    pub fn phi(&self, x: f64) -> f64 {
        eval(&self.nodes, &self.weights, x)
    }
}
