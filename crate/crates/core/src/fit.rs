//! Least-squares affine and log-log fits.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    /// Root-mean-square residual of the fit.
    pub rms_residual: f64,
}

pub fn affine_fit(xs: &[f64], ys: &[f64]) -> Result<AffineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Invalid("fit abscissae and ordinates differ in length".into()));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints { have: xs.len(), need: 2 });
    }
    if let Some(bad) = xs.iter().chain(ys).find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite fit input {bad}")));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("fit abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = (xs.len() as f64 - 2.0).max(1.0);
    let sigma2 = ss / dof;
    Ok(AffineFit {
        slope,
        intercept,
        slope_stderr: (sigma2 / sxx).sqrt(),
        intercept_stderr: (sigma2 * (1.0 / n + mx * mx / sxx)).sqrt(),
        rms_residual: (ss / n).sqrt(),
    })
}

/// Fit log(value) = slope·log(k) + intercept. Nonpositive values are rejected.
pub fn loglog_fit(ks: &[f64], values: &[f64]) -> Result<AffineFit> {
    if let Some(v) = ks.iter().chain(values).find(|v| !(**v > 0.0)) {
        return Err(Error::Numerical(format!("log-log fit needs positive data, got {v}")));
    }
    let lx: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    affine_fit(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let f = affine_fit(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.rms_residual < 1e-14);
    }

    #[test]
    fn power_law() {
        let ks = [4.0, 6.0, 8.0, 12.0];
        let v: Vec<f64> = ks.iter().map(|k: &f64| 3.0 * k.powf(-1.0)).collect();
        let f = loglog_fit(&ks, &v).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(loglog_fit(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(affine_fit(&[1.0], &[1.0]).is_err());
        assert!(affine_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn shift_moves_intercept_only(c in -10.0f64..10.0, a in -3.0f64..3.0) {
            let xs = [1.0, 2.0, 4.0, 7.0, 9.0];
            let ys: Vec<f64> = xs.iter().map(|x| a * x + (x * 1.3).sin()).collect();
            let f0 = affine_fit(&xs, &ys).unwrap();
            let shifted: Vec<f64> = ys.iter().map(|y| y + c).collect();
            let f1 = affine_fit(&xs, &shifted).unwrap();
            prop_assert!((f1.slope - f0.slope).abs() < 1e-12);
            prop_assert!((f1.intercept - f0.intercept - c).abs() < 1e-12);
        }
    }
}
