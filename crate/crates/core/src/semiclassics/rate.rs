use crate::fit::{affine_fit, AffineFit};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest tolerated |residual| of a log-log fit, in log₁₀ units.
pub const MAX_FIT_RESIDUAL_LOG10: f64 = 0.15;

pub const MIN_RATE_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub k: i64,
    pub value: f64,
}

/// What a series is expected to do as k grows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateExpectation {
    /// log₁₀ value ≈ slope·log₁₀ k, slope within `tolerance` of `slope`.
    Slope { slope: f64, tolerance: f64 },
    /// Values shrink monotonically; a step up by at most `noise` (relative) is tolerated.
    Decay { noise: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateSeries {
    pub claim: String,
    pub points: Vec<RatePoint>,
    /// Fit of log₁₀ value against log₁₀ k; absent when some value is not positive.
    pub fit: Option<AffineFit>,
    /// max |residual| of the fit, log₁₀ units.
    pub max_residual_log10: Option<f64>,
    pub expectation: RateExpectation,
    pub passed: bool,
    pub note: String,
}

impl RateSeries {
    pub fn new(claim: impl Into<String>, points: Vec<RatePoint>, expectation: RateExpectation) -> Result<Self> {
        let claim = claim.into();
        if points.len() < MIN_RATE_POINTS {
            return Err(Error::TooFewPoints { have: points.len(), need: MIN_RATE_POINTS });
        }
        if points.windows(2).any(|w| w[1].k <= w[0].k) {
            return Err(Error::Invalid(format!("{claim}: k values must be strictly increasing")));
        }
        if points[0].k <= 0 {
            return Err(Error::Invalid(format!("{claim}: k must be positive")));
        }
        if let Some(p) = points.iter().find(|p| !p.value.is_finite() || p.value < 0.0) {
            return Err(Error::Numerical(format!("{claim}: value {} at k = {}", p.value, p.k)));
        }
        let mut series = Self {
            claim,
            points,
            fit: None,
            max_residual_log10: None,
            expectation,
            passed: false,
            note: String::new(),
        };
        series.evaluate()?;
        Ok(series)
    }

    fn evaluate(&mut self) -> Result<()> {
        if self.points.iter().all(|p| p.value == 0.0) {
            self.passed = true;
            self.note = "identically zero".into();
            return Ok(());
        }
        if self.points.iter().any(|p| p.value == 0.0) {
            self.note = "some values are exactly zero; no log-log fit".into();
            self.passed = self.decays();
            return Ok(());
        }
        let lx: Vec<f64> = self.points.iter().map(|p| (p.k as f64).log10()).collect();
        let ly: Vec<f64> = self.points.iter().map(|p| p.value.log10()).collect();
        let fit = affine_fit(&lx, &ly)?;
        let worst = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (y - fit.intercept - fit.slope * x).abs())
            .fold(0.0, f64::max);
        self.passed = match self.expectation {
            RateExpectation::Slope { slope, tolerance } => {
                let in_band = (fit.slope - slope).abs() <= tolerance;
                let tight = worst <= MAX_FIT_RESIDUAL_LOG10;
                self.note = match (in_band, tight) {
                    (true, true) => String::new(),
                    (false, true) => format!("slope {:.3} outside {slope} ± {tolerance}", fit.slope),
                    (true, false) => format!("fit residual {worst:.3} exceeds {MAX_FIT_RESIDUAL_LOG10}"),
                    (false, false) => format!(
                        "slope {:.3} outside {slope} ± {tolerance}; fit residual {worst:.3} exceeds {MAX_FIT_RESIDUAL_LOG10}",
                        fit.slope
                    ),
                };
                in_band && tight
            }
            RateExpectation::Decay { .. } => self.decays(),
        };
        self.fit = Some(fit);
        self.max_residual_log10 = Some(worst);
        Ok(())
    }

    /// Judges a `Decay` series: every step may rise by at most the noise allowance.
    fn decays(&mut self) -> bool {
        let RateExpectation::Decay { noise } = self.expectation else {
            return false;
        };
        match self.points.windows(2).find(|w| w[1].value > (1.0 + noise) * w[0].value) {
            Some(w) => {
                let rise = format!("value rises from {:.3e} at k = {} to {:.3e} at k = {}", w[0].value, w[0].k, w[1].value, w[1].k);
                self.note = if self.note.is_empty() { rise } else { format!("{}; {rise}", self.note) };
                false
            }
            None => true,
        }
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope)
    }

    pub fn ks(&self) -> Vec<i64> {
        self.points.iter().map(|p| p.k).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}
