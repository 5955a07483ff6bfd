//! Classical sampling-uncertainty metric and root-sum-square budgets, kept
//! for side-by-side comparison with the model-based metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnnulusGeometry, FitSettings, FourierModel, HarmonicSet};
use crate::radial::RadialKind;
use crate::residual::sampling_metric;
use crate::scalar::Real;

/// Bessel-corrected standard deviation of the raw readings.
pub fn legacy_sampling_uncertainty<T: Real>(samples: &[T]) -> Result<T> {
    let k = samples.len();
    if k < 2 {
        return Err(Error::TooFewSamples(k));
    }
    let kf = T::from_count(k);
    let mean = samples.iter().fold(T::zero(), |a, &s| a + s) / kf;
    let ss = samples.iter().fold(T::zero(), |a, &s| a + (s - mean) * (s - mean));
    Ok((ss / (kf - T::one())).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetComponent {
    pub label: String,
    /// ±2σ value.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UncertaintyBudget {
    pub components: Vec<BudgetComponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
}

impl UncertaintyBudget {
    pub fn new(components: Vec<BudgetComponent>) -> Self {
        Self { components, total: None }
    }

    pub fn push(&mut self, label: impl Into<String>, value: f64) {
        self.components.push(BudgetComponent { label: label.into(), value });
    }

    /// Returns a copy with `total` filled in.
    pub fn with_total(&self) -> Result<Self> {
        Ok(Self {
            components: self.components.clone(),
            total: Some(rss_total(self)?),
        })
    }
}

/// Root-sum-square of the budget components.
pub fn rss_total(budget: &UncertaintyBudget) -> Result<f64> {
    let mut ss = 0.0;
    for c in &budget.components {
        if !(c.value >= 0.0) {
            return Err(Error::NegativeComponent { label: c.label.clone(), value: c.value });
        }
        ss += c.value * c.value;
    }
    Ok(ss.sqrt())
}

/// Single-harmonic field `mean + amplitude·cos(frequency·θ + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicField {
    pub mean: f64,
    pub amplitude: f64,
    pub frequency: u32,
    /// Phase in degrees.
    pub phase_deg: f64,
}

impl HarmonicField {
    pub fn value(&self, theta_deg: f64) -> f64 {
        let arg = (self.frequency as f64 * theta_deg + self.phase_deg).to_radians();
        self.mean + self.amplitude * arg.cos()
    }

    /// RMS of the field about its circumferential mean.
    pub fn rms(&self) -> f64 {
        if self.frequency == 0 {
            0.0
        } else {
            self.amplitude.abs() / std::f64::consts::SQRT_2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoRow {
    pub rakes: usize,
    pub legacy: f64,
    pub eps_p_sq: f64,
}

/// Samples `field` at `K` uniformly spaced rakes for each `K` in `rake_counts`
/// and reports the legacy metric next to the model's `ε_p²` (fit with the
/// field's own frequency).
pub fn fig1_demo(field: &HarmonicField, rake_counts: &[usize], phase_offset_deg: f64) -> Result<Vec<DemoRow>> {
    let harmonics = if field.frequency == 0 {
        HarmonicSet::new(&[1])?
    } else {
        HarmonicSet::new(&[field.frequency])?
    };
    rake_counts
        .iter()
        .map(|&k| {
            let theta: Vec<f64> = (0..k)
                .map(|n| {
                    let t = phase_offset_deg + 360.0 * n as f64 / k as f64;
                    t - 360.0 * (t / 360.0).floor()
                })
                .collect();
            let readings: Vec<f64> = theta.iter().map(|&t| field.value(t)).collect();
            let legacy = legacy_sampling_uncertainty(&readings)?;
            let geometry = AnnulusGeometry::new(&theta, &[0.5], 0.5, 1.0)?;
            let model = FourierModel::build(geometry, harmonics.clone(), RadialKind::Spline, FitSettings::unregularized())?;
            let b = DMatrix::from_column_slice(k, 1, &readings);
            let fit = model.fit(&b)?;
            let eps_p_sq = sampling_metric(&model, &fit.x, &b)?;
            Ok(DemoRow { rakes: k, legacy, eps_p_sq })
        })
        .collect()
}
