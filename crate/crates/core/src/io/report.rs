//! Fit pipeline and the JSON uncertainty report.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::area::{area_average, AreaAverageResult};
use crate::error::{Error, Result};
use crate::geometry::{CoefficientMatrix, FitSettings, FourierModel};
use crate::io::campaign::CampaignFile;
use crate::legacy::legacy_sampling_uncertainty;
use crate::montecarlo::{mc_propagate_model, SamplerConfig, DEFAULT_PROPAGATION_SAMPLES};
use crate::propagation::{FieldDistribution, MeasurementDistribution};
use crate::radial::RadialKind;
use crate::residual::{ErrorMoments, MomentSource, UncertaintyMetrics};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub temperature: String,
    pub angle: String,
    pub radial_station: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            temperature: "K".into(),
            angle: "deg".into(),
            radial_station: "span fraction".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub omega: Vec<u32>,
    pub radial: RadialKind,
    /// Ridge parameter selected by the ladder (0 = plain least squares).
    pub lambda: f64,
    /// ‖X̂‖₂.
    pub norm: f64,
    /// cond(AᵀA); `f64::MAX` for a singular design.
    pub condition: f64,
    pub beta: f64,
    pub lambda_ladder: Vec<f64>,
    /// Coefficient matrix, one row per coefficient `[1, cos ω₁θ, sin ω₁θ, …]`,
    /// one column per station.
    pub coefficients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// `‖AX − μ_B‖² / (NM − 1)`.
    pub eps_p_sq: f64,
    /// `‖AX − μ_B‖² / NM`.
    pub eps_p_sq_nm: f64,
    pub eps_m_sq: f64,
    /// `μ(ε_p²)`.
    pub mean_eps: f64,
    /// `σ²(ε_p²)`.
    pub var_eps: f64,
    pub source: MomentSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noncentrality: Option<f64>,
    /// Standard error of `mean_eps` when estimated by Monte Carlo.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_eps_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegacyComparison {
    /// Standard deviation across rakes at each station.
    pub per_station: Vec<f64>,
    /// Standard deviation over all probes.
    pub all_probes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl Provenance {
    pub fn now(seed: Option<u64>, samples: Option<usize>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            seed,
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub schema_version: u32,
    pub units: Units,
    pub fit: FitSummary,
    pub metrics: MetricsSummary,
    pub area_average: AreaAverageResult<f64>,
    pub legacy: LegacyComparison,
    pub provenance: Provenance,
}

impl UncertaintyReport {
    pub fn to_json(&self) -> Result<String> {
        self.check_finite()?;
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check_finite(&self) -> Result<()> {
        let m = &self.metrics;
        let a = &self.area_average;
        let scalars = [
            self.fit.lambda,
            self.fit.norm,
            self.fit.condition,
            m.eps_p_sq,
            m.eps_p_sq_nm,
            m.eps_m_sq,
            m.mean_eps,
            m.var_eps,
            a.mean,
            a.variance,
            a.two_sigma,
            self.legacy.all_probes,
        ];
        let all = scalars
            .iter()
            .chain(self.fit.coefficients.iter().flatten())
            .chain(self.legacy.per_station.iter())
            .chain(m.noncentrality.iter())
            .chain(m.mean_eps_se.iter());
        for v in all {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("report contains non-finite value {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Overrides the campaign's harmonics.
    pub omega: Option<Vec<u32>>,
    pub settings: FitSettings<f64>,
    /// Sampler for `μ(ε_p²)` when the noise is not iid.
    pub sampler: SamplerConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            omega: None,
            settings: FitSettings::default(),
            sampler: SamplerConfig::new(0, DEFAULT_PROPAGATION_SAMPLES),
        }
    }
}

/// Everything computed by [`run_fit`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: FourierModel<f64>,
    pub measurements: MeasurementDistribution<f64>,
    pub fit: CoefficientMatrix<f64>,
    pub field: FieldDistribution<f64>,
    pub metrics: UncertaintyMetrics<f64>,
    pub area_average: AreaAverageResult<f64>,
    pub report: UncertaintyReport,
}

/// Fit, propagation, metrics, area average and legacy comparison.
pub fn run_fit(campaign: &CampaignFile, options: &FitOptions) -> Result<FitOutcome> {
    let model = campaign.build_model(options.omega.as_deref(), options.settings.clone())?;
    let meas = campaign.distribution()?;
    let fit = model.fit(meas.mean())?;
    let field = FieldDistribution::propagate(&model, fit.lambda, &meas)?;

    let mut mean_eps_se = None;
    let mut mc_used = false;
    let metrics = if meas.iid_sigma().is_some() {
        UncertaintyMetrics::closed_form(&model, &field, &fit.x, meas.mean())?
    } else {
        mc_used = true;
        let mc = mc_propagate_model(&model, &meas, fit.lambda, &options.sampler, &[])?;
        mean_eps_se = Some(mc.eps.mean_se);
        let moments = ErrorMoments { mean: mc.eps.mean, variance: mc.eps.variance };
        UncertaintyMetrics::from_moments(&model, &fit.x, meas.mean(), moments, None, MomentSource::MonteCarlo)?
    };
    let area = area_average(&model, &field)?;

    let b = meas.mean();
    let per_station = (0..b.ncols())
        .map(|j| legacy_sampling_uncertainty(b.column(j).as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let all_probes = legacy_sampling_uncertainty(b.as_slice())?;

    let report = UncertaintyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        units: Units::default(),
        fit: FitSummary {
            omega: model.harmonics().omega().to_vec(),
            radial: model.radial().kind(),
            lambda: fit.lambda,
            norm: fit.norm,
            condition: model.condition_number(),
            beta: options.settings.beta,
            lambda_ladder: options.settings.lambda_ladder.clone(),
            coefficients: rows(&fit.x),
        },
        metrics: MetricsSummary {
            eps_p_sq: metrics.eps_p_sq,
            eps_p_sq_nm: metrics.eps_p_sq_nm,
            eps_m_sq: metrics.eps_m_sq,
            mean_eps: metrics.mean_eps,
            var_eps: metrics.var_eps,
            source: metrics.source,
            dof: metrics.chi_square.map(|c| c.g),
            noncentrality: metrics.chi_square.map(|c| c.phi),
            mean_eps_se,
        },
        area_average: area,
        legacy: LegacyComparison { per_station, all_probes },
        provenance: if mc_used {
            Provenance::now(Some(options.sampler.seed), Some(options.sampler.n_samples))
        } else {
            Provenance::now(None, None)
        },
    };
    Ok(FitOutcome {
        model,
        measurements: meas,
        fit,
        field,
        metrics,
        area_average: area,
        report,
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
