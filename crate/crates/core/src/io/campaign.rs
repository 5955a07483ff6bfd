//! Measurement campaign input file.
//!
//! ```json
//! {
//!   "geometry": { "theta": [54, 90, 162], "r_stations": [0.5], "r_i": 0.4, "r_o": 1.0 },
//!   "measurements": [[526.1], [525.3], [527.0]],
//!   "uncertainty": { "iid": { "sigma_b": 0.51 } },
//!   "harmonics": [1]
//! }
//! ```
//!
//! Angles are degrees, radial stations are span fractions, `r_i`/`r_o` are
//! physical radii (any consistent length unit) and temperatures are kelvin.
//! `measurements` holds one row per rake and one column per station.
//! Per-probe `sigma` vectors and `rho` matrices use column-major probe order
//! (rake index fastest).

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnnulusGeometry, FitSettings, FourierModel, HarmonicSet};
use crate::propagation::MeasurementDistribution;
use crate::radial::RadialKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub theta: Vec<f64>,
    pub r_stations: Vec<f64>,
    pub r_i: f64,
    pub r_o: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum UncertaintySpec {
    Iid { sigma_b: f64 },
    Diagonal { sigma: Vec<f64> },
    Correlation { sigma: Vec<f64>, rho: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    pub geometry: GeometrySpec,
    pub measurements: Vec<Vec<f64>>,
    pub uncertainty: UncertaintySpec,
    /// Default harmonic set; the command line may override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonics: Option<Vec<u32>>,
    #[serde(default)]
    pub radial: RadialKind,
}

impl CampaignFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Structural checks that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let n = self.geometry.theta.len();
        let m = self.geometry.r_stations.len();
        if self.measurements.len() != n {
            return Err(Error::Schema(format!(
                "measurements: expected {n} rows (one per rake), found {}",
                self.measurements.len()
            )));
        }
        if let Some(i) = self.measurements.iter().position(|row| row.len() != m) {
            return Err(Error::Schema(format!(
                "measurements[{i}]: expected {m} values (one per station), found {}",
                self.measurements[i].len()
            )));
        }
        let nm = n * m;
        match &self.uncertainty {
            UncertaintySpec::Iid { .. } => {}
            UncertaintySpec::Diagonal { sigma } => {
                if sigma.len() != nm {
                    return Err(Error::Schema(format!(
                        "uncertainty.diagonal.sigma: expected {nm} values, found {}",
                        sigma.len()
                    )));
                }
            }
            UncertaintySpec::Correlation { sigma, rho } => {
                if sigma.len() != nm {
                    return Err(Error::Schema(format!(
                        "uncertainty.correlation.sigma: expected {nm} values, found {}",
                        sigma.len()
                    )));
                }
                if rho.len() != nm || rho.iter().any(|r| r.len() != nm) {
                    return Err(Error::Schema(format!(
                        "uncertainty.correlation.rho: expected a {nm}x{nm} matrix"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<AnnulusGeometry<f64>> {
        let g = &self.geometry;
        AnnulusGeometry::new(&g.theta, &g.r_stations, g.r_i, g.r_o)
    }

    /// `N × M` mean measurement matrix.
    pub fn measurement_matrix(&self) -> DMatrix<f64> {
        let n = self.measurements.len();
        let m = self.geometry.r_stations.len();
        DMatrix::from_fn(n, m, |i, j| self.measurements[i][j])
    }

    pub fn distribution(&self) -> Result<MeasurementDistribution<f64>> {
        let mu = self.measurement_matrix();
        match &self.uncertainty {
            UncertaintySpec::Iid { sigma_b } => MeasurementDistribution::iid(mu, *sigma_b),
            UncertaintySpec::Diagonal { sigma } => MeasurementDistribution::diagonal(mu, sigma),
            UncertaintySpec::Correlation { sigma, rho } => {
                let nm = sigma.len();
                let rho = DMatrix::from_fn(nm, nm, |i, j| rho[i][j]);
                MeasurementDistribution::correlated(mu, sigma, &rho)
            }
        }
    }

    /// Harmonics from `omega` if given, else from the file.
    pub fn harmonics(&self, omega: Option<&[u32]>) -> Result<HarmonicSet> {
        match omega.or(self.harmonics.as_deref()) {
            Some(w) => HarmonicSet::new(w),
            None => Err(Error::Schema(
                "harmonics: not given in the campaign file or on the command line".into(),
            )),
        }
    }

    pub fn build_model(&self, omega: Option<&[u32]>, settings: FitSettings<f64>) -> Result<FourierModel<f64>> {
        FourierModel::build(self.geometry()?, self.harmonics(omega)?, self.radial, settings)
    }
}
