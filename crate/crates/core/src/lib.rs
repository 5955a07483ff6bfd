//! Uncertainty quantification for annular flow fields reconstructed from a
//! few radial rakes.
//!
//! Measurements `B` (`N` rakes × `M` radial stations) are fit per station by a
//! circumferential Fourier series, `B ≈ A X`, and interpolated radially. A
//! Gaussian measurement distribution is pushed through the fit in closed
//! form, giving coefficient, field and residual covariances, the law of the
//! residual norm, and the two derived metrics: spatial sampling uncertainty
//! and measurement imprecision. Monte Carlo routines cover the non-Gaussian
//! or non-iid cases and serve as oracles for the closed forms.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below pin it to `f64`.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod area;
pub mod efficiency;
pub mod error;
pub mod geometry;
pub mod io;
pub mod legacy;
pub mod linalg;
pub mod montecarlo;
pub mod propagation;
pub mod radial;
pub mod residual;
pub mod scalar;
pub mod special;

pub use area::{area_average, area_average_covariance, area_average_mean, AreaAverageResult};
pub use efficiency::{correlation_sweep, efficiency, efficiency_gradient, taylor_variance, EfficiencyReport};
pub use error::{Error, Result};
pub use geometry::{AnnulusGeometry, CoefficientMatrix, FitSettings, FourierModel, HarmonicSet};
pub use legacy::{fig1_demo, legacy_sampling_uncertainty, rss_total, HarmonicField, UncertaintyBudget};
pub use montecarlo::{frequency_scan, mc_propagate_model, rake_position_mc, sample_mvn, SamplerConfig};
pub use propagation::{FieldDistribution, MeasurementDistribution};
pub use radial::{RadialBasis, RadialKind};
pub use residual::{chi_square_params, error_moments, noncentral_chisq_pdf, ChiSquareParams, UncertaintyMetrics};
pub use scalar::Real;

pub type AnnulusGeometry64 = AnnulusGeometry<f64>;
pub type FourierModel64 = FourierModel<f64>;
pub type FitSettings64 = FitSettings<f64>;
pub type MeasurementDistribution64 = MeasurementDistribution<f64>;
pub type FieldDistribution64 = FieldDistribution<f64>;
pub type UncertaintyMetrics64 = UncertaintyMetrics<f64>;
pub type StationState64 = efficiency::StationState<f64>;
