//! Non-central chi-square law of the residual norm and the two uncertainty
//! metrics built on it.
//!
//! Under `Σ_B = σ_b² I` the scaled residual norm `(NM/σ_b²) ε_p²` with
//! `ε_p² = ‖AX − B‖²/(NM)` follows `χ²(g, φ)` where `g = rank(Σ_R)` and
//! `φ = vec(μ_R)ᵀ Σ_R⁻ vec(μ_R)`.
//!
//! Two normalizations appear: the chi-square moments use `NM`, the reported
//! spatial sampling metric uses `NM − 1`. Both are carried in
//! [`UncertaintyMetrics`]. The imprecision metric subtracts the
//! `NM`-normalized residual so that it vanishes as `σ_b → 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FourierModel;
use crate::linalg;
use crate::propagation::FieldDistribution;
use crate::scalar::Real;
use crate::special::{chisq_ln_pdf, ln_gamma};

/// Relative tail cutoff for the Poisson-mixture series.
pub const SERIES_REL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareParams<T> {
    /// Degrees of freedom, `rank(Σ_R)`.
    pub g: usize,
    /// Non-centrality.
    pub phi: T,
    /// `σ_b² / (NM)`.
    pub scale: T,
}

/// Degrees of freedom and non-centrality of the residual quadratic form.
///
/// Requires the field distribution to come from `Σ_B = σ_b² I` with `σ_b > 0`.
pub fn chi_square_params<T: Real>(field: &FieldDistribution<T>) -> Result<ChiSquareParams<T>> {
    let sigma_b = field.iid_sigma.ok_or(Error::RequiresIidNoise)?;
    if !(sigma_b > T::zero()) {
        return Err(Error::InvalidParams(
            "chi-square law needs sigma_b > 0; use the deterministic limit instead".into(),
        ));
    }
    let nm = field.mu_r.len();
    // Rank is judged against σ_b², not the largest eigenvalue of Σ_R: for a
    // square design Σ_R is pure round-off and must count as rank zero.
    let eig = field.sigma_r.clone().symmetric_eigen();
    let smax = eig.eigenvalues.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let cut = T::lit(linalg::RANK_REL_TOL) * smax.max(sigma_b * sigma_b);
    let mu = linalg::vec_cm(&field.mu_r);
    let mut g = 0;
    let mut phi = T::zero();
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cut {
            g += 1;
            let proj = eig.eigenvectors.column(k).dot(&mu);
            phi += proj * proj / ev;
        }
    }
    Ok(ChiSquareParams {
        g,
        phi,
        scale: sigma_b * sigma_b / T::from_count(nm),
    })
}

/// Mean and variance of `ε_p²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMoments<T> {
    pub mean: T,
    pub variance: T,
}

/// `μ(ε_p²) = (σ_b²/NM)(g + φ)` and `σ²(ε_p²) = (σ_b²/NM)²(2g + 4φ)`.
pub fn error_moments<T: Real>(
    params: &ChiSquareParams<T>,
    n_rakes: usize,
    n_stations: usize,
    sigma_b: T,
) -> Result<ErrorMoments<T>> {
    let nm = n_rakes * n_stations;
    if nm == 0 || !(sigma_b >= T::zero()) || !(params.phi >= T::zero()) {
        return Err(Error::InvalidParams("need NM > 0, sigma_b >= 0 and phi >= 0".into()));
    }
    let scale = sigma_b * sigma_b / T::from_count(nm);
    let g = T::from_count(params.g);
    Ok(ErrorMoments {
        mean: scale * (g + params.phi),
        variance: scale * scale * (T::lit(2.0) * g + T::lit(4.0) * params.phi),
    })
}

/// Density of `χ²(g, φ)` at `x`, as a Poisson(φ/2) mixture of central laws.
pub fn noncentral_chisq_pdf<T: Real>(x: T, g: usize, phi: T) -> Result<T> {
    if g == 0 || !(phi >= T::zero()) || !phi.finite() || !(x >= T::zero()) {
        return Err(Error::InvalidParams(format!(
            "need x >= 0, g >= 1, phi >= 0 (x = {}, g = {g}, phi = {})",
            x.as_f64(),
            phi.as_f64()
        )));
    }
    let k = T::from_count(g);
    if phi == T::zero() {
        return Ok(chisq_ln_pdf(x, k).exp());
    }
    if x == T::zero() {
        // only the j = 0 term can be nonzero
        return Ok((chisq_ln_pdf(x, k) - phi * T::lit(0.5)).exp());
    }
    let half = phi * T::lit(0.5);
    let ln_half = half.ln();
    let log_term = |j: usize| {
        let jf = T::from_count(j);
        -half + jf * ln_half - ln_gamma(jf + T::one()) + chisq_ln_pdf(x, k + T::lit(2.0) * jf)
    };
    // the terms are log-concave in j: locate the peak, then sum outward
    let mut peak = 0usize;
    let mut peak_val = log_term(0);
    loop {
        let next = log_term(peak + 1);
        if next <= peak_val {
            break;
        }
        peak += 1;
        peak_val = next;
    }
    let tol = T::lit(SERIES_REL_TOL);
    let mut sum = T::one();
    let mut j = peak + 1;
    loop {
        let t = (log_term(j) - peak_val).exp();
        sum += t;
        if t < tol * sum {
            break;
        }
        j += 1;
    }
    let mut j = peak;
    while j > 0 {
        j -= 1;
        let t = (log_term(j) - peak_val).exp();
        sum += t;
        if t < tol * sum {
            break;
        }
    }
    Ok(peak_val.exp() * sum)
}

fn residual_sq_norm<T: Real>(model: &FourierModel<T>, x: &DMatrix<T>, mu_b: &DMatrix<T>) -> Result<T> {
    let a = model.design();
    if x.nrows() != a.ncols() || mu_b.nrows() != a.nrows() || x.ncols() != mu_b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, X is {}x{}, μ_B is {}x{}",
            a.nrows(),
            a.ncols(),
            x.nrows(),
            x.ncols(),
            mu_b.nrows(),
            mu_b.ncols()
        )));
    }
    Ok((a * x - mu_b).norm_squared())
}

/// Spatial sampling uncertainty `ε_p² = ‖AX − μ_B‖² / (NM − 1)`.
pub fn sampling_metric<T: Real>(model: &FourierModel<T>, x: &DMatrix<T>, mu_b: &DMatrix<T>) -> Result<T> {
    let ss = residual_sq_norm(model, x, mu_b)?;
    let nm = mu_b.len();
    if nm < 2 {
        return Err(Error::InvalidParams("sampling metric needs NM >= 2".into()));
    }
    Ok(ss / T::from_count(nm - 1))
}

/// `‖AX − μ_B‖² / NM`, the `σ_b → 0` limit of `μ(ε_p²)`.
pub fn sampling_metric_nm<T: Real>(model: &FourierModel<T>, x: &DMatrix<T>, mu_b: &DMatrix<T>) -> Result<T> {
    Ok(residual_sq_norm(model, x, mu_b)? / T::from_count(mu_b.len()))
}

/// Measurement imprecision uncertainty `ε_m² = μ(ε_p²) − ε_p²`.
pub fn imprecision_metric<T: Real>(mean_eps: T, eps_p_sq: T) -> T {
    mean_eps - eps_p_sq
}

/// How `μ(ε_p²)` and `σ²(ε_p²)` were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    /// Non-central chi-square closed form (iid noise).
    ChiSquare,
    /// Deterministic limit (`σ_b = 0`).
    Deterministic,
    /// Monte Carlo estimate (correlated or heteroscedastic noise).
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyMetrics<T> {
    /// `‖AX − μ_B‖² / (NM − 1)`.
    pub eps_p_sq: T,
    /// `‖AX − μ_B‖² / NM`.
    pub eps_p_sq_nm: T,
    /// `μ(ε_p²) − eps_p_sq_nm`.
    pub eps_m_sq: T,
    pub mean_eps: T,
    pub var_eps: T,
    pub chi_square: Option<ChiSquareParams<T>>,
    pub source: MomentSource,
    pub sampling_denominator: usize,
    pub moment_denominator: usize,
}

impl<T: Real> UncertaintyMetrics<T> {
    /// Assembles the metrics from externally estimated moments.
    pub fn from_moments(
        model: &FourierModel<T>,
        x: &DMatrix<T>,
        mu_b: &DMatrix<T>,
        moments: ErrorMoments<T>,
        chi_square: Option<ChiSquareParams<T>>,
        source: MomentSource,
    ) -> Result<Self> {
        let eps_p_sq = sampling_metric(model, x, mu_b)?;
        let eps_p_sq_nm = sampling_metric_nm(model, x, mu_b)?;
        let nm = mu_b.len();
        Ok(Self {
            eps_p_sq,
            eps_p_sq_nm,
            eps_m_sq: imprecision_metric(moments.mean, eps_p_sq_nm),
            mean_eps: moments.mean,
            var_eps: moments.variance,
            chi_square,
            source,
            sampling_denominator: nm - 1,
            moment_denominator: nm,
        })
    }

    /// Closed-form metrics for iid noise. `x` is the fitted coefficient matrix
    /// that produced `field` (same ridge parameter).
    pub fn closed_form(
        model: &FourierModel<T>,
        field: &FieldDistribution<T>,
        x: &DMatrix<T>,
        mu_b: &DMatrix<T>,
    ) -> Result<Self> {
        let sigma_b = field.iid_sigma.ok_or(Error::RequiresIidNoise)?;
        let (n, m) = mu_b.shape();
        if sigma_b == T::zero() {
            let limit = sampling_metric_nm(model, x, mu_b)?;
            let moments = ErrorMoments { mean: limit, variance: T::zero() };
            return Self::from_moments(model, x, mu_b, moments, None, MomentSource::Deterministic);
        }
        let params = chi_square_params(field)?;
        let moments = error_moments(&params, n, m, sigma_b)?;
        Self::from_moments(model, x, mu_b, moments, Some(params), MomentSource::ChiSquare)
    }
}
