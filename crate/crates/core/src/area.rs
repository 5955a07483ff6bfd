//! Area-averaged mean and variance over the annulus.
//!
//! Integrating over θ removes every harmonic term, so both moments depend
//! only on the constant-coefficient row of `X`:
//!
//! `E[T_avg] = q·μ₁` and `Var[T_avg] = qᵀ S q`, with
//! `q = 2/(r_o² − r_i²) ∫ r Uᵀ v(r) dr` and `S` the covariance of the
//! constant coefficients across stations.
//!
//! The radial integral is composite Gauss–Legendre, one panel between
//! adjacent stations (plus the end regions where weights are held).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FourierModel;
use crate::propagation::FieldDistribution;
use crate::scalar::Real;
use crate::special::GaussLegendre;

/// Gauss–Legendre points per radial panel.
pub const POINTS_PER_PANEL: usize = 64;
/// Relative tolerance for the order-doubling convergence check; floored at
/// `1024·ε` of the scalar type.
pub const QUADRATURE_REL_TOL: f64 = 1e-10;
/// 95% coverage factor used for 2σ values.
pub const COVERAGE_FACTOR: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaAverageResult<T> {
    pub mean: T,
    pub variance: T,
    /// `1.96·√variance`.
    pub two_sigma: T,
}

/// Span-fraction interval `[lo, hi] ⊆ [0, 1]` of the annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Band<T> {
    pub fn full() -> Self {
        Self { lo: T::zero(), hi: T::one() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo >= T::zero() && self.hi <= T::one() && self.lo < self.hi) {
            return Err(Error::InvalidParams(format!(
                "band [{}, {}] is not a nonempty sub-interval of [0, 1]",
                self.lo.as_f64(),
                self.hi.as_f64()
            )));
        }
        Ok(())
    }
}

fn weights_with_rule<T: Real>(model: &FourierModel<T>, band: Band<T>, rule: &GaussLegendre<T>) -> DVector<T> {
    let geom = model.geometry();
    let radial = model.radial();
    let (ri, ro) = (geom.r_inner(), geom.r_outer());
    let span = ro - ri;
    let mut breaks = vec![band.lo];
    breaks.extend(geom.r_stations().iter().copied().filter(|&s| s > band.lo && s < band.hi));
    breaks.push(band.hi);

    let m = radial.len();
    let mut q = DVector::zeros(m);
    for w in breaks.windows(2) {
        for (s, wt) in rule.mapped(w[0], w[1]) {
            let r = ri + span * s;
            let v = radial.u().tr_mul(&radial.evaluate_unchecked(s));
            // dr = span·ds
            q.axpy(wt * r * span, &v, T::one());
        }
    }
    let r_lo = ri + span * band.lo;
    let r_hi = ri + span * band.hi;
    q * (T::lit(2.0) / (r_hi * r_hi - r_lo * r_lo))
}

/// Area-average weights `q` over a radial band, checked by order doubling.
pub fn area_weights_band<T: Real>(model: &FourierModel<T>, band: Band<T>) -> Result<DVector<T>> {
    band.validate()?;
    let q = weights_with_rule(model, band, &GaussLegendre::new(POINTS_PER_PANEL));
    let q2 = weights_with_rule(model, band, &GaussLegendre::new(2 * POINTS_PER_PANEL));
    let scale = q2.amax().max(T::EPSILON);
    let change = (&q - &q2).amax() / scale;
    let tol = T::lit(QUADRATURE_REL_TOL).max(T::lit(1024.0) * T::EPSILON);
    if !(change <= tol) {
        return Err(Error::QuadratureFailure(change.as_f64()));
    }
    Ok(q)
}

/// Area-average weights over the whole annulus.
pub fn area_weights<T: Real>(model: &FourierModel<T>) -> Result<DVector<T>> {
    area_weights_band(model, Band::full())
}

/// `E[T_avg]` from the coefficient means.
pub fn area_average_mean<T: Real>(model: &FourierModel<T>, mu_x: &DMatrix<T>) -> Result<T> {
    check_mu(model, mu_x)?;
    let q = area_weights(model)?;
    Ok(q.dot(&mu_x.row(0).transpose()))
}

fn check_mu<T: Real>(model: &FourierModel<T>, mu_x: &DMatrix<T>) -> Result<()> {
    let shape = (model.harmonics().n_coefficients(), model.geometry().n_stations());
    if mu_x.shape() != shape {
        return Err(Error::DimensionMismatch(format!(
            "coefficient matrix is {}x{}, expected {}x{}",
            mu_x.nrows(),
            mu_x.ncols(),
            shape.0,
            shape.1
        )));
    }
    Ok(())
}

/// Covariance of the constant coefficients across stations (`M×M`).
pub fn constant_term_covariance<T: Real>(model: &FourierModel<T>, sigma_x: &DMatrix<T>) -> Result<DMatrix<T>> {
    let p = model.harmonics().n_coefficients();
    let m = model.geometry().n_stations();
    if sigma_x.shape() != (p * m, p * m) {
        return Err(Error::DimensionMismatch(format!(
            "Σ_X is {}x{}, expected {}x{}",
            sigma_x.nrows(),
            sigma_x.ncols(),
            p * m,
            p * m
        )));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| sigma_x[(i * p, j * p)]))
}

/// Covariance between the area averages over two radial bands.
/// Equal bands give the variance of that band's average.
pub fn area_average_cross_covariance<T: Real>(
    model: &FourierModel<T>,
    sigma_x: &DMatrix<T>,
    band: Band<T>,
    other: Band<T>,
) -> Result<T> {
    let s = constant_term_covariance(model, sigma_x)?;
    let q = area_weights_band(model, band)?;
    let q_other = area_weights_band(model, other)?;
    Ok((q.transpose() * s * q_other)[0])
}

/// `Var[T_avg]` over the whole annulus.
pub fn area_average_covariance<T: Real>(model: &FourierModel<T>, sigma_x: &DMatrix<T>) -> Result<T> {
    let v = area_average_cross_covariance(model, sigma_x, Band::full(), Band::full())?;
    if v < T::zero() {
        let scale = sigma_x.norm();
        if v < -T::lit(1e-10) * scale {
            return Err(Error::NegativeVariance(v.as_f64()));
        }
        return Ok(T::zero());
    }
    Ok(v)
}

/// Radial kernel `vᵀ(r) U (I⊗n)ᵀ Σ_X (I⊗n) Uᵀ v(r′)` of the area covariance.
pub fn area_covariance_kernel<T: Real>(model: &FourierModel<T>, sigma_x: &DMatrix<T>, r: T, r_other: T) -> Result<T> {
    let s = constant_term_covariance(model, sigma_x)?;
    let w = model.radial().weights(r)?;
    let w2 = model.radial().weights(r_other)?;
    Ok((w.transpose() * s * w2)[0])
}

/// Mean, variance and 2σ of the area average for a field distribution.
pub fn area_average<T: Real>(model: &FourierModel<T>, field: &FieldDistribution<T>) -> Result<AreaAverageResult<T>> {
    let mean = area_average_mean(model, &field.mu_x)?;
    let variance = area_average_covariance(model, &field.sigma_x)?;
    Ok(AreaAverageResult {
        mean,
        variance,
        two_sigma: T::lit(COVERAGE_FACTOR) * variance.sqrt(),
    })
}
