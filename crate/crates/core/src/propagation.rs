//! Closed-form propagation of a Gaussian measurement distribution
//! `vec(B) ~ N(vec(μ_B), Σ_B)` through the linear least-squares model.
//!
//! With `P` the (possibly ridge) pseudoinverse:
//!
//! * coefficients: `μ_X = P μ_B`, `Σ_X = (I_M ⊗ P) Σ_B (I_M ⊗ P)ᵀ`
//! * field at the rakes: `μ_F = A μ_X`, `Σ_F = (I_M ⊗ A) Σ_X (I_M ⊗ A)ᵀ`
//! * residuals: `μ_R = μ_F − μ_B`, `Σ_R = (I_M ⊗ (AP − I)) Σ_B (I_M ⊗ (AP − I))ᵀ`
//!
//! `vec` is column-major (rake index fastest).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::FourierModel;
use crate::linalg;
use crate::scalar::Real;

/// Mean and covariance of all `N·M` probe readings.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDistribution<T: Real> {
    mu_b: DMatrix<T>,
    sigma_b: DMatrix<T>,
    iid_sigma: Option<T>,
}

impl<T: Real> MeasurementDistribution<T> {
    /// `Σ_B = σ_b² I`.
    pub fn iid(mu_b: DMatrix<T>, sigma_b: T) -> Result<Self> {
        if !(sigma_b >= T::zero()) || !sigma_b.finite() {
            return Err(Error::InvalidParams("sigma_b must be finite and nonnegative".into()));
        }
        let nm = mu_b.len();
        let cov = DMatrix::identity(nm, nm) * (sigma_b * sigma_b);
        Self::checked(mu_b, cov, Some(sigma_b))
    }

    /// Independent probes with per-probe standard deviations (vec order).
    pub fn diagonal(mu_b: DMatrix<T>, sigma: &[T]) -> Result<Self> {
        if sigma.len() != mu_b.len() {
            return Err(Error::DimensionMismatch(format!(
                "sigma has {} entries, expected {}",
                sigma.len(),
                mu_b.len()
            )));
        }
        if sigma.iter().any(|&s| !(s >= T::zero()) || !s.finite()) {
            return Err(Error::InvalidParams("sigma entries must be finite and nonnegative".into()));
        }
        let d = DVector::from_iterator(sigma.len(), sigma.iter().map(|&s| s * s));
        let iid = match sigma.first() {
            Some(&s0) if sigma.iter().all(|&s| s == s0) => Some(s0),
            _ => None,
        };
        Self::checked(mu_b, DMatrix::from_diagonal(&d), iid)
    }

    /// `Σ = D ρ D` with `D = diag(σ)`.
    pub fn correlated(mu_b: DMatrix<T>, sigma: &[T], rho: &DMatrix<T>) -> Result<Self> {
        let nm = mu_b.len();
        if sigma.len() != nm || rho.shape() != (nm, nm) {
            return Err(Error::DimensionMismatch(format!(
                "expected {nm} sigmas and a {nm}x{nm} correlation matrix"
            )));
        }
        validate_correlation(rho)?;
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(sigma));
        let cov = &d * rho * &d;
        Self::checked(mu_b, cov, None)
    }

    /// Arbitrary symmetric PSD covariance in vec order.
    pub fn full(mu_b: DMatrix<T>, cov: DMatrix<T>) -> Result<Self> {
        Self::checked(mu_b, cov, None)
    }

    fn checked(mu_b: DMatrix<T>, cov: DMatrix<T>, iid_sigma: Option<T>) -> Result<Self> {
        let nm = mu_b.len();
        if cov.shape() != (nm, nm) {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{}, expected {nm}x{nm}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mu_b.iter().chain(cov.iter()).any(|v| !v.finite()) {
            return Err(Error::InvalidParams("non-finite mean or covariance".into()));
        }
        let scale = cov.diagonal().iter().fold(T::zero(), |a, &d| a + d.abs());
        let tol = T::lit(1e-10) * scale.max(T::EPSILON);
        if (&cov - cov.transpose()).amax() > tol {
            return Err(Error::InvalidParams("measurement covariance is not symmetric".into()));
        }
        if iid_sigma.is_none() && scale > T::zero() {
            let min = linalg::min_eigenvalue(&cov);
            if min < -tol {
                return Err(Error::NotPsd { min_eigenvalue: min.as_f64() });
            }
        }
        Ok(Self { mu_b, sigma_b: cov, iid_sigma })
    }

    pub fn mean(&self) -> &DMatrix<T> {
        &self.mu_b
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.sigma_b
    }

    /// `Some(σ_b)` when `Σ_B = σ_b² I`.
    pub fn iid_sigma(&self) -> Option<T> {
        self.iid_sigma
    }

    pub fn n_rakes(&self) -> usize {
        self.mu_b.nrows()
    }

    pub fn n_stations(&self) -> usize {
        self.mu_b.ncols()
    }

    /// Same mean, covariance multiplied by `c ≥ 0`.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            mu_b: self.mu_b.clone(),
            sigma_b: &self.sigma_b * c,
            iid_sigma: self.iid_sigma.map(|s| s * c.sqrt()),
        }
    }
}

/// Unit diagonal, entries in [-1, 1], symmetric, PSD.
pub fn validate_correlation<T: Real>(rho: &DMatrix<T>) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::InvalidCorrelation("matrix is not square".into()));
    }
    let tol = T::lit(1e-10);
    for i in 0..rho.nrows() {
        if (rho[(i, i)] - T::one()).abs() > tol {
            return Err(Error::InvalidCorrelation(format!("diagonal entry {i} is not 1")));
        }
        for j in 0..rho.ncols() {
            let v = rho[(i, j)];
            if !v.finite() || v.abs() > T::one() + tol {
                return Err(Error::InvalidCorrelation(format!("entry ({i}, {j}) outside [-1, 1]")));
            }
            if (v - rho[(j, i)]).abs() > tol {
                return Err(Error::InvalidCorrelation("matrix is not symmetric".into()));
            }
        }
    }
    let min = linalg::min_eigenvalue(rho);
    if min < -T::lit(1e-10) * T::from_count(rho.nrows()) {
        return Err(Error::InvalidCorrelation(format!(
            "not positive semidefinite (min eigenvalue {:.3e})",
            min.as_f64()
        )));
    }
    Ok(())
}

fn check_dims<T: Real>(model: &FourierModel<T>, meas: &MeasurementDistribution<T>) -> Result<()> {
    let g = model.geometry();
    if meas.n_rakes() != g.n_rakes() || meas.n_stations() != g.n_stations() {
        return Err(Error::DimensionMismatch(format!(
            "measurements are {}x{}, geometry is {}x{}",
            meas.n_rakes(),
            meas.n_stations(),
            g.n_rakes(),
            g.n_stations()
        )));
    }
    Ok(())
}

/// `(μ_X, Σ_X)` for ridge parameter `lambda` (`0` for plain least squares).
pub fn propagate_coefficients<T: Real>(
    model: &FourierModel<T>,
    lambda: T,
    meas: &MeasurementDistribution<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    check_dims(model, meas)?;
    let p = model.pseudoinverse(lambda)?;
    let mu_x = &p * meas.mean();
    let sigma_x = linalg::kron_identity_sandwich(&p, meas.covariance(), meas.n_stations())?;
    Ok((mu_x, linalg::enforce_psd(sigma_x)?))
}

/// `(μ_F, Σ_F)` from the coefficient moments.
pub fn propagate_field<T: Real>(
    model: &FourierModel<T>,
    mu_x: &DMatrix<T>,
    sigma_x: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let a = model.design();
    if mu_x.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient matrix has {} rows, expected {}",
            mu_x.nrows(),
            a.ncols()
        )));
    }
    let mu_f = a * mu_x;
    let sigma_f = linalg::kron_identity_sandwich(a, sigma_x, mu_x.ncols())?;
    Ok((mu_f, linalg::enforce_psd(sigma_f)?))
}

/// `(μ_R, Σ_R)`: `μ_R = μ_F − μ_B`, `Σ_R` via the residual operator `AP − I`.
pub fn residual_moments<T: Real>(
    model: &FourierModel<T>,
    lambda: T,
    meas: &MeasurementDistribution<T>,
    mu_f: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    check_dims(model, meas)?;
    if mu_f.shape() != meas.mean().shape() {
        return Err(Error::DimensionMismatch("μ_F and μ_B shapes differ".into()));
    }
    let n = model.geometry().n_rakes();
    let residual_op = model.design() * model.pseudoinverse(lambda)? - DMatrix::identity(n, n);
    let mu_r = mu_f - meas.mean();
    let sigma_r = linalg::kron_identity_sandwich(&residual_op, meas.covariance(), meas.n_stations())?;
    Ok((mu_r, linalg::enforce_psd(sigma_r)?))
}

/// Coefficient, field and residual moments for one measurement distribution.
#[derive(Debug, Clone)]
pub struct FieldDistribution<T: Real> {
    /// Ridge parameter of the pseudoinverse used (0 = none).
    pub lambda: T,
    pub mu_x: DMatrix<T>,
    pub sigma_x: DMatrix<T>,
    pub mu_f: DMatrix<T>,
    pub sigma_f: DMatrix<T>,
    pub mu_r: DMatrix<T>,
    pub sigma_r: DMatrix<T>,
    /// `Some(σ_b)` when the upstream covariance was `σ_b² I`.
    pub iid_sigma: Option<T>,
}

impl<T: Real> FieldDistribution<T> {
    /// Propagates with a fixed ridge parameter.
    pub fn propagate(model: &FourierModel<T>, lambda: T, meas: &MeasurementDistribution<T>) -> Result<Self> {
        let (mu_x, sigma_x) = propagate_coefficients(model, lambda, meas)?;
        let (mu_f, sigma_f) = propagate_field(model, &mu_x, &sigma_x)?;
        let (mu_r, sigma_r) = residual_moments(model, lambda, meas, &mu_f)?;
        Ok(Self {
            lambda,
            mu_x,
            sigma_x,
            mu_f,
            sigma_f,
            mu_r,
            sigma_r,
            iid_sigma: meas.iid_sigma(),
        })
    }

    /// Fits the mean measurements (walking the ridge ladder) and propagates
    /// with the ridge parameter that fit selected.
    pub fn from_fit(model: &FourierModel<T>, meas: &MeasurementDistribution<T>) -> Result<Self> {
        let fit = model.fit(meas.mean())?;
        Self::propagate(model, fit.lambda, meas)
    }

    pub fn n_stations(&self) -> usize {
        self.mu_x.ncols()
    }
}

/// Predictive mean at two points and the covariance between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveMoments<T> {
    pub mean: T,
    pub mean_other: T,
    pub covariance: T,
}

/// Predictive means at `(r, θ)` and `(r′, θ′)` and their covariance
/// `vᵀ(r) U (I_M ⊗ a(θ))ᵀ Σ_X (I_M ⊗ a(θ′)) Uᵀ v(r′)`. Angles in degrees.
pub fn predictive_moments<T: Real>(
    model: &FourierModel<T>,
    field: &FieldDistribution<T>,
    r: T,
    theta_deg: T,
    r_other: T,
    theta_other_deg: T,
) -> Result<PredictiveMoments<T>> {
    let f = model.point_functional(r, theta_deg)?;
    let g = model.point_functional(r_other, theta_other_deg)?;
    check_field(model, field)?;
    let mean = f.dot(&linalg::vec_cm(&field.mu_x));
    let mean_other = g.dot(&linalg::vec_cm(&field.mu_x));
    let mut covariance = (f.transpose() * &field.sigma_x * g)[0];
    if r == r_other && theta_deg == theta_other_deg && covariance < T::zero() {
        covariance = T::zero();
    }
    Ok(PredictiveMoments { mean, mean_other, covariance })
}

/// Predictive mean and variance at one point.
pub fn predictive_point<T: Real>(
    model: &FourierModel<T>,
    field: &FieldDistribution<T>,
    r: T,
    theta_deg: T,
) -> Result<(T, T)> {
    let m = predictive_moments(model, field, r, theta_deg, r, theta_deg)?;
    Ok((m.mean, m.covariance))
}

/// Gram matrix of the predictive covariance kernel over a set of points.
pub fn predictive_gram<T: Real>(
    model: &FourierModel<T>,
    field: &FieldDistribution<T>,
    points: &[(T, T)],
) -> Result<DMatrix<T>> {
    check_field(model, field)?;
    let mut f = DMatrix::zeros(field.sigma_x.nrows(), points.len());
    for (j, &(r, t)) in points.iter().enumerate() {
        f.set_column(j, &model.point_functional(r, t)?);
    }
    Ok(f.transpose() * &field.sigma_x * f)
}

fn check_field<T: Real>(model: &FourierModel<T>, field: &FieldDistribution<T>) -> Result<()> {
    let p = model.harmonics().n_coefficients();
    let m = model.geometry().n_stations();
    if field.mu_x.shape() != (p, m) || field.sigma_x.shape() != (p * m, p * m) {
        return Err(Error::DimensionMismatch("field distribution does not match model".into()));
    }
    Ok(())
}
