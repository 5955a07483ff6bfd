//! Annulus geometry, the circumferential Fourier design matrix and the
//! ridge-regularized multivariate least-squares fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::radial::{RadialBasis, RadialKind};
use crate::scalar::Real;

/// Ridge ladder walked when the unregularized coefficients are too large.
pub const DEFAULT_LAMBDA_LADDER: [f64; 4] = [0.0001, 0.001, 0.1, 10.0];
/// Default coefficient-norm threshold β, in measurement units.
pub const DEFAULT_BETA: f64 = 1e4;

/// Rake angles and radial probe stations of the measurement plane.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusGeometry<T: Real> {
    theta_deg: Vec<T>,
    theta_rad: Vec<T>,
    r_stations: Vec<T>,
    r_i: T,
    r_o: T,
}

impl<T: Real> AnnulusGeometry<T> {
    /// Angles are in degrees; stations are span fractions in `[0, 1]`.
    pub fn new(theta_deg: &[T], r_stations: &[T], r_i: T, r_o: T) -> Result<Self> {
        if theta_deg.is_empty() {
            return Err(Error::InvalidGeometry("need at least one rake".into()));
        }
        if r_stations.is_empty() {
            return Err(Error::InvalidGeometry("need at least one radial station".into()));
        }
        let full = T::lit(360.0);
        for (n, &t) in theta_deg.iter().enumerate() {
            if !(t >= T::zero() && t < full) {
                return Err(Error::InvalidGeometry(format!(
                    "rake angle {} = {} outside [0, 360)",
                    n,
                    t.as_f64()
                )));
            }
            if theta_deg[..n].contains(&t) {
                return Err(Error::InvalidGeometry(format!(
                    "duplicate rake angle {}",
                    t.as_f64()
                )));
            }
        }
        if r_stations.iter().any(|&r| !(r >= T::zero() && r <= T::one())) {
            return Err(Error::InvalidGeometry("radial stations must lie in [0, 1]".into()));
        }
        if r_stations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGeometry(
                "radial stations must be strictly increasing".into(),
            ));
        }
        if !(r_i < r_o) || !r_i.finite() || !r_o.finite() || r_i < T::zero() {
            return Err(Error::InvalidGeometry(format!(
                "need 0 <= r_i < r_o, got r_i = {}, r_o = {}",
                r_i.as_f64(),
                r_o.as_f64()
            )));
        }
        Ok(Self {
            theta_deg: theta_deg.to_vec(),
            theta_rad: theta_deg.iter().map(|t| t.deg_to_rad()).collect(),
            r_stations: r_stations.to_vec(),
            r_i,
            r_o,
        })
    }

    pub fn n_rakes(&self) -> usize {
        self.theta_deg.len()
    }

    pub fn n_stations(&self) -> usize {
        self.r_stations.len()
    }

    pub fn theta_deg(&self) -> &[T] {
        &self.theta_deg
    }

    pub fn theta_rad(&self) -> &[T] {
        &self.theta_rad
    }

    pub fn r_stations(&self) -> &[T] {
        &self.r_stations
    }

    pub fn r_inner(&self) -> T {
        self.r_i
    }

    pub fn r_outer(&self) -> T {
        self.r_o
    }

    /// Physical radius for a span fraction.
    pub fn physical_radius(&self, fraction: T) -> T {
        self.r_i + (self.r_o - self.r_i) * fraction
    }
}

/// Distinct positive circumferential frequencies ω₁ … ω_k.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmonicSet {
    omega: Vec<u32>,
}

impl HarmonicSet {
    pub fn new(omega: &[u32]) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::InvalidHarmonics("need at least one frequency".into()));
        }
        if omega.contains(&0) {
            return Err(Error::InvalidHarmonics("frequencies must be positive".into()));
        }
        for (i, w) in omega.iter().enumerate() {
            if omega[..i].contains(w) {
                return Err(Error::InvalidHarmonics(format!("duplicate frequency {w}")));
            }
        }
        Ok(Self { omega: omega.to_vec() })
    }

    pub fn omega(&self) -> &[u32] {
        &self.omega
    }

    pub fn k(&self) -> usize {
        self.omega.len()
    }

    /// Number of Fourier coefficients, `2k + 1`.
    pub fn n_coefficients(&self) -> usize {
        2 * self.omega.len() + 1
    }

    /// `a(θ) = [1, cos ω₁θ, sin ω₁θ, …, cos ω_kθ, sin ω_kθ]` for θ in radians.
    pub fn features<T: Real>(&self, theta_rad: T) -> DVector<T> {
        let mut a = DVector::zeros(self.n_coefficients());
        a[0] = T::one();
        for (j, &w) in self.omega.iter().enumerate() {
            let arg = T::from_u32(w).unwrap() * theta_rad;
            a[2 * j + 1] = arg.cos();
            a[2 * j + 2] = arg.sin();
        }
        a
    }

    /// Design matrix with one row `a(θ_n)ᵀ` per angle (radians).
    pub fn design_matrix<T: Real>(&self, theta_rad: &[T]) -> DMatrix<T> {
        let p = self.n_coefficients();
        let mut a = DMatrix::zeros(theta_rad.len(), p);
        for (n, &t) in theta_rad.iter().enumerate() {
            a.row_mut(n).copy_from(&self.features(t).transpose());
        }
        a
    }
}

/// Coefficient-norm threshold and ridge ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings<T: Real> {
    pub beta: T,
    pub lambda_ladder: Vec<T>,
}

impl<T: Real> Default for FitSettings<T> {
    fn default() -> Self {
        Self {
            beta: T::lit(DEFAULT_BETA),
            lambda_ladder: DEFAULT_LAMBDA_LADDER.iter().map(|&l| T::lit(l)).collect(),
        }
    }
}

impl<T: Real> FitSettings<T> {
    /// Plain least squares: no ladder, unbounded β.
    pub fn unregularized() -> Self {
        Self {
            beta: T::max_value().unwrap(),
            lambda_ladder: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > T::zero()) {
            return Err(Error::InvalidParams("beta must be positive".into()));
        }
        if self.lambda_ladder.iter().any(|&l| !(l > T::zero()) || !l.finite()) {
            return Err(Error::InvalidParams(
                "ladder entries must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Fitted coefficients `X` ((2k+1)×M) and the ridge parameter that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix<T: Real> {
    pub x: DMatrix<T>,
    /// `0` when the unregularized solution was accepted.
    pub lambda: T,
    /// ‖X‖₂ (spectral norm).
    pub norm: T,
}

/// Factored least-squares operator for a fixed design matrix.
#[derive(Debug, Clone)]
pub(crate) struct LeastSquares<T: Real> {
    a: DMatrix<T>,
    /// Unregularized pseudoinverse, `None` when AᵀA is singular.
    pinv: Option<DMatrix<T>>,
    condition: T,
}

impl<T: Real> LeastSquares<T> {
    pub(crate) fn new(a: DMatrix<T>) -> Self {
        let (n, p) = a.shape();
        let sv = linalg::singular_values(&a);
        let smax = if sv.is_empty() { T::zero() } else { sv[0] };
        let smin = if n < p || sv.is_empty() { T::zero() } else { sv[sv.len() - 1] };
        let tol = T::from_count(n.max(p)) * T::EPSILON * smax;
        let singular = n < p || smin <= tol;
        let condition = if singular {
            T::max_value().unwrap()
        } else {
            let c = smax / smin;
            c * c
        };
        let pinv = if singular { None } else { Some(qr_pinv(&a, None)) };
        Self { a, pinv, condition }
    }

    pub(crate) fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    /// `(AᵀA + λ²I)⁻¹Aᵀ`, or the plain pseudoinverse for `λ = 0`.
    pub(crate) fn pseudoinverse(&self, lambda: T) -> Result<DMatrix<T>> {
        if lambda == T::zero() {
            self.pinv.clone().ok_or(Error::SingularDesign {
                condition: self.condition.as_f64(),
            })
        } else {
            Ok(qr_pinv(&self.a, Some(lambda)))
        }
    }

    /// Unregularized solve, then walk the ladder until ‖X̂‖₂ < β.
    pub(crate) fn fit(&self, b: &DMatrix<T>, settings: &FitSettings<T>) -> Result<CoefficientMatrix<T>> {
        let mut last_norm = T::max_value().unwrap();
        if let Some(p) = &self.pinv {
            let x = p * b;
            let norm = linalg::spectral_norm(&x);
            if norm.finite() && norm < settings.beta {
                return Ok(CoefficientMatrix { x, lambda: T::zero(), norm });
            }
            last_norm = norm;
        } else if settings.lambda_ladder.is_empty() {
            return Err(Error::SingularDesign {
                condition: self.condition.as_f64(),
            });
        }
        for &lambda in &settings.lambda_ladder {
            let x = qr_pinv(&self.a, Some(lambda)) * b;
            let norm = linalg::spectral_norm(&x);
            if norm.finite() && norm < settings.beta {
                return Ok(CoefficientMatrix { x, lambda, norm });
            }
            last_norm = norm;
        }
        Err(Error::RegularizationExhausted {
            norm: last_norm.as_f64(),
            beta: settings.beta.as_f64(),
        })
    }
}

/// QR-based (ridge) pseudoinverse. With `λ`, factors the stacked system
/// `[A; λI]` so that `R⁻¹Q₁ᵀ = (AᵀA + λ²I)⁻¹Aᵀ`.
fn qr_pinv<T: Real>(a: &DMatrix<T>, lambda: Option<T>) -> DMatrix<T> {
    let (n, p) = a.shape();
    let stacked = match lambda {
        None => a.clone(),
        Some(l) => {
            let mut s = DMatrix::zeros(n + p, p);
            s.view_mut((0, 0), (n, p)).copy_from(a);
            for j in 0..p {
                s[(n + j, j)] = l;
            }
            s
        }
    };
    let qr = stacked.qr();
    let q = qr.q();
    let r = qr.r();
    let q1t = q.view((0, 0), (n, p)).transpose();
    r.solve_upper_triangular(&q1t)
        .expect("triangular factor of a full-rank system is invertible")
}

/// Geometry, harmonics, design matrix, pseudoinverse and radial basis.
///
/// Immutable once built; shareable across threads.
#[derive(Debug, Clone)]
pub struct FourierModel<T: Real> {
    geometry: AnnulusGeometry<T>,
    harmonics: HarmonicSet,
    radial: RadialBasis<T>,
    settings: FitSettings<T>,
    ls: LeastSquares<T>,
}

impl<T: Real> FourierModel<T> {
    /// Builds `A` and `P`. Fails with [`Error::SingularDesign`] when `AᵀA` is
    /// numerically singular and the settings carry no ridge ladder.
    pub fn build(
        geometry: AnnulusGeometry<T>,
        harmonics: HarmonicSet,
        radial_kind: RadialKind,
        settings: FitSettings<T>,
    ) -> Result<Self> {
        settings.validate()?;
        let radial = RadialBasis::new(geometry.r_stations(), radial_kind)?;
        let a = harmonics.design_matrix(geometry.theta_rad());
        let ls = LeastSquares::new(a);
        if ls.pinv.is_none() && settings.lambda_ladder.is_empty() {
            return Err(Error::SingularDesign {
                condition: ls.condition.as_f64(),
            });
        }
        Ok(Self { geometry, harmonics, radial, settings, ls })
    }

    /// Spline radial basis with default β and ladder.
    pub fn with_defaults(geometry: AnnulusGeometry<T>, harmonics: HarmonicSet) -> Result<Self> {
        Self::build(geometry, harmonics, RadialKind::Spline, FitSettings::default())
    }

    pub fn geometry(&self) -> &AnnulusGeometry<T> {
        &self.geometry
    }

    pub fn harmonics(&self) -> &HarmonicSet {
        &self.harmonics
    }

    pub fn radial(&self) -> &RadialBasis<T> {
        &self.radial
    }

    pub fn settings(&self) -> &FitSettings<T> {
        &self.settings
    }

    /// `N×(2k+1)` design matrix.
    pub fn design(&self) -> &DMatrix<T> {
        self.ls.a()
    }

    /// cond(AᵀA); `T::max_value()` when singular.
    pub fn condition_number(&self) -> T {
        self.ls.condition
    }

    pub fn is_singular(&self) -> bool {
        self.ls.pinv.is_none()
    }

    pub fn pseudoinverse(&self, lambda: T) -> Result<DMatrix<T>> {
        self.ls.pseudoinverse(lambda)
    }

    fn check_measurements(&self, b: &DMatrix<T>) -> Result<()> {
        let (n, m) = (self.geometry.n_rakes(), self.geometry.n_stations());
        if b.shape() != (n, m) {
            return Err(Error::DimensionMismatch(format!(
                "measurement matrix is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                n,
                m
            )));
        }
        if b.iter().any(|v| !v.finite()) {
            return Err(Error::InvalidParams("measurements must be finite".into()));
        }
        Ok(())
    }

    /// Least-squares fit with the ridge ladder fallback.
    pub fn fit(&self, b: &DMatrix<T>) -> Result<CoefficientMatrix<T>> {
        self.check_measurements(b)?;
        self.ls.fit(b, &self.settings)
    }

    /// Solve with a fixed ridge parameter (no ladder walk).
    pub fn solve(&self, b: &DMatrix<T>, lambda: T) -> Result<DMatrix<T>> {
        self.check_measurements(b)?;
        Ok(self.ls.pseudoinverse(lambda)? * b)
    }

    /// Fitted values `A X` at the rakes.
    pub fn fitted(&self, x: &DMatrix<T>) -> DMatrix<T> {
        self.design() * x
    }

    /// `vᵀ(r) U Xᵀ a(θ)` at span fraction `r` and angle `theta_deg`.
    pub fn predict_point(&self, x: &DMatrix<T>, r: T, theta_deg: T) -> Result<T> {
        let w = self.radial.weights(r)?;
        let a = self.harmonics.features(theta_deg.deg_to_rad());
        Ok((a.transpose() * x * w)[0])
    }

    /// `(Uᵀv(r)) ⊗ a(θ)`: the linear functional mapping `vec(X)` to `T(r, θ)`.
    pub fn point_functional(&self, r: T, theta_deg: T) -> Result<DVector<T>> {
        let w = self.radial.weights(r)?;
        let a = self.harmonics.features(theta_deg.deg_to_rad());
        Ok(w.kronecker(&a))
    }
}
