//! Turbine isentropic efficiency and first-order uncertainty propagation.
//!
//! Parameters are ordered `(T01, T02, P01, P02, γ)` throughout.

use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

pub type Vector5<T> = SVector<T, 5>;
pub type Matrix5<T> = SMatrix<T, 5, 5>;

pub const PARAMETER_LABELS: [&str; 5] = ["T01", "T02", "P01", "P02", "gamma"];

/// Per-parameter standard deviations (K, K, Pa, Pa, -).
pub const REFERENCE_SIGMAS: [f64; 5] = [2.4, 1.4, 600.0, 100.0, 0.001];

/// Synthetic turbine state used as the default; not taken from any engine.
pub const SYNTHETIC_STATE: [f64; 5] = [1500.0, 1150.0, 1.5e6, 0.45e6, 1.33];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationState<T> {
    /// Means `(T01 [K], T02 [K], P01 [Pa], P02 [Pa], γ)`.
    pub z: [T; 5],
    pub sigma: [T; 5],
    /// Pearson correlation matrix, row-major.
    pub rho: [[T; 5]; 5],
}

impl<T: Real> StationState<T> {
    /// Independent parameters.
    pub fn uncorrelated(z: [T; 5], sigma: [T; 5]) -> Self {
        let mut rho = [[T::zero(); 5]; 5];
        for (i, row) in rho.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self { z, sigma, rho }
    }

    /// The synthetic default state with the reference sigmas and `ρ = I`.
    pub fn synthetic() -> Self {
        Self::uncorrelated(SYNTHETIC_STATE.map(T::lit), REFERENCE_SIGMAS.map(T::lit))
    }

    /// Same state with `ρ(T01,T02) = ρ(P01,P02) = rho`, other pairs zero.
    pub fn with_block_correlation(&self, rho: T) -> Result<Self> {
        if !(rho.abs() <= T::one()) {
            return Err(Error::InvalidCorrelation(format!("|rho| = {} > 1", rho.as_f64().abs())));
        }
        let mut out = Self::uncorrelated(self.z, self.sigma);
        for (i, j) in [(0, 1), (2, 3)] {
            out.rho[i][j] = rho;
            out.rho[j][i] = rho;
        }
        Ok(out)
    }

    pub fn mean(&self) -> Vector5<T> {
        Vector5::from_column_slice(&self.z)
    }

    pub fn correlation(&self) -> Matrix5<T> {
        Matrix5::from_fn(|i, j| self.rho[i][j])
    }

    /// Checks physical ranges and the correlation matrix.
    pub fn validate(&self) -> Result<()> {
        let [t01, t02, p01, p02, gamma] = self.z;
        if !(t01 > T::zero() && t02 > T::zero() && p01 > T::zero() && p02 > T::zero()) {
            return Err(Error::InvalidParams("temperatures and pressures must be positive".into()));
        }
        if !(gamma > T::one()) {
            return Err(Error::InvalidParams("gamma must exceed 1".into()));
        }
        if self.sigma.iter().any(|s| !(*s >= T::zero()) || !s.finite()) {
            return Err(Error::InvalidParams("sigmas must be finite and non-negative".into()));
        }
        validate_correlation(&self.correlation())
    }

    /// `D ρ D`.
    pub fn covariance(&self) -> Result<Matrix5<T>> {
        self.validate()?;
        let d = Matrix5::from_diagonal(&Vector5::from_column_slice(&self.sigma));
        Ok(d * self.correlation() * d)
    }
}

fn validate_correlation<T: Real>(rho: &Matrix5<T>) -> Result<()> {
    let tol = T::lit(1e-12);
    for i in 0..5 {
        if (rho[(i, i)] - T::one()).abs() > tol {
            return Err(Error::InvalidCorrelation(format!("diagonal entry {i} is not 1")));
        }
        for j in 0..5 {
            let v = rho[(i, j)];
            if !(v.abs() <= T::one()) {
                return Err(Error::InvalidCorrelation(format!("entry ({i}, {j}) outside [-1, 1]")));
            }
            if (v - rho[(j, i)]).abs() > tol {
                return Err(Error::InvalidCorrelation(format!("not symmetric at ({i}, {j})")));
            }
        }
    }
    let dyn_rho = DMatrix::from_fn(5, 5, |i, j| rho[(i, j)]);
    let min = linalg::min_eigenvalue(&dyn_rho);
    if min < -tol {
        return Err(Error::InvalidCorrelation(format!(
            "not positive semidefinite (min eigenvalue {:e})",
            min.as_f64()
        )));
    }
    Ok(())
}

/// `η = (T01 − T02) / (T01 (1 − (P02/P01)^((γ−1)/γ)))`.
pub fn efficiency<T: Real>(z: &[T; 5]) -> Result<T> {
    let [t01, t02, p01, p02, gamma] = *z;
    if p02 == p01 {
        return Err(Error::DegenerateRatio);
    }
    let e = (gamma - T::one()) / gamma;
    let d = T::one() - (p02 / p01).powf(e);
    if d == T::zero() || !(t01 > T::zero()) {
        return Err(Error::DegenerateRatio);
    }
    Ok((t01 - t02) / (t01 * d))
}

/// Analytic gradient of [`efficiency`].
pub fn efficiency_gradient<T: Real>(z: &[T; 5]) -> Result<Vector5<T>> {
    let eta = efficiency(z)?;
    let [t01, t02, p01, p02, gamma] = *z;
    let e = (gamma - T::one()) / gamma;
    let pi = p02 / p01;
    let pe = pi.powf(e);
    let d = T::one() - pe;
    Ok(Vector5::new(
        t02 / (t01 * t01 * d),
        -T::one() / (t01 * d),
        -eta * e * pe / (d * p01),
        eta * e * pe / (d * p02),
        eta * pe * pi.ln() / (d * gamma * gamma),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport<T> {
    pub eta_mean: T,
    pub eta_variance: T,
    /// `(∂η/∂z_i)² σ²(z_i)`.
    pub contributions: [T; 5],
    /// Contributions over their sum.
    pub contribution_fractions: [T; 5],
}

impl<T: Real> EfficiencyReport<T> {
    pub fn eta_sigma(&self) -> T {
        self.eta_variance.sqrt()
    }

    /// Labels sorted by descending contribution.
    pub fn ranking(&self) -> Vec<&'static str> {
        let mut idx: Vec<usize> = (0..5).collect();
        idx.sort_by(|&a, &b| {
            self.contributions[b]
                .partial_cmp(&self.contributions[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx.into_iter().map(|i| PARAMETER_LABELS[i]).collect()
    }
}

/// First-order mean and variance `gᵀ (DρD) g` of the efficiency.
pub fn taylor_variance<T: Real>(state: &StationState<T>) -> Result<EfficiencyReport<T>> {
    let cov = state.covariance()?;
    let g = efficiency_gradient(&state.z)?;
    let variance = (g.transpose() * cov * g)[0].max(T::zero());
    let contributions: [T; 5] = std::array::from_fn(|i| g[i] * g[i] * state.sigma[i] * state.sigma[i]);
    let total = contributions.iter().fold(T::zero(), |a, &c| a + c);
    let contribution_fractions =
        contributions.map(|c| if total > T::zero() { c / total } else { T::zero() });
    Ok(EfficiencyReport {
        eta_mean: efficiency(&state.z)?,
        eta_variance: variance,
        contributions,
        contribution_fractions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint<T> {
    pub rho: T,
    pub sigma_eta: T,
}

/// `σ(η)` as the temperature-pair and pressure-pair correlations rise together.
pub fn correlation_sweep<T: Real>(state: &StationState<T>, rho_values: &[T]) -> Result<Vec<SweepPoint<T>>> {
    rho_values
        .iter()
        .map(|&rho| {
            let report = taylor_variance(&state.with_block_correlation(rho)?)?;
            Ok(SweepPoint { rho, sigma_eta: report.eta_sigma() })
        })
        .collect()
}
