//! Radial basis `v(r)` and mixing matrix `U` used in the prediction
//! `T(r, θ) = vᵀ(r) U Xᵀ a(θ)`.
//!
//! The default basis is the set of natural cubic spline cardinal functions
//! through the radial stations with `U = I`, so predictions interpolate the
//! per-station circumferential fits exactly. Outside the span of the
//! stations the end-station weights are held constant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadialKind {
    /// Natural cubic spline cardinal weights.
    #[default]
    Spline,
    /// Piecewise-linear hat functions.
    Linear,
}

#[derive(Debug, Clone)]
pub struct RadialBasis<T: Real> {
    stations: Vec<T>,
    kind: RadialKind,
    /// Column `m` holds the spline second derivatives of cardinal function `m`.
    curvature: DMatrix<T>,
    u: DMatrix<T>,
}

impl<T: Real> RadialBasis<T> {
    pub fn new(stations: &[T], kind: RadialKind) -> Result<Self> {
        let m = stations.len();
        if m == 0 {
            return Err(Error::InvalidGeometry("need at least one radial station".into()));
        }
        if stations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGeometry(
                "radial stations must be strictly increasing".into(),
            ));
        }
        let curvature = match kind {
            RadialKind::Spline if m >= 3 => natural_spline_curvature(stations)?,
            _ => DMatrix::zeros(m, m),
        };
        Ok(Self {
            stations: stations.to_vec(),
            kind,
            curvature,
            u: DMatrix::identity(m, m),
        })
    }

    pub fn kind(&self) -> RadialKind {
        self.kind
    }

    pub fn stations(&self) -> &[T] {
        &self.stations
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    /// The `M×M` mixing matrix `U`.
    pub fn u(&self) -> &DMatrix<T> {
        &self.u
    }

    /// `v(r)` for a span fraction `r ∈ [0, 1]`.
    pub fn evaluate(&self, r: T) -> Result<DVector<T>> {
        if !(r >= T::zero() && r <= T::one()) {
            return Err(Error::OutOfDomain(r.as_f64()));
        }
        Ok(self.evaluate_unchecked(r))
    }

    /// Combined weights `Uᵀ v(r)`, so that `T(r, θ) = wᵀ Xᵀ a(θ)`.
    pub fn weights(&self, r: T) -> Result<DVector<T>> {
        let v = self.evaluate(r)?;
        Ok(self.u.tr_mul(&v))
    }

    pub(crate) fn evaluate_unchecked(&self, r: T) -> DVector<T> {
        let m = self.stations.len();
        let mut v = DVector::zeros(m);
        if m == 1 {
            v[0] = T::one();
            return v;
        }
        let first = self.stations[0];
        let last = self.stations[m - 1];
        let x = if r < first {
            first
        } else if r > last {
            last
        } else {
            r
        };
        // index j with stations[j] <= x <= stations[j+1]
        let j = self
            .stations
            .partition_point(|&s| s <= x)
            .saturating_sub(1)
            .min(m - 2);
        let h = self.stations[j + 1] - self.stations[j];
        let a = (self.stations[j + 1] - x) / h;
        let b = (x - self.stations[j]) / h;
        v[j] = a;
        v[j + 1] = b;
        if self.kind == RadialKind::Spline && m >= 3 {
            let sixth = h * h / T::lit(6.0);
            let ca = (a * a * a - a) * sixth;
            let cb = (b * b * b - b) * sixth;
            for k in 0..m {
                v[k] += ca * self.curvature[(j, k)] + cb * self.curvature[(j + 1, k)];
            }
        }
        v
    }
}

/// Second derivatives at every node for each cardinal data vector `e_k`.
fn natural_spline_curvature<T: Real>(x: &[T]) -> Result<DMatrix<T>> {
    let m = x.len();
    let inner = m - 2;
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut lhs = DMatrix::zeros(inner, inner);
    let mut rhs = DMatrix::zeros(inner, m);
    let six = T::lit(6.0);
    for i in 1..m - 1 {
        let row = i - 1;
        lhs[(row, row)] = T::lit(2.0) * (h[i - 1] + h[i]);
        if row > 0 {
            lhs[(row, row - 1)] = h[i - 1];
        }
        if row + 1 < inner {
            lhs[(row, row + 1)] = h[i];
        }
        // 6 * ((y[i+1]-y[i])/h[i] - (y[i]-y[i-1])/h[i-1]) with y = e_k
        rhs[(row, i + 1)] += six / h[i];
        rhs[(row, i)] -= six / h[i] + six / h[i - 1];
        rhs[(row, i - 1)] += six / h[i - 1];
    }
    let solved = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidGeometry("spline system is singular".into()))?;
    let mut curvature = DMatrix::zeros(m, m);
    curvature.view_mut((1, 0), (inner, m)).copy_from(&solved);
    Ok(curvature)
}
