//! Seeded correlated-Gaussian sampling and the Monte Carlo studies built on it.
//!
//! Samples are generated in fixed-size batches. Batch `i` draws from a
//! ChaCha20 stream seeded with `seed` and stream id `i`, batches run on the
//! rayon pool, and per-batch results are merged in batch order. Results are
//! therefore identical for a given seed and sample count regardless of the
//! number of threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::efficiency::{efficiency, StationState};
use crate::error::{Error, Result};
use crate::geometry::{AnnulusGeometry, FitSettings, FourierModel, HarmonicSet, LeastSquares};
use crate::linalg;
use crate::propagation::{FieldDistribution, MeasurementDistribution};
use crate::radial::RadialKind;
use crate::residual::{chi_square_params, error_moments, sampling_metric_nm};
use crate::scalar::Real;

/// Samples per batch (even, so antithetic pairs never straddle batches).
pub const BATCH_SIZE: usize = 4096;
pub const DEFAULT_PROPAGATION_SAMPLES: usize = 200_000;
pub const DEFAULT_EFFICIENCY_SAMPLES: usize = 500_000;
pub const DEFAULT_RAKE_DRAWS: usize = 50_000;
/// Largest fraction of rake draws allowed to fail the ridge ladder.
pub const MAX_FAILED_FRACTION: f64 = 0.01;
/// Highest frequency considered by [`frequency_scan`].
pub const SCAN_MAX_FREQUENCY: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub n_samples: usize,
    /// Pair every draw `z` with `−z`.
    #[serde(default)]
    pub antithetic: bool,
}

impl SamplerConfig {
    pub fn new(seed: u64, n_samples: usize) -> Self {
        Self { seed, n_samples, antithetic: false }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::TooFewSamples(self.n_samples));
        }
        Ok(())
    }

    fn batches(&self) -> Vec<(u64, usize)> {
        (0..self.n_samples.div_ceil(BATCH_SIZE))
            .map(|i| (i as u64, BATCH_SIZE.min(self.n_samples - i * BATCH_SIZE)))
            .collect()
    }
}

fn standard_normals<T: Real>(seed: u64, stream: u64, dim: usize, count: usize, antithetic: bool) -> DMatrix<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut z = DMatrix::<T>::zeros(dim, count);
    for j in 0..count {
        if antithetic && j % 2 == 1 {
            for i in 0..dim {
                z[(i, j)] = -z[(i, j - 1)];
            }
        } else {
            for i in 0..dim {
                let v: f64 = rng.sample(StandardNormal);
                z[(i, j)] = T::lit(v);
            }
        }
    }
    z
}

/// Runs `f` on every batch of standard normals (`dim × batch`) in parallel and
/// returns the per-batch results in batch order.
fn run_batches<T, A, F>(config: &SamplerConfig, dim: usize, f: F) -> Vec<A>
where
    T: Real,
    A: Send,
    F: Fn(DMatrix<T>) -> A + Sync,
{
    config
        .batches()
        .into_par_iter()
        .map(|(stream, count)| f(standard_normals(config.seed, stream, dim, count, config.antithetic)))
        .collect()
}

/// Draws `n_samples` vectors from `N(mean, cov)`; one sample per column.
pub fn sample_mvn<T: Real>(mean: &DVector<T>, cov: &DMatrix<T>, config: &SamplerConfig) -> Result<DMatrix<T>> {
    config.validate()?;
    if cov.shape() != (mean.len(), mean.len()) {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, mean has {} entries",
            cov.nrows(),
            cov.ncols(),
            mean.len()
        )));
    }
    let l = linalg::psd_factor(cov)?;
    let parts = run_batches(config, mean.len(), |z: DMatrix<T>| shift_columns(&l * z, mean));
    let mut out = DMatrix::zeros(mean.len(), config.n_samples);
    let mut col = 0;
    for p in parts {
        out.columns_mut(col, p.ncols()).copy_from(&p);
        col += p.ncols();
    }
    Ok(out)
}

fn shift_columns<T: Real>(mut m: DMatrix<T>, shift: &DVector<T>) -> DMatrix<T> {
    for mut c in m.column_iter_mut() {
        c += shift;
    }
    m
}

/// Streaming mean and covariance (pairwise merge).
#[derive(Debug, Clone)]
struct CovAccumulator<T: Real> {
    n: usize,
    mean: DVector<T>,
    m2: DMatrix<T>,
}

impl<T: Real> CovAccumulator<T> {
    fn from_batch(samples: &DMatrix<T>) -> Self {
        let n = samples.ncols();
        let mean = samples.column_mean();
        let centered = shift_columns(samples.clone(), &-&mean);
        let m2 = &centered * centered.transpose();
        Self { n, mean, m2 }
    }

    fn merge(self, other: Self) -> Self {
        let n = self.n + other.n;
        let delta = &other.mean - &self.mean;
        let wb = T::from_count(other.n) / T::from_count(n);
        let cross = T::from_count(self.n) * wb;
        Self {
            n,
            mean: &self.mean + &delta * wb,
            m2: self.m2 + other.m2 + &delta * delta.transpose() * cross,
        }
    }

    fn covariance(&self) -> DMatrix<T> {
        let mut c = &self.m2 / T::from_count(self.n - 1);
        linalg::symmetrize(&mut c);
        c
    }
}

/// Elementwise mean and variance (pairwise merge).
#[derive(Debug, Clone)]
struct VarAccumulator<T: Real> {
    n: usize,
    mean: DMatrix<T>,
    m2: DMatrix<T>,
}

impl<T: Real> VarAccumulator<T> {
    fn empty(rows: usize, cols: usize) -> Self {
        Self { n: 0, mean: DMatrix::zeros(rows, cols), m2: DMatrix::zeros(rows, cols) }
    }

    fn push(&mut self, x: &DMatrix<T>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / T::from_count(self.n);
        let delta2 = x - &self.mean;
        self.m2 += delta.component_mul(&delta2);
    }

    fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = &other.mean - &self.mean;
        let wb = T::from_count(other.n) / T::from_count(n);
        let cross = T::from_count(self.n) * wb;
        Self {
            n,
            mean: &self.mean + &delta * wb,
            m2: self.m2 + other.m2 + delta.component_mul(&delta) * cross,
        }
    }

    fn variance(&self) -> DMatrix<T> {
        if self.n < 2 {
            return DMatrix::zeros(self.m2.nrows(), self.m2.ncols());
        }
        &self.m2 / T::from_count(self.n - 1)
    }
}

/// Sample moments of a scalar with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarStats<T> {
    pub mean: T,
    pub variance: T,
    pub mean_se: T,
    pub variance_se: T,
}

impl<T: Real> ScalarStats<T> {
    pub fn from_samples(xs: &[T]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::TooFewSamples(n));
        }
        let nf = T::from_count(n);
        let mean = xs.iter().fold(T::zero(), |a, &x| a + x) / nf;
        let (mut s2, mut s4) = (T::zero(), T::zero());
        for &x in xs {
            let d = (x - mean) * (x - mean);
            s2 += d;
            s4 += d * d;
        }
        let variance = s2 / (nf - T::one());
        let m2 = s2 / nf;
        let m4 = s4 / nf;
        Ok(Self {
            mean,
            variance,
            mean_se: (variance / nf).sqrt(),
            variance_se: ((m4 - m2 * m2).max(T::zero()) / nf).sqrt(),
        })
    }

    pub fn std_dev(&self) -> T {
        self.variance.sqrt()
    }
}

/// Gaussian-theory standard errors of the entries of a sample covariance.
fn covariance_se<T: Real>(cov: &DMatrix<T>, n: usize) -> DMatrix<T> {
    let denom = T::from_count(n - 1);
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)] * cov[(i, j)]) / denom).sqrt()
    })
}

fn apply_blockwise<T: Real>(op: &DMatrix<T>, batch: &DMatrix<T>, blocks: usize) -> DMatrix<T> {
    let (r, c) = op.shape();
    let mut out = DMatrix::zeros(r * blocks, batch.ncols());
    for m in 0..blocks {
        out.rows_mut(m * r, r).copy_from(&(op * batch.rows(m * c, c)));
    }
    out
}

/// Empirical moments from pushing measurement draws through the fit.
#[derive(Debug, Clone)]
pub struct McPropagation<T: Real> {
    pub n_samples: usize,
    pub mu_x: DMatrix<T>,
    pub sigma_x: DMatrix<T>,
    pub sigma_x_se: DMatrix<T>,
    pub mu_f: DMatrix<T>,
    pub sigma_f: DMatrix<T>,
    pub sigma_f_se: DMatrix<T>,
    pub mu_r: DMatrix<T>,
    pub sigma_r: DMatrix<T>,
    pub sigma_r_se: DMatrix<T>,
    /// Moments of `ε̃_p² = ‖AX − B‖² / NM` over the draws.
    pub eps: ScalarStats<T>,
    /// `‖AX − B‖²` per draw, in sample order.
    pub residual_sq_norms: Vec<T>,
    /// Prediction points `(span fraction, θ in degrees)`.
    pub grid: Vec<(T, T)>,
    pub grid_mean: Vec<T>,
    pub grid_variance: Vec<T>,
}

struct PropagationBatch<T: Real> {
    x: CovAccumulator<T>,
    f: CovAccumulator<T>,
    r: CovAccumulator<T>,
    rss: Vec<T>,
}

/// Monte Carlo propagation of `B ~ N(μ_B, Σ_B)` through the fit with fixed
/// ridge parameter `lambda`.
///
/// Predictive statistics at `grid` are the sample mean and variance of the
/// predictions, evaluated exactly as `fᵀμ̂_X` and `fᵀΣ̂_X f` (predictions are
/// linear in `vec(X)`).
pub fn mc_propagate_model<T: Real>(
    model: &FourierModel<T>,
    meas: &MeasurementDistribution<T>,
    lambda: T,
    config: &SamplerConfig,
    grid: &[(T, T)],
) -> Result<McPropagation<T>> {
    config.validate()?;
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
    let (n, m) = (g.n_rakes(), g.n_stations());
    let p_coef = model.harmonics().n_coefficients();
    let pinv = model.pseudoinverse(lambda)?;
    let a = model.design().clone();
    let l = linalg::psd_factor(meas.covariance())?;
    let mu_b = linalg::vec_cm(meas.mean());

    let batches = run_batches(config, n * m, |z: DMatrix<T>| {
        let b = shift_columns(&l * z, &mu_b);
        let x = apply_blockwise(&pinv, &b, m);
        let f = apply_blockwise(&a, &x, m);
        let r = &f - &b;
        let rss = r.column_iter().map(|c| c.norm_squared()).collect();
        PropagationBatch {
            x: CovAccumulator::from_batch(&x),
            f: CovAccumulator::from_batch(&f),
            r: CovAccumulator::from_batch(&r),
            rss,
        }
    });

    let mut iter = batches.into_iter();
    let first = iter.next().expect("at least one batch");
    let (mut ax, mut af, mut ar, mut rss) = (first.x, first.f, first.r, first.rss);
    for b in iter {
        ax = ax.merge(b.x);
        af = af.merge(b.f);
        ar = ar.merge(b.r);
        rss.extend(b.rss);
    }

    let nm = T::from_count(n * m);
    let eps_samples: Vec<T> = rss.iter().map(|&s| s / nm).collect();
    let sigma_x = ax.covariance();
    let mut grid_mean = Vec::with_capacity(grid.len());
    let mut grid_variance = Vec::with_capacity(grid.len());
    for &(r, t) in grid {
        let f = model.point_functional(r, t)?;
        grid_mean.push(f.dot(&ax.mean));
        grid_variance.push((f.transpose() * &sigma_x * &f)[0].max(T::zero()));
    }
    let count = config.n_samples;
    Ok(McPropagation {
        n_samples: count,
        mu_x: linalg::unvec_cm(&ax.mean, p_coef, m),
        sigma_x_se: covariance_se(&sigma_x, count),
        sigma_x,
        mu_f: linalg::unvec_cm(&af.mean, n, m),
        sigma_f_se: covariance_se(&af.covariance(), count),
        sigma_f: af.covariance(),
        mu_r: linalg::unvec_cm(&ar.mean, n, m),
        sigma_r_se: covariance_se(&ar.covariance(), count),
        sigma_r: ar.covariance(),
        eps: ScalarStats::from_samples(&eps_samples)?,
        residual_sq_norms: rss,
        grid: grid.to_vec(),
        grid_mean,
        grid_variance,
    })
}

/// Monte Carlo mean and variance of the efficiency under `N(z̄, DρD)`.
pub fn mc_efficiency<T: Real>(state: &StationState<T>, config: &SamplerConfig) -> Result<ScalarStats<T>> {
    config.validate()?;
    let cov = state.covariance()?;
    let cov = DMatrix::from_fn(5, 5, |i, j| cov[(i, j)]);
    let l = linalg::psd_factor(&cov)?;
    let mean = DVector::from_column_slice(&state.z);
    let parts = run_batches(config, 5, |z: DMatrix<T>| -> Result<Vec<T>> {
        let s = shift_columns(&l * z, &mean);
        s.column_iter()
            .map(|c| efficiency(&[c[0], c[1], c[2], c[3], c[4]]))
            .collect()
    });
    let mut etas = Vec::with_capacity(config.n_samples);
    for p in parts {
        etas.extend(p?);
    }
    ScalarStats::from_samples(&etas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanStatus {
    Ok,
    /// The ridge ladder never brought ‖X̂‖₂ below β.
    RegularizationExhausted,
    /// The design was singular and no ladder was configured.
    SingularDesign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry<T> {
    pub omega: [u32; 2],
    /// Ridge parameter used; `None` for flagged entries.
    pub lambda: Option<T>,
    /// `μ(ε_p²)`; `None` for flagged entries.
    pub mean_eps: Option<T>,
    /// Condition number of `AᵀA`.
    pub condition: T,
    pub status: ScanStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyScanResult<T> {
    /// Ascending in `mean_eps`, flagged entries last.
    pub entries: Vec<ScanEntry<T>>,
}

impl<T: Real> FrequencyScanResult<T> {
    /// Best-ranked unflagged entry.
    pub fn best(&self) -> Option<&ScanEntry<T>> {
        self.entries.iter().find(|e| e.status == ScanStatus::Ok)
    }

    /// Position of `omega` in the ranking.
    pub fn rank_of(&self, omega: [u32; 2]) -> Option<usize> {
        self.entries.iter().position(|e| e.omega == omega)
    }
}

/// Closed-form `μ(ε_p²)` for every pair `ω₁ < ω₂ ≤ 10`, ranked ascending.
///
/// Requires iid measurement noise.
pub fn frequency_scan<T: Real>(
    geometry: &AnnulusGeometry<T>,
    meas: &MeasurementDistribution<T>,
    radial: RadialKind,
    settings: &FitSettings<T>,
) -> Result<FrequencyScanResult<T>> {
    let sigma_b = meas.iid_sigma().ok_or(Error::RequiresIidNoise)?;
    settings.validate()?;
    let pairs: Vec<[u32; 2]> = (1..=SCAN_MAX_FREQUENCY)
        .flat_map(|a| (a + 1..=SCAN_MAX_FREQUENCY).map(move |b| [a, b]))
        .collect();
    let results: Vec<Result<ScanEntry<T>>> = pairs
        .par_iter()
        .map(|&omega| scan_pair(geometry, meas, radial, settings, omega, sigma_b))
        .collect();
    let mut entries = results.into_iter().collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| match (a.mean_eps, b.mean_eps) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.omega.cmp(&b.omega),
    });
    Ok(FrequencyScanResult { entries })
}

fn scan_pair<T: Real>(
    geometry: &AnnulusGeometry<T>,
    meas: &MeasurementDistribution<T>,
    radial: RadialKind,
    settings: &FitSettings<T>,
    omega: [u32; 2],
    sigma_b: T,
) -> Result<ScanEntry<T>> {
    let flagged = |condition: T, status| ScanEntry { omega, lambda: None, mean_eps: None, condition, status };
    let model = match FourierModel::build(geometry.clone(), HarmonicSet::new(&omega)?, radial, settings.clone()) {
        Ok(m) => m,
        Err(Error::SingularDesign { .. }) => return Ok(flagged(T::max_value().unwrap(), ScanStatus::SingularDesign)),
        Err(e) => return Err(e),
    };
    let condition = model.condition_number();
    let fit = match model.fit(meas.mean()) {
        Ok(f) => f,
        Err(Error::RegularizationExhausted { .. }) => return Ok(flagged(condition, ScanStatus::RegularizationExhausted)),
        Err(e) => return Err(e),
    };
    let mean_eps = if sigma_b == T::zero() {
        sampling_metric_nm(&model, &fit.x, meas.mean())?
    } else {
        let field = FieldDistribution::propagate(&model, fit.lambda, meas)?;
        let params = chi_square_params(&field)?;
        error_moments(&params, meas.n_rakes(), meas.n_stations(), sigma_b)?.mean
    };
    Ok(ScanEntry { omega, lambda: Some(fit.lambda), mean_eps: Some(mean_eps), condition, status: ScanStatus::Ok })
}

/// Coefficient stack and circumferential predictions from perturbed rake angles.
#[derive(Debug, Clone)]
pub struct RakeMcResult<T: Real> {
    /// Fitted coefficient matrices of the successful draws, in draw order.
    pub stack: Vec<DMatrix<T>>,
    /// Ridge parameter selected for each stored slice.
    pub lambdas: Vec<T>,
    pub failed: usize,
    pub total: usize,
    /// Prediction angles in degrees (`P` uniformly spaced from 0).
    pub grid_theta: Vec<T>,
    /// `P × M` predictive mean.
    pub grid_mean: DMatrix<T>,
    /// `P × M` predictive variance.
    pub grid_variance: DMatrix<T>,
}

fn wrap_degrees<T: Real>(t: T) -> T {
    let full = T::lit(360.0);
    let w = t - full * (t / full).floor();
    // guard against w == 360 from rounding of tiny negatives
    if w >= full { T::zero() } else { w }
}

struct RakeBatch<T: Real> {
    stack: Vec<DMatrix<T>>,
    lambdas: Vec<T>,
    failed: usize,
    acc: VarAccumulator<T>,
}

/// Refits `b` under rake angles drawn from `N(μ_θ, Σ_θ)` (degrees) and
/// collects predictions on a `P`-point circumferential grid at each station.
///
/// Draws are wrapped into `[0°, 360°)`; coincident rakes go through the ridge
/// ladder like any other ill-conditioned design. Fails with `DrawFailed` when
/// more than 1% of the draws exhaust the ladder.
pub fn rake_position_mc<T: Real>(
    model: &FourierModel<T>,
    b: &DMatrix<T>,
    mu_theta: &[T],
    sigma_theta: &DMatrix<T>,
    grid_points: usize,
    config: &SamplerConfig,
) -> Result<RakeMcResult<T>> {
    config.validate()?;
    let n = model.geometry().n_rakes();
    let m = model.geometry().n_stations();
    if mu_theta.len() != n || b.shape() != (n, m) {
        return Err(Error::DimensionMismatch(format!(
            "expected {n} mean angles and a {n}x{m} measurement matrix"
        )));
    }
    if grid_points == 0 {
        return Err(Error::InvalidParams("prediction grid needs at least one point".into()));
    }
    let l = linalg::psd_factor(sigma_theta)?;
    if l.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("Σ_θ must be {n}x{n}")));
    }
    let mu = DVector::from_column_slice(mu_theta);
    let harmonics = model.harmonics();
    let settings = model.settings();
    let grid_theta: Vec<T> = (0..grid_points)
        .map(|j| T::lit(360.0) * T::from_count(j) / T::from_count(grid_points))
        .collect();
    let grid_rad: Vec<T> = grid_theta.iter().map(|t| t.deg_to_rad()).collect();
    let a_pred = harmonics.design_matrix(&grid_rad);

    let batches = run_batches(config, n, |z: DMatrix<T>| {
        let h = shift_columns(&l * z, &mu);
        let mut out = RakeBatch {
            stack: Vec::with_capacity(h.ncols()),
            lambdas: Vec::with_capacity(h.ncols()),
            failed: 0,
            acc: VarAccumulator::empty(grid_points, m),
        };
        for col in h.column_iter() {
            let theta_rad: Vec<T> = col.iter().map(|&t| wrap_degrees(t).deg_to_rad()).collect();
            let ls = LeastSquares::new(harmonics.design_matrix(&theta_rad));
            match ls.fit(b, settings) {
                Ok(fit) => {
                    out.acc.push(&(&a_pred * &fit.x));
                    out.stack.push(fit.x);
                    out.lambdas.push(fit.lambda);
                }
                Err(_) => out.failed += 1,
            }
        }
        out
    });

    let mut stack = Vec::with_capacity(config.n_samples);
    let mut lambdas = Vec::with_capacity(config.n_samples);
    let mut failed = 0;
    let mut acc = VarAccumulator::empty(grid_points, m);
    for batch in batches {
        stack.extend(batch.stack);
        lambdas.extend(batch.lambdas);
        failed += batch.failed;
        acc = acc.merge(batch.acc);
    }
    let total = config.n_samples;
    if failed as f64 > MAX_FAILED_FRACTION * total as f64 || acc.n == 0 {
        return Err(Error::DrawFailed { failed, total });
    }
    if failed > 0 {
        log::warn!("{failed} of {total} rake draws exhausted the ridge ladder and were skipped");
    }
    Ok(RakeMcResult {
        stack,
        lambdas,
        failed,
        total,
        grid_theta,
        grid_variance: acc.variance(),
        grid_mean: acc.mean,
    })
}

/// `Σ_θ = σ_θ² I` for `n` rakes.
pub fn isotropic_angle_covariance<T: Real>(n: usize, sigma_theta_deg: T) -> DMatrix<T> {
    DMatrix::identity(n, n) * (sigma_theta_deg * sigma_theta_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FitSettings;
    use approx::assert_relative_eq;

    const ENGINE_A: [f64; 6] = [54.0, 90.0, 162.0, 234.0, 270.0, 342.0];

    fn model(m: usize) -> FourierModel<f64> {
        let stations: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        FourierModel::build(
            AnnulusGeometry::new(&ENGINE_A, &stations, 0.4, 1.0).unwrap(),
            HarmonicSet::new(&[1, 4]).unwrap(),
            RadialKind::Spline,
            FitSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_stream() {
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let cfg = SamplerConfig::new(7, 10_000);
        let a = sample_mvn(&mean, &cov, &cfg).unwrap();
        let b = sample_mvn(&mean, &cov, &cfg).unwrap();
        assert_eq!(a, b);
        let c = sample_mvn(&mean, &cov, &SamplerConfig::new(8, 10_000)).unwrap();
        assert_ne!(a, c);
        // a shorter run is a prefix of a longer one
        let short = sample_mvn(&mean, &cov, &SamplerConfig::new(7, 5000)).unwrap();
        assert_eq!(short, a.columns(0, 5000));
    }

    #[test]
    fn thread_count_does_not_matter() {
        let mean = DVector::from_vec(vec![0.0; 3]);
        let cov = DMatrix::identity(3, 3);
        let cfg = SamplerConfig::new(3, 20_000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| sample_mvn(&mean, &cov, &cfg).unwrap());
        let b = sample_mvn(&mean, &cov, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_covariance_returns_mean() {
        let mean = DVector::from_vec(vec![3.0, 4.0]);
        let s = sample_mvn(&mean, &DMatrix::zeros(2, 2), &SamplerConfig::new(1, 100)).unwrap();
        for c in s.column_iter() {
            assert_eq!(c, mean);
        }
    }

    #[test]
    fn correlated_pair() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let s = sample_mvn(&DVector::<f64>::zeros(2), &cov, &SamplerConfig::new(11, 500_000)).unwrap();
        let acc = CovAccumulator::from_batch(&s);
        let c = acc.covariance();
        let r = c[(0, 1)] / (c[(0, 0)] * c[(1, 1)]).sqrt();
        assert!((r - 0.8).abs() < 0.01, "r = {r}");
    }

    #[test]
    fn antithetic_pairs_cancel() {
        let cfg = SamplerConfig { seed: 5, n_samples: 1000, antithetic: true };
        let s = sample_mvn(&DVector::<f64>::zeros(2), &DMatrix::identity(2, 2), &cfg).unwrap();
        assert!(s.column_mean().amax() < 1e-15);
    }

    #[test]
    fn semidefinite_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = sample_mvn(&DVector::zeros(2), &cov, &SamplerConfig::new(2, 100)).unwrap();
        for c in s.column_iter() {
            assert_relative_eq!(c[0], c[1], epsilon = 1e-12);
        }
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            sample_mvn(&DVector::zeros(2), &bad, &SamplerConfig::new(2, 100)),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn chan_merge_matches_single_pass() {
        let s = DMatrix::from_fn(3, 101, |i, j| ((i * 31 + j * 17) as f64).sin() + 100.0);
        let whole = CovAccumulator::from_batch(&s);
        let merged = CovAccumulator::from_batch(&s.columns(0, 40).into_owned())
            .merge(CovAccumulator::from_batch(&s.columns(40, 61).into_owned()));
        assert_relative_eq!(whole.covariance(), merged.covariance(), max_relative = 1e-10);
        let mut va = VarAccumulator::empty(3, 1);
        for c in s.column_iter() {
            va.push(&DMatrix::from_column_slice(3, 1, c.as_slice()));
        }
        assert_relative_eq!(va.variance().column(0).into_owned(), whole.covariance().diagonal(), max_relative = 1e-10);
    }

    #[test]
    fn zero_noise_propagation() {
        let model = model(3);
        let mu = DMatrix::from_fn(6, 3, |i, j| 500.0 + (i + j) as f64);
        let meas = MeasurementDistribution::iid(mu, 0.0).unwrap();
        let mc = mc_propagate_model(&model, &meas, 0.0, &SamplerConfig::new(1, 100), &[(0.5, 10.0)]).unwrap();
        assert!(mc.sigma_x.amax() < 1e-20);
        assert!(mc.sigma_r.amax() < 1e-20);
        assert!(mc.grid_variance[0] < 1e-20);
    }

    #[test]
    fn standard_errors_shrink() {
        let model = model(2);
        let mu = DMatrix::from_fn(6, 2, |i, j| 500.0 + (i * 2 + j) as f64);
        let meas = MeasurementDistribution::iid(mu, 0.5).unwrap();
        let small = mc_propagate_model(&model, &meas, 0.0, &SamplerConfig::new(4, 20_000), &[]).unwrap();
        let big = mc_propagate_model(&model, &meas, 0.0, &SamplerConfig::new(4, 80_000), &[]).unwrap();
        let ratio = small.eps.mean_se / big.eps.mean_se;
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
        let ratio = small.sigma_x_se[(0, 0)] / big.sigma_x_se[(0, 0)];
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
        let ratio = small.eps.variance_se / big.eps.variance_se;
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn efficiency_mc_matches_taylor() {
        let state = StationState::<f64>::synthetic();
        let mc = mc_efficiency(&state, &SamplerConfig::new(9, 100_000)).unwrap();
        let taylor = crate::efficiency::taylor_variance(&state).unwrap();
        assert!((mc.std_dev() / taylor.eta_sigma() - 1.0).abs() < 0.02);
    }

    const IRREGULAR: [f64; 9] = [10.0, 47.0, 85.0, 122.0, 160.0, 205.0, 251.0, 290.0, 333.0];

    fn in_span_meas(theta: &[f64], m: usize) -> (FourierModel<f64>, MeasurementDistribution<f64>) {
        let stations: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        let model = FourierModel::build(
            AnnulusGeometry::new(theta, &stations, 0.4, 1.0).unwrap(),
            HarmonicSet::new(&[1, 4]).unwrap(),
            RadialKind::Spline,
            FitSettings::default(),
        )
        .unwrap();
        let x = DMatrix::from_fn(5, m, |i, j| if i == 0 { 500.0 } else { 1.0 + (i + j) as f64 * 0.3 });
        let b = model.fitted(&x);
        (model, MeasurementDistribution::iid(b, 0.51).unwrap())
    }

    #[test]
    fn scan_covers_all_pairs() {
        let (model, meas) = in_span_meas(&IRREGULAR, 2);
        let scan = frequency_scan(model.geometry(), &meas, RadialKind::Spline, &FitSettings::default()).unwrap();
        assert_eq!(scan.entries.len(), 45);
        assert_eq!(scan.best().unwrap().omega, [1, 4]);
        let means: Vec<f64> = scan.entries.iter().filter_map(|e| e.mean_eps).collect();
        assert_eq!(means.len(), 45);
        assert!(means.windows(2).all(|w| w[0] <= w[1]));
        assert!(means[1] > 1.5 * means[0]);
    }

    #[test]
    fn scan_ties_on_aliased_rake_set() {
        // Engine A angles sit on an 18° lattice: several pairs span the same
        // column space and the singular ones fall back to ridge.
        let (model, meas) = in_span_meas(&ENGINE_A, 2);
        let scan = frequency_scan(model.geometry(), &meas, RadialKind::Spline, &FitSettings::default()).unwrap();
        let best = scan.entries[0].mean_eps.unwrap();
        let own = scan.entries[scan.rank_of([1, 4]).unwrap()].mean_eps.unwrap();
        assert_relative_eq!(own, best, max_relative = 1e-9);
        let ridge = scan.entries.iter().find(|e| e.omega == [1, 10]).unwrap();
        assert!(ridge.lambda.unwrap() > 0.0);
        assert!(ridge.mean_eps.unwrap() > best);
    }

    #[test]
    fn scan_flags_exhausted_pairs() {
        let model = model(1);
        let b = DMatrix::from_fn(6, 1, |i, _| 500.0 + i as f64);
        let meas = MeasurementDistribution::iid(b, 0.5).unwrap();
        let settings = FitSettings { beta: 1.0, lambda_ladder: vec![1e-4] };
        let scan = frequency_scan(model.geometry(), &meas, RadialKind::Spline, &settings).unwrap();
        assert_eq!(scan.entries.len(), 45);
        assert!(scan.entries.iter().all(|e| e.status == ScanStatus::RegularizationExhausted));
    }

    #[test]
    fn rake_mc_zero_spread_is_deterministic_fit() {
        let model = model(3);
        let b = DMatrix::from_fn(6, 3, |i, j| 500.0 + ((i * 7 + j) as f64).sin());
        let fit = model.fit(&b).unwrap();
        let cfg = SamplerConfig::new(1, 300);
        let res = rake_position_mc(&model, &b, &ENGINE_A, &DMatrix::zeros(6, 6), 36, &cfg).unwrap();
        assert_eq!(res.stack.len(), 300);
        for x in &res.stack {
            assert_eq!(x, &fit.x);
        }
        assert!(res.grid_variance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rake_mc_variance_grows_with_spread() {
        let model = model(2);
        let b = DMatrix::from_fn(6, 2, |i, j| 500.0 + 3.0 * ((i * 5 + j) as f64).cos());
        let cfg = SamplerConfig::new(21, 4000);
        let lo = rake_position_mc(&model, &b, &ENGINE_A, &isotropic_angle_covariance(6, 0.51), 72, &cfg).unwrap();
        let hi = rake_position_mc(&model, &b, &ENGINE_A, &isotropic_angle_covariance(6, 5.1), 72, &cfg).unwrap();
        for (a, b) in lo.grid_variance.iter().zip(hi.grid_variance.iter()) {
            assert!(b > a);
        }
        let again = rake_position_mc(&model, &b, &ENGINE_A, &isotropic_angle_covariance(6, 5.1), 72, &cfg).unwrap();
        assert_eq!(again.grid_variance, hi.grid_variance);
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_degrees(-1.0), 359.0);
        assert_eq!(wrap_degrees(361.5), 1.5);
        assert_eq!(wrap_degrees(54.0), 54.0);
        assert!(wrap_degrees(-1e-20) < 360.0);
    }
}
