//! CSV tables for plotting: prediction grids, frequency scans, rake Monte
//! Carlo output, correlation sweeps and the rake-count demo.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FourierModel;
use crate::linalg;
use crate::montecarlo::{FrequencyScanResult, RakeMcResult, ScanStatus};
use crate::propagation::FieldDistribution;

pub const DEFAULT_N_THETA: usize = 360;
pub const DEFAULT_N_R: usize = 50;

/// Writes `rows` as CSV with a header taken from the field names.
pub fn write_csv<W: Write, S: Serialize>(writer: W, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<S: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<S>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub r_fraction: f64,
    pub theta_deg: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Predictive mean and variance on `r = i/(n_r − 1)`, `θ = j·360/n_θ`,
/// radius outer and angle inner.
pub fn prediction_grid(
    model: &FourierModel<f64>,
    field: &FieldDistribution<f64>,
    n_r: usize,
    n_theta: usize,
) -> Result<Vec<GridRow>> {
    if n_r < 2 {
        return Err(Error::OutOfDomain(n_r as f64));
    }
    if n_theta < 1 {
        return Err(Error::OutOfDomain(n_theta as f64));
    }
    let mu = linalg::vec_cm(&field.mu_x);
    let sigma = &field.sigma_x;
    let mut rows = Vec::with_capacity(n_r * n_theta);
    for i in 0..n_r {
        let r = i as f64 / (n_r - 1) as f64;
        for j in 0..n_theta {
            let theta = 360.0 * j as f64 / n_theta as f64;
            let f = model.point_functional(r, theta)?;
            let variance = (f.transpose() * sigma * &f)[0].max(0.0);
            rows.push(GridRow { r_fraction: r, theta_deg: theta, mean: f.dot(&mu), variance });
        }
    }
    Ok(rows)
}

/// Area-weighted mean of a prediction grid: trapezoid in radius (weight
/// `r dr`), rectangle rule over the periodic angle.
pub fn grid_area_mean(rows: &[GridRow], n_r: usize, n_theta: usize, r_inner: f64, r_outer: f64) -> Result<f64> {
    if rows.len() != n_r * n_theta || n_r < 2 || n_theta == 0 {
        return Err(Error::DimensionMismatch(format!(
            "grid has {} rows, expected {n_r}x{n_theta}",
            rows.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n_r {
        let w_r = if i == 0 || i == n_r - 1 { 0.5 } else { 1.0 };
        let r = r_inner + (r_outer - r_inner) * rows[i * n_theta].r_fraction;
        let ring: f64 = rows[i * n_theta..(i + 1) * n_theta].iter().map(|g| g.mean).sum();
        num += w_r * r * ring;
        den += w_r * r * n_theta as f64;
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub omega1: u32,
    pub omega2: u32,
    pub lambda: Option<f64>,
    pub mean_eps: Option<f64>,
    pub condition: f64,
    pub status: ScanStatus,
}

pub fn scan_rows(scan: &FrequencyScanResult<f64>) -> Vec<ScanRow> {
    scan.entries
        .iter()
        .map(|e| ScanRow {
            omega1: e.omega[0],
            omega2: e.omega[1],
            lambda: e.lambda,
            mean_eps: e.mean_eps,
            condition: e.condition,
            status: e.status,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RakeMcRow {
    pub r_fraction: f64,
    pub theta_deg: f64,
    pub mean: f64,
    pub variance: f64,
}

/// One row per (station, grid angle), angle fastest.
pub fn rake_mc_rows(result: &RakeMcResult<f64>, stations: &[f64]) -> Vec<RakeMcRow> {
    let mut rows = Vec::with_capacity(stations.len() * result.grid_theta.len());
    for (m, &r) in stations.iter().enumerate() {
        for (p, &t) in result.grid_theta.iter().enumerate() {
            rows.push(RakeMcRow {
                r_fraction: r,
                theta_deg: t,
                mean: result.grid_mean[(p, m)],
                variance: result.grid_variance[(p, m)],
            });
        }
    }
    rows
}
