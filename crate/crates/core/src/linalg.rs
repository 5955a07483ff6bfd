//! Dense linear-algebra helpers: Kronecker-structured sandwiches, PSD
//! repair, pseudoinverses and numerical rank.
//!
//! Matrices are vectorized column-major throughout, so the `N×M` measurement
//! matrix becomes a length-`NM` vector with the rake index running fastest.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues below `-CLIP_REL * trace` are clipped to zero (with a warning).
pub const PSD_CLIP_REL: f64 = 1e-10;
/// Eigenvalues below `-REJECT_REL * trace` are treated as a genuine PSD violation.
pub const PSD_REJECT_REL: f64 = 1e-6;
/// Relative singular-value cutoff for rank and pseudoinverse.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Column-major vectorization.
pub fn vec_cm<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_cm`].
pub fn unvec_cm<T: Real>(v: &DVector<T>, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Computes `(I_M ⊗ L) Σ (I_M ⊗ L)ᵀ` blockwise without forming the Kronecker
/// product. `op` is `p×n`, `sigma` is `Mn×Mn`; the result is `Mp×Mp`.
pub fn kron_identity_sandwich<T: Real>(
    op: &DMatrix<T>,
    sigma: &DMatrix<T>,
    blocks: usize,
) -> Result<DMatrix<T>> {
    let (p, n) = op.shape();
    if sigma.nrows() != n * blocks || sigma.ncols() != n * blocks {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, expected {}x{}",
            sigma.nrows(),
            sigma.ncols(),
            n * blocks,
            n * blocks
        )));
    }
    let mut out = DMatrix::zeros(p * blocks, p * blocks);
    let op_t = op.transpose();
    for j in 0..blocks {
        for i in 0..=j {
            let block = sigma.view((i * n, j * n), (n, n));
            let inner = op * block * &op_t;
            out.view_mut((i * p, j * p), (p, p)).copy_from(&inner);
            if i != j {
                out.view_mut((j * p, i * p), (p, p))
                    .copy_from(&inner.transpose());
            }
        }
    }
    Ok(out)
}

/// Explicit `I_M ⊗ L`. Only used where a dense operator is clearer than the
/// blockwise sandwich (tests and small problems).
pub fn kron_identity<T: Real>(op: &DMatrix<T>, blocks: usize) -> DMatrix<T> {
    DMatrix::<T>::identity(blocks, blocks).kronecker(op)
}

/// In-place `(S + Sᵀ)/2`.
pub fn symmetrize<T: Real>(s: &mut DMatrix<T>) {
    let n = s.nrows();
    let half = T::lit(0.5);
    for j in 0..n {
        for i in 0..j {
            let avg = (s[(i, j)] + s[(j, i)]) * half;
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
}

/// Symmetrizes and repairs tiny negative eigenvalues produced by round-off.
///
/// Eigenvalues in `[-PSD_REJECT_REL·tr, -PSD_CLIP_REL·tr)` are clipped to zero
/// and logged; anything more negative is an error. Matrices whose spectrum is
/// already above `-PSD_CLIP_REL·tr` are only symmetrized, so exact zeros stay
/// exact.
pub fn enforce_psd<T: Real>(mut s: DMatrix<T>) -> Result<DMatrix<T>> {
    symmetrize(&mut s);
    let n = s.nrows();
    if n == 0 {
        return Ok(s);
    }
    let scale = s.diagonal().iter().fold(T::zero(), |acc, &d| acc + d.abs());
    if scale == T::zero() {
        return Ok(s);
    }
    let eig = SymmetricEigen::new(s.clone());
    let min = eig.eigenvalues.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b));
    if min >= -T::lit(PSD_CLIP_REL) * scale {
        return Ok(s);
    }
    if min < -T::lit(PSD_REJECT_REL) * scale {
        return Err(Error::NotPsd { min_eigenvalue: min.as_f64() });
    }
    log::warn!(
        "clipping negative eigenvalue {:.3e} (trace {:.3e}) to restore PSD",
        min.as_f64(),
        scale.as_f64()
    );
    let clipped = eig.eigenvalues.map(|l| if l < T::zero() { T::zero() } else { l });
    let mut repaired = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&mut repaired);
    Ok(repaired)
}

/// Singular values of `m`, descending.
pub fn singular_values<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    let mut sv = m.clone().svd(false, false).singular_values;
    sv.as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Spectral norm ‖m‖₂ (largest singular value).
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    let sv = singular_values(m);
    if sv.is_empty() {
        T::zero()
    } else {
        sv[0]
    }
}

/// Count of singular values above `rel_tol · σ_max`.
pub fn numerical_rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    let sv = singular_values(m);
    if sv.is_empty() || sv[0] == T::zero() {
        return 0;
    }
    let cut = rel_tol * sv[0];
    sv.iter().filter(|&&s| s > cut).count()
}

/// Moore–Penrose pseudoinverse with a relative singular-value cutoff.
pub fn pseudo_inverse<T: Real>(m: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let (r, c) = m.shape();
    let svd = m.clone().svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b));
    if smax == T::zero() {
        return DMatrix::zeros(c, r);
    }
    let cut = rel_tol * smax;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

/// Returns `L` with `L Lᵀ = cov`.
///
/// Tries Cholesky first and falls back to a symmetric eigendecomposition for
/// semidefinite input. Fails with [`Error::NotPsd`] when the matrix has a
/// materially negative eigenvalue.
pub fn psd_factor<T: Real>(cov: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !cov.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "covariance must be square, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let sym = enforce_psd(cov.clone())?;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| if l > T::zero() { l.sqrt() } else { T::zero() });
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(s: &DMatrix<T>) -> T {
    let mut sym = s.clone();
    symmetrize(&mut sym);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// Relative Frobenius distance ‖a − b‖_F / ‖b‖_F.
pub fn rel_frobenius<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let denom = b.norm();
    if denom == T::zero() {
        return (a - b).norm();
    }
    (a - b).norm() / denom
}
