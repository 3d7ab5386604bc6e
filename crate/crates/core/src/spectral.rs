//! Spectral primitives: SVD, best rank-r truncation, fractional powers of
//! symmetric PSD matrices and row-space projectors.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration and the symmetric
//! eigendecomposition a cyclic Jacobi iteration. Both are accurate to a few
//! ulps relative to each singular value / eigenvalue at the dimensions used
//! here (≤ ~100).

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::matrix::{dot, norm, Matrix};
use crate::{Error, Result};

/// Singular values below `RANK_TOL · s_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Relative (per dimension) level below which a PSD eigenvalue is treated
/// as round-off in [`frac_sym_power`].
pub const EIGEN_NOISE: f64 = 1e-14;

/// Singular values below this fraction of `s_max` carry no trustworthy
/// singular vectors; those directions are filled in by basis completion.
const VECTOR_TRUST: f64 = 1e-13;

/// Full SVD `M = U · diag(s) · Vᵀ` with square orthogonal `U` (d×d) and
/// `V` (e×e), and `min(d, e)` nonincreasing singular values.
#[derive(Clone, Debug)]
pub struct FullSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl FullSvd {
    /// Number of singular values above `RANK_TOL · s_max`.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.s)
    }

    pub fn reconstruct(&self) -> Matrix {
        let (d, e) = (self.u.rows(), self.v.rows());
        let sigma = Matrix::from_diagonal(d, e, &self.s);
        self.u.matmul(&sigma).matmul_tr(&self.v)
    }
}

/// Thin SVD with `k` retained triples.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThinSvd {
    /// d×k, orthonormal columns.
    pub left_vectors: Matrix,
    /// length k, nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    /// e×k, orthonormal columns.
    pub right_vectors: Matrix,
}

impl ThinSvd {
    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let k = self.k();
        let scaled = Matrix::from_fn(self.left_vectors.rows(), k, |i, j| {
            self.left_vectors[(i, j)] * self.singular_values[j]
        });
        scaled.matmul_tr(&self.right_vectors)
    }
}

/// Count of singular values exceeding `RANK_TOL · max(s)`.
pub fn numerical_rank(s: &[f64]) -> usize {
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_TOL * smax).count()
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// One-sided Jacobi on a tall matrix (rows ≥ cols). Returns the rotated
/// columns `A·V` (column-major) and `V`.
fn jacobi_tall(a: &Matrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * (m.max(1) as f64);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= tol * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (cols, v)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Extends `k` orthonormal vectors of length `d` to an orthonormal basis of
/// ℝ^d, appending the new vectors after the given ones.
pub fn complete_basis(vectors: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = vectors.to_vec();
    while basis.len() < d {
        // Pick the standard basis vector with the largest residual.
        let mut best: Option<(f64, Vec<f64>)> = None;
        for i in 0..d {
            let mut r = vec![0.0; d];
            r[i] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &r);
                    for (x, y) in r.iter_mut().zip(b) {
                        *x -= c * y;
                    }
                }
            }
            let n = norm(&r);
            if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
                best = Some((n, r));
            }
        }
        let (n, mut r) = best.expect("dimension is positive");
        for x in &mut r {
            *x /= n;
        }
        basis.push(r);
    }
    basis
}

fn first_significant(v: &[f64]) -> f64 {
    v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(0.0)
}

fn columns_to_matrix(cols: &[Vec<f64>], rows: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Full SVD with orthogonal completions of both singular bases.
///
/// Sign convention: the first significant entry of every left singular
/// vector is positive (the paired right vector is flipped along).
pub fn svd_full(m: &Matrix) -> Result<FullSvd> {
    check_finite(m)?;
    let (d, e) = m.shape();
    let transposed = d < e;
    let tall = if transposed { m.transpose() } else { m.clone() };
    let (rows, n) = tall.shape();
    let (cols, v) = jacobi_tall(&tall);

    let mut order: Vec<(f64, usize)> = cols.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let smax = order.first().map_or(0.0, |x| x.0);

    let s: Vec<f64> = order.iter().map(|x| x.0).collect();
    let mut left: Vec<Vec<f64>> = Vec::new();
    let mut right: Vec<Vec<f64>> = Vec::new();
    for &(sigma, j) in &order {
        if smax > 0.0 && sigma > VECTOR_TRUST * smax {
            left.push(cols[j].iter().map(|x| x / sigma).collect());
        }
        right.push(v[j].clone());
    }
    let trusted = left.len();
    let mut left = complete_basis(&left, rows);
    // Completed directions pair with (numerically) zero singular values, so
    // only the trusted prefix needs the pairing with `right` preserved.
    for j in 0..left.len() {
        let sign = first_significant(&left[j]);
        if sign < 0.0 {
            left[j].iter_mut().for_each(|x| *x = -*x);
            if j < trusted {
                right[j].iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    for col in right.iter_mut().skip(trusted) {
        if first_significant(col) < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let left_m = columns_to_matrix(&left, rows);
    let right_m = columns_to_matrix(&right, n);

    let (u, v) = if transposed {
        (right_m, left_m)
    } else {
        (left_m, right_m)
    };
    let mut out = FullSvd { u, s, v };
    if transposed {
        // The convention applies to the left vectors of the original matrix.
        let k = out.s.len();
        for j in 0..out.u.cols() {
            let col = out.u.column(j);
            if first_significant(&col) < 0.0 {
                let flipped: Vec<f64> = col.iter().map(|x| -x).collect();
                out.u.set_column(j, &flipped);
                if j < k {
                    let vc: Vec<f64> = out.v.column(j).iter().map(|x| -x).collect();
                    out.v.set_column(j, &vc);
                }
            }
        }
    }
    Ok(out)
}

/// Thin SVD keeping the numerically nonzero singular triples.
pub fn thin_svd(m: &Matrix) -> Result<ThinSvd> {
    let full = svd_full(m)?;
    let k = full.rank();
    Ok(truncate(&full, k))
}

/// Thin SVD keeping all `min(d, e)` triples.
pub fn thin_svd_all(m: &Matrix) -> Result<ThinSvd> {
    let full = svd_full(m)?;
    let k = full.s.len();
    Ok(truncate(&full, k))
}

fn truncate(full: &FullSvd, k: usize) -> ThinSvd {
    ThinSvd {
        left_vectors: full.u.leading_columns(k),
        singular_values: full.s[..k].to_vec(),
        right_vectors: full.v.leading_columns(k),
    }
}

/// Best rank-`r` approximation (truncated SVD reconstruction).
pub fn best_rank_r(m: &Matrix, r: usize) -> Result<Matrix> {
    if r == 0 {
        return Err(Error::invalid("best_rank_r requires r >= 1"));
    }
    let full = svd_full(m)?;
    let k = r.min(full.s.len());
    Ok(truncate(&full, k).reconstruct())
}

/// Eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigendecomposition. The input is symmetrised first.
pub fn sym_eigen(s: &Matrix) -> Result<SymmetricEigen> {
    check_finite(s)?;
    if !s.is_square() {
        return Err(Error::ShapeMismatch {
            context: "sym_eigen",
            expected: (s.rows(), s.rows()),
            found: s.shape(),
        });
    }
    let n = s.rows();
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let mut v = Matrix::identity(n);
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += a[(i, i)] * a[(i, i)];
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off <= (f64::EPSILON * f64::EPSILON) * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymmetricEigen { values, vectors })
}

/// `S^p` for a symmetric PSD matrix and `p ∈ [0, 1]`, via the
/// eigendecomposition. `S^0` is the full identity (`0^0 = 1`), so
/// kernel directions are kept at exponent zero.
pub fn frac_sym_power(s: &Matrix, p: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("fractional power must lie in [0, 1]"));
    }
    check_finite(s)?;
    if !s.is_square() {
        return Err(Error::ShapeMismatch {
            context: "frac_sym_power",
            expected: (s.rows(), s.rows()),
            found: s.shape(),
        });
    }
    let asym = s.asymmetry();
    if asym > 1e-10 * (1.0 + s.max_abs()) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let n = s.rows();
    if p == 0.0 {
        return Ok(Matrix::identity(n));
    }
    let eig = sym_eigen(s)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    let lmax = top.max(1.0);
    // Eigenvalues at round-off level are zero in exact arithmetic; a
    // fractional power would otherwise inflate them to visible size.
    let floor = EIGEN_NOISE * (n as f64) * top.max(0.0);
    let mut powered = Vec::with_capacity(n);
    for &l in &eig.values {
        if l < -1e-10 * lmax {
            return Err(Error::NotPsd { eigenvalue: l });
        }
        let l = if l <= floor { 0.0 } else { l };
        powered.push(math::pow_nonneg(l, p));
    }
    let scaled = Matrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * powered[j]);
    let out = scaled.matmul_tr(&eig.vectors);
    Ok(Matrix::from_fn(n, n, |i, j| {
        0.5 * (out[(i, j)] + out[(j, i)])
    }))
}

/// Orthogonal projectors onto the row span of `X` and its complement,
/// `P_X = X†X` and `P_X⊥ = I_m − P_X`.
pub fn row_projectors(x: &Matrix) -> Result<(Matrix, Matrix)> {
    let svd = thin_svd(x)?;
    let v = &svd.right_vectors;
    let px = v.matmul_tr(v);
    let m = x.cols();
    let mut perp = Matrix::identity(m);
    perp -= &px;
    Ok((px, perp))
}

/// Leading spectral data of a target matrix `Z`.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetSpectrum {
    pub z: Matrix,
    pub u_z: Vec<f64>,
    pub s_z: f64,
    pub v_z: Vec<f64>,
    pub s_z2: f64,
    /// `s_Z2 / s_Z`; zero when the spectrum is degenerate.
    pub gamma_z: f64,
    /// Best rank-one approximation `u_Z s_Z v_Zᵀ`.
    pub z1: Matrix,
    /// Set when `s_Z = 0`; `gamma_z` is then meaningless.
    pub degenerate: bool,
}

pub fn target_spectrum(z: &Matrix) -> Result<TargetSpectrum> {
    let full = svd_full(z)?;
    let s_z = full.s.first().copied().unwrap_or(0.0);
    let s_z2 = full.s.get(1).copied().unwrap_or(0.0);
    let u_z = full.u.column(0);
    let v_z = full.v.column(0);
    let degenerate = s_z <= 0.0;
    let gamma_z = if degenerate { 0.0 } else { s_z2 / s_z };
    let z1 = Matrix::outer(&u_z, &v_z).scale(s_z);
    Ok(TargetSpectrum {
        z: z.clone(),
        u_z,
        s_z,
        v_z,
        s_z2,
        gamma_z,
        z1,
        degenerate,
    })
}
