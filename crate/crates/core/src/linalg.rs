//! Dense symmetric eigendecomposition, truncated SVD and the two projectors
//! used by the alternating scheme: slice-wise rank truncation and the polar
//! (nearest orthonormal-columns) projection.
//!
//! All eigen/singular vectors returned here carry a deterministic sign: the
//! coordinate of largest magnitude is positive, ties resolved toward the
//! lowest index.

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Relative asymmetry tolerated by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Relative singular value threshold below which the polar factor is refused.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigOrder {
    /// Descending `|lambda|`.
    Magnitude,
    /// Descending `lambda`.
    Value,
}

#[derive(Debug, Clone)]
pub struct EigPairs {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors, one per column, aligned with `values`.
    pub vectors: Matrix,
}

pub fn asymmetry(a: &Matrix) -> f64 {
    let scale = a.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / scale
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {:?}",
            a.shape()
        )));
    }
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Flips column signs so that each column's largest-magnitude entry is positive.
pub fn canonicalize_signs(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        let max = col.amax();
        if max == 0.0 {
            continue;
        }
        let pivot = col
            .iter()
            .position(|v| v.abs() >= max * (1.0 - 1e-9))
            .unwrap_or(0);
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
}

fn full_eig(a: &Matrix, order: EigOrder) -> (Vec<usize>, SymmetricEigen<f64, nalgebra::Dyn>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    let key = |i: usize| match order {
        EigOrder::Magnitude => eig.eigenvalues[i].abs(),
        EigOrder::Value => eig.eigenvalues[i],
    };
    idx.sort_by(|&i, &j| key(j).total_cmp(&key(i)));
    (idx, eig)
}

/// Top-`k` eigenpairs of a symmetric matrix under the chosen ordering.
pub fn sym_eig_topk(a: &Matrix, k: usize, order: EigOrder) -> Result<EigPairs> {
    check_symmetric(a)?;
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::Contract(format!("k = {k} outside 1..={n}")));
    }
    let (idx, eig) = full_eig(&symmetrize(a), order);
    let values = DVector::from_iterator(k, idx[..k].iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(&idx[..k]);
    canonicalize_signs(&mut vectors);
    Ok(EigPairs { values, vectors })
}

#[derive(Debug, Clone)]
pub struct RankProjection {
    pub matrix: Matrix,
    /// Set when the requested rank exceeded the dimension and was clamped.
    pub clamped: bool,
}

/// Frobenius-nearest symmetric matrix of rank at most `k`: keeps the `k`
/// eigenvalues of largest magnitude.
pub fn rank_project(a: &Matrix, k: usize) -> Result<RankProjection> {
    check_symmetric(a)?;
    if k == 0 {
        return Err(Error::Contract("rank must be at least 1".into()));
    }
    let n = a.nrows();
    let clamped = k > n;
    let k = k.min(n);
    let pairs = sym_eig_topk(a, k, EigOrder::Magnitude)?;
    let scaled = &pairs.vectors * Matrix::from_diagonal(&pairs.values);
    Ok(RankProjection {
        matrix: scaled * pairs.vectors.transpose(),
        clamped,
    })
}

/// Singular values in descending order.
pub fn singular_values(x: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = x.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Nearest matrix with orthonormal columns, `X (X^T X)^{-1/2} = U V^T`.
pub fn polar_project(x: &Matrix) -> Result<Matrix> {
    polar_project_with_tol(x, RANK_TOL)
}

/// [`polar_project`] with an explicit relative rank tolerance.
pub fn polar_project_with_tol(x: &Matrix, rank_tol: f64) -> Result<Matrix> {
    let (rows, cols) = x.shape();
    if rows < cols {
        return Err(Error::Contract(format!(
            "polar projection needs rows >= cols, got {rows}x{cols}"
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Contract("non-finite input to polar projection".into()));
    }
    let svd = x.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    let tol = rank_tol * sigma_max;
    if !(sigma_min > tol) {
        return Err(Error::RankDeficient { sigma_min, tol });
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    Ok(u * v_t)
}

/// Orthonormal basis of the top-`s` left singular subspace.
///
/// Wide inputs go through the eigendecomposition of the row Gram matrix.
pub fn svd_top_left(x: &Matrix, s: usize) -> Result<Matrix> {
    let (rows, cols) = x.shape();
    if s == 0 || s > rows.min(cols) {
        return Err(Error::Contract(format!(
            "s = {s} outside 1..={}",
            rows.min(cols)
        )));
    }
    if cols > rows {
        let gram = x * x.transpose();
        return Ok(sym_eig_topk(&symmetrize(&gram), s, EigOrder::Value)?.vectors);
    }
    let svd = x.clone().svd(true, false);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut u = svd.u.expect("u requested").select_columns(&idx[..s]);
    canonicalize_signs(&mut u);
    Ok(u)
}

/// Cosines of the principal angles between the column spaces of two
/// orthonormal-column matrices, in descending order.
pub fn principal_cosines(a: &Matrix, b: &Matrix) -> Vec<f64> {
    singular_values(&a.tr_mul(b))
}

/// `||W^T W - I||_F`.
pub fn orthogonality_defect(w: &Matrix) -> f64 {
    let g = w.tr_mul(w);
    (g - Matrix::identity(w.ncols(), w.ncols())).norm()
}
