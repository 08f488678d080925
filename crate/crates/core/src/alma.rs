//! Alternating minimization of `||A - Q ×₁ W||_F` over loadings `W` with
//! orthonormal columns and group tensors `Q` whose slices have rank at most
//! `K_m`.
//!
//! Each pass solves both subproblems exactly: with `W` fixed the best `Q` is
//! the slice-wise rank truncation of the layer contraction `A ×₁ Wᵀ`; with
//! `Q` fixed the best `W` is the polar factor of `A ×₂,₃ Q` (orthogonal
//! Procrustes). The loop stops once `||W_t - W_{t-1}||_F <= eps_stop` or after
//! `max_iter` passes, and returns the loading that entered the final pass
//! together with the `Q` computed from it.

use crate::error::{Error, Result};
use crate::linalg::{orthogonality_defect, polar_project_with_tol, rank_project, symmetrize, sym_eig_topk, EigOrder};
use crate::tensor::{Matrix, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmaConfig {
    pub eps_stop: f64,
    pub max_iter: usize,
    pub rank_tol: f64,
    pub record_trace: bool,
}

impl Default for AlmaConfig {
    fn default() -> Self {
        Self {
            eps_stop: 1e-4,
            max_iter: 100,
            rank_tol: crate::linalg::RANK_TOL,
            record_trace: false,
        }
    }
}

impl AlmaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eps_stop > 0.0) || self.max_iter == 0 {
            return Err(Error::Contract("eps_stop must be positive and max_iter >= 1".into()));
        }
        Ok(())
    }
}

/// Diagnostics for one pass, filled only when `record_trace` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Objective at `(Q_t, W_{t-1})`.
    pub objective_after_q: f64,
    /// Objective at `(Q_t, W_t)`.
    pub objective_after_w: f64,
    pub w_change: f64,
    /// `||W_tᵀ W_t - I||_F`.
    pub orthogonality_defect: f64,
    /// Largest `|lambda_{K_m+1}| / |lambda_1|` over the slices of `Q_t`.
    pub rank_tail: f64,
}

#[derive(Debug, Clone)]
pub struct FactorPair {
    pub w: Matrix,
    pub q: Tensor3,
    /// Objective after each full pass (empty unless traced).
    pub objective_trace: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub iters_used: usize,
    pub converged: bool,
}

fn check_orthonormal(w: &Matrix, tol: f64) -> Result<()> {
    let defect = orthogonality_defect(w);
    if !(defect <= tol) {
        return Err(Error::Contract(format!("loading is not orthonormal (defect {defect:.3e})")));
    }
    Ok(())
}

/// `||A - Q ×₁ W||_F`.
pub fn objective(a: &Tensor3, q: &Tensor3, w: &Matrix) -> Result<f64> {
    let fitted = q.mode1_product(w)?;
    Ok(a.sub(&fitted)?.frobenius_norm())
}

/// Best group tensor for a fixed loading: `Π_K(A ×₁ Wᵀ)`.
pub fn q_update(a: &Tensor3, w: &Matrix, ranks: &[usize]) -> Result<Tensor3> {
    check_orthonormal(w, 1e-8)?;
    if w.ncols() != ranks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ranks for {} loading columns",
            ranks.len(),
            w.ncols()
        )));
    }
    let mut q = a.mode1_product(&w.transpose())?;
    for (m, &k) in ranks.iter().enumerate() {
        let slice = symmetrize(&q.slice(m).into_owned());
        let projected = rank_project(&slice, k)?.matrix;
        q.slice_mut(m).copy_from(&projected);
    }
    Ok(q)
}

/// Best loading for a fixed group tensor: `Π_o(A ×₂,₃ Q)`.
pub fn w_update(a: &Tensor3, q: &Tensor3) -> Result<Matrix> {
    w_update_with_tol(a, q, crate::linalg::RANK_TOL)
}

pub fn w_update_with_tol(a: &Tensor3, q: &Tensor3, rank_tol: f64) -> Result<Matrix> {
    if !q.data().iter().all(|v| v.is_finite()) {
        return Err(Error::Contract("non-finite group tensor".into()));
    }
    polar_project_with_tol(&a.mode23_product(q)?, rank_tol)
}

fn rank_tail(q: &Tensor3, ranks: &[usize]) -> Result<f64> {
    let n = q.dims()[1];
    let mut worst: f64 = 0.0;
    for (m, &k) in ranks.iter().enumerate() {
        if k >= n {
            continue;
        }
        let slice = symmetrize(&q.slice(m).into_owned());
        let eig = sym_eig_topk(&slice, k + 1, EigOrder::Magnitude)?;
        let lead = eig.values[0].abs();
        if lead > 0.0 {
            worst = worst.max(eig.values[k].abs() / lead);
        }
    }
    Ok(worst)
}

pub fn alma_fit(a: &Tensor3, ranks: &[usize], w_init: &Matrix, cfg: &AlmaConfig) -> Result<FactorPair> {
    cfg.validate()?;
    check_orthonormal(w_init, 1e-8)?;
    if w_init.nrows() != a.dims()[0] {
        return Err(Error::DimensionMismatch(format!(
            "loading has {} rows, tensor has {} layers",
            w_init.nrows(),
            a.dims()[0]
        )));
    }
    let mut w_prev = w_init.clone();
    let mut objective_trace = Vec::new();
    let mut iterations = Vec::new();
    for t in 1..=cfg.max_iter {
        let q = q_update(a, &w_prev, ranks)?;
        if !q.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteObjective(t));
        }
        let w = match w_update_with_tol(a, &q, cfg.rank_tol) {
            Ok(w) => w,
            Err(Error::RankDeficient { sigma_min, .. }) => {
                return Err(Error::DegenerateIterate { iteration: t, sigma_min })
            }
            Err(e) => return Err(e),
        };
        let change = (&w - &w_prev).norm();
        if !change.is_finite() {
            return Err(Error::NonFiniteObjective(t));
        }
        if cfg.record_trace {
            let after_q = objective(a, &q, &w_prev)?;
            let after_w = objective(a, &q, &w)?;
            if !after_q.is_finite() || !after_w.is_finite() {
                return Err(Error::NonFiniteObjective(t));
            }
            objective_trace.push(after_w);
            iterations.push(IterationRecord {
                objective_after_q: after_q,
                objective_after_w: after_w,
                w_change: change,
                orthogonality_defect: orthogonality_defect(&w),
                rank_tail: rank_tail(&q, ranks)?,
            });
        }
        let done = change <= cfg.eps_stop;
        if done || t == cfg.max_iter {
            return Ok(FactorPair {
                w: w_prev,
                q,
                objective_trace,
                iterations,
                iters_used: t,
                converged: done,
            });
        }
        w_prev = w;
    }
    unreachable!("max_iter >= 1")
}
