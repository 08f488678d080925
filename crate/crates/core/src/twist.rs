//! Regularized Tucker power iteration used as a comparison method.
//!
//! Each sweep clips the rows of the current node and layer factors, then
//! refreshes both factors from singular subspaces of `A` contracted with the
//! clipped ones.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{between_layer_labels, within_layer_labels, KmeansConfig};
use crate::error::{Error, Result};
use crate::init::spectral_init;
use crate::linalg::{svd_top_left, sym_eig_topk, symmetrize, EigOrder};
use crate::pipeline::ClusteringResult;
use crate::tensor::{Matrix, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delta {
    /// Twice the mean row norm of the iterate being clipped.
    Auto,
    Fixed(f64),
}

impl Delta {
    fn resolve(self, v: &Matrix) -> f64 {
        match self {
            Delta::Fixed(d) => d,
            Delta::Auto => {
                let total: f64 = v.row_iter().map(|r| r.norm()).sum();
                2.0 * total / v.nrows().max(1) as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistConfig {
    pub groups: usize,
    /// Node-factor rank.
    pub r: usize,
    pub delta1: Delta,
    pub delta2: Delta,
    pub iter_max: usize,
    /// Stop early once `||W Wᵀ - W_prev W_prevᵀ||_F` drops to this.
    pub eps_stop: Option<f64>,
}

impl TwistConfig {
    pub fn new(groups: usize, r: usize) -> Self {
        Self {
            groups,
            r,
            delta1: Delta::Auto,
            delta2: Delta::Auto,
            iter_max: 50,
            eps_stop: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwistFit {
    pub u: Matrix,
    pub w: Matrix,
    pub iters_used: usize,
    pub converged: bool,
}

/// Clips every row to norm at most `delta`, then keeps the top-`s` left
/// singular vectors.
pub fn regularize_rows(v: &Matrix, delta: f64, s: usize) -> Result<Matrix> {
    if !(delta > 0.0) {
        return Err(Error::Contract(format!("delta = {delta} must be positive")));
    }
    let mut clipped = v.clone();
    for mut row in clipped.row_iter_mut() {
        let norm = row.norm();
        if norm > delta {
            row *= delta / norm;
        }
    }
    svd_top_left(&clipped, s)
}

/// Top-`r` eigenvectors (by magnitude) of the layer-summed adjacency.
pub fn twist_init_u(a: &Tensor3, r: usize) -> Result<Matrix> {
    Ok(sym_eig_topk(&symmetrize(&a.sum_slices()), r, EigOrder::Magnitude)?.vectors)
}

fn projector(w: &Matrix) -> Matrix {
    w * w.transpose()
}

pub fn twist_fit(a: &Tensor3, cfg: &TwistConfig, u_init: &Matrix, w_init: &Matrix) -> Result<TwistFit> {
    let [layers, n, _] = a.dims();
    let (m, r) = (cfg.groups, cfg.r);
    if r < m {
        return Err(Error::Contract(format!("r = {r} must be at least M = {m}")));
    }
    if u_init.shape() != (n, r) || w_init.shape() != (layers, m) {
        return Err(Error::DimensionMismatch(format!(
            "inits {:?} and {:?}, expected ({n}, {r}) and ({layers}, {m})",
            u_init.shape(),
            w_init.shape()
        )));
    }
    let mut u = u_init.clone();
    let mut w = w_init.clone();
    let mut ut = regularize_rows(&u, cfg.delta1.resolve(&u), r)?;
    let mut wt = regularize_rows(&w, cfg.delta2.resolve(&w), m)?;
    if cfg.iter_max == 0 {
        return Ok(TwistFit {
            u: ut,
            w: wt,
            iters_used: 0,
            converged: false,
        });
    }
    let mut converged = false;
    let mut iters_used = 0;
    for _ in 0..cfg.iter_max {
        iters_used += 1;
        // node mode: [T_1 Ũ, ..., T_M Ũ] with T_k = sum_l W̃(l,k) A_l
        let t = a.mode1_product(&wt.transpose())?;
        let mut node = Matrix::zeros(n, m * r);
        for k in 0..m {
            node.columns_mut(k * r, r).copy_from(&(t.slice(k) * &ut));
        }
        let u_next = svd_top_left(&node, r)?;
        // layer mode: rows vec(Ũᵀ A_l Ũ)
        let mut layer = Matrix::zeros(layers, r * r);
        for l in 0..layers {
            let core = ut.tr_mul(&(a.slice(l) * &ut));
            for (c, v) in core.iter().enumerate() {
                layer[(l, c)] = *v;
            }
        }
        let w_next = svd_top_left(&layer, m)?;
        let change = (projector(&w_next) - projector(&w)).norm();
        u = u_next;
        w = w_next;
        if cfg.eps_stop.is_some_and(|eps| change <= eps) {
            converged = true;
            break;
        }
        ut = regularize_rows(&u, cfg.delta1.resolve(&u), r)?;
        wt = regularize_rows(&w, cfg.delta2.resolve(&w), m)?;
    }
    Ok(TwistFit {
        u,
        w,
        iters_used,
        converged: converged || cfg.eps_stop.is_none(),
    })
}

/// Layer groups from k-means on the rows of `Ŵ`; communities from the mean
/// adjacency of each estimated group.
pub fn twist_postprocess(
    a: &Tensor3,
    w_hat: &Matrix,
    ranks: &[usize],
    kmeans_cfg: &KmeansConfig,
    rng: &mut impl Rng,
) -> Result<ClusteringResult> {
    let groups = w_hat.ncols();
    if ranks.len() != groups {
        return Err(Error::DimensionMismatch(format!(
            "{} ranks for {groups} groups",
            ranks.len()
        )));
    }
    let layer_labels = between_layer_labels(w_hat, &kmeans_cfg.with_k(groups), rng)?;
    let n = a.dims()[1];
    let mut community_labels = Vec::with_capacity(groups);
    for c in 0..groups {
        let members: Vec<usize> = (0..layer_labels.len()).filter(|&l| layer_labels[l] == c).collect();
        if members.is_empty() {
            return Err(Error::EmptyCluster(c));
        }
        let mut mean = Matrix::zeros(n, n);
        for &l in &members {
            mean += a.slice(l);
        }
        mean /= members.len() as f64;
        community_labels.push(within_layer_labels(&mean, ranks[c], kmeans_cfg, EigOrder::Magnitude, rng)?);
    }
    Ok(ClusteringResult {
        layer_labels,
        community_labels,
    })
}

#[derive(Debug, Clone)]
pub struct TwistRun {
    pub fit: TwistFit,
    pub clustering: ClusteringResult,
}

/// Same spectral layer initialization as the alternating estimator, node
/// factor from the summed adjacency.
pub fn run_twist(
    a: &Tensor3,
    ranks: &[usize],
    cfg: &TwistConfig,
    kmeans_cfg: &KmeansConfig,
    rng: &mut impl Rng,
) -> Result<TwistRun> {
    let init = spectral_init(a, cfg.groups, kmeans_cfg, rng)?;
    let u0 = twist_init_u(a, cfg.r)?;
    let fit = twist_fit(a, cfg, &u0, &init.w)?;
    let clustering = twist_postprocess(a, &fit.w, ranks, kmeans_cfg, rng)?;
    Ok(TwistRun { fit, clustering })
}
