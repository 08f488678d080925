//! Parameter containers of the mixture multilayer block model and assembly of
//! the mean tensor `P*`, the scaled group tensor `Q*` and the loading `W*`.
//!
//! Labels are zero-based throughout: layer `l` belongs to group `z[l]` in
//! `0..M`, node `i` of group `m` belongs to community `memberships[m][i]` in
//! `0..K[m]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmlsbmInstance {
    pub n: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    #[serde(rename = "M")]
    pub groups: usize,
    #[serde(rename = "K")]
    pub ranks: Vec<usize>,
    pub z: Vec<usize>,
    pub memberships: Vec<Vec<usize>>,
    #[serde(rename = "B")]
    pub connectivity: Vec<Vec<Vec<f64>>>,
    pub p_max: f64,
}

impl MmlsbmInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPartition(msg));
        if self.n == 0 || self.layers == 0 || self.groups == 0 {
            return bad("n, L and M must be positive".into());
        }
        if self.ranks.len() != self.groups
            || self.memberships.len() != self.groups
            || self.connectivity.len() != self.groups
        {
            return bad(format!("expected {} entries in K, memberships and B", self.groups));
        }
        if self.z.len() != self.layers {
            return bad(format!("z has {} entries, expected {}", self.z.len(), self.layers));
        }
        check_labels(&self.z, self.groups, "layer group")?;
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(Error::Contract(format!("p_max = {} outside (0, 1]", self.p_max)));
        }
        for m in 0..self.groups {
            let k = self.ranks[m];
            if self.memberships[m].len() != self.n {
                return bad(format!("memberships[{m}] has wrong length"));
            }
            check_labels(&self.memberships[m], k, &format!("community of group {m}"))?;
            let b = &self.connectivity[m];
            if b.len() != k || b.iter().any(|row| row.len() != k) {
                return bad(format!("B[{m}] is not {k}x{k}"));
            }
            for i in 0..k {
                for j in 0..k {
                    let v = b[i][j];
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Contract(format!("B[{m}][{i}][{j}] = {v} outside [0,1]")));
                    }
                    if v != b[j][i] {
                        return Err(Error::Contract(format!("B[{m}] is not symmetric")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn connectivity_matrix(&self, m: usize) -> Matrix {
        let k = self.ranks[m];
        Matrix::from_fn(k, k, |i, j| self.connectivity[m][i][j])
    }

    /// `L_m`, the number of layers in each group.
    pub fn layer_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.groups];
        for &g in &self.z {
            counts[g] += 1;
        }
        counts
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }
}

fn check_labels(labels: &[usize], k: usize, what: &str) -> Result<()> {
    let mut counts = vec![0usize; k];
    for &c in labels {
        if c >= k {
            return Err(Error::InvalidPartition(format!("{what} label {c} >= {k}")));
        }
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidPartition(format!("{what} {empty} is empty")));
    }
    Ok(())
}

/// Connectivity with `p` on the diagonal and `q` elsewhere.
pub fn planted_connectivity(k: usize, p: f64, q: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { p } else { q }).collect())
        .collect()
}

/// Binary `n x K` membership matrix with one 1 per row.
pub fn build_membership_matrix(labels: &[usize], k: usize) -> Result<Matrix> {
    check_labels(labels, k, "class")?;
    let mut theta = Matrix::zeros(labels.len(), k);
    for (i, &c) in labels.iter().enumerate() {
        theta[(i, c)] = 1.0;
    }
    Ok(theta)
}

/// `Z (Z^T Z)^{-1/2}` for the clustering matrix `Z` of `labels`.
pub fn normalized_clustering_matrix(labels: &[usize], groups: usize) -> Result<Matrix> {
    check_labels(labels, groups, "group")?;
    let mut counts = vec![0usize; groups];
    for &g in labels {
        counts[g] += 1;
    }
    let mut w = Matrix::zeros(labels.len(), groups);
    for (l, &g) in labels.iter().enumerate() {
        w[(l, g)] = 1.0 / (counts[g] as f64).sqrt();
    }
    Ok(w)
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Edge probabilities, zero diagonal (`L x n x n`).
    pub p_star: Tensor3,
    /// `sqrt(L_m) * Theta_m B_m Theta_m^T` with zero diagonal (`M x n x n`).
    pub q_star: Tensor3,
    /// Same as `q_star` before the diagonal is zeroed; exactly rank `K_m`
    /// per slice when `B_m` is nonsingular.
    pub q_star_lowrank: Tensor3,
    pub w_star: Matrix,
    pub layer_counts: Vec<usize>,
}

pub fn assemble_ground_truth(inst: &MmlsbmInstance) -> Result<GroundTruth> {
    inst.validate()?;
    let n = inst.n;
    let counts = inst.layer_counts();
    let mut lowrank = Vec::with_capacity(inst.groups);
    let mut zero_diag = Vec::with_capacity(inst.groups);
    for m in 0..inst.groups {
        let theta = build_membership_matrix(&inst.memberships[m], inst.ranks[m])?;
        let block = &theta * inst.connectivity_matrix(m) * theta.transpose();
        let scaled = block * (counts[m] as f64).sqrt();
        let mut zd = scaled.clone();
        zd.fill_diagonal(0.0);
        lowrank.push(scaled);
        zero_diag.push(zd);
    }
    let q_star_lowrank = Tensor3::from_slices(&lowrank)?;
    let q_star = Tensor3::from_slices(&zero_diag)?;
    let w_star = normalized_clustering_matrix(&inst.z, inst.groups)?;

    let mut p_star = Tensor3::zeros(inst.layers, n, n);
    for (l, &m) in inst.z.iter().enumerate() {
        let s = &zero_diag[m] / (counts[m] as f64).sqrt();
        p_star.slice_mut(l).copy_from(&s);
    }
    Ok(GroundTruth {
        p_star,
        q_star,
        q_star_lowrank,
        w_star,
        layer_counts: counts,
    })
}
