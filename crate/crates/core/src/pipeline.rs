//! End-to-end estimation: initialize, fit, post-cluster, and score against a
//! known instance.

use pathfinding::kuhn_munkres::kuhn_munkres;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alma::{alma_fit, AlmaConfig, FactorPair};
use crate::cluster::{between_layer_labels, within_layer_labels, KmeansConfig};
use crate::error::{Error, Result};
use crate::init::spectral_init;
use crate::linalg::EigOrder;
use crate::metrics::{avg_within_error, best_permutation_error, within_layer_error};
use crate::model::MmlsbmInstance;
use crate::tensor::{Matrix, Tensor3};

/// Layer partition plus, for every estimated layer group, a node partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub layer_labels: Vec<usize>,
    /// Indexed by estimated layer group.
    pub community_labels: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringErrors {
    pub between_layer: f64,
    /// Per true layer group, against the matched estimated group.
    pub within_layer: Vec<f64>,
    pub within_layer_avg: f64,
}

impl ClusteringResult {
    pub fn evaluate(&self, truth: &MmlsbmInstance) -> Result<ClusteringErrors> {
        let matched = best_permutation_error(&truth.z, &self.layer_labels, truth.groups)?;
        let within_layer = (0..truth.groups)
            .map(|m| {
                let est_group = matched.perm[m];
                match self.community_labels.get(est_group) {
                    Some(est) => within_layer_error(&truth.memberships[m], est, truth.ranks[m]),
                    // Matched to an unused label: every node counts as wrong
                    // except the largest true community.
                    None => within_layer_error(&truth.memberships[m], &vec![0; truth.n], truth.ranks[m]),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClusteringErrors {
            between_layer: matched.rate,
            within_layer_avg: avg_within_error(&within_layer)?,
            within_layer,
        })
    }
}

/// Matches estimated layer clusters to loading columns by the squared mass
/// each cluster's rows put on each column.
fn match_clusters_to_columns(w_hat: &Matrix, labels: &[usize]) -> Vec<usize> {
    let m = w_hat.ncols();
    let mut mass = vec![vec![0.0f64; m]; m];
    for (l, &c) in labels.iter().enumerate() {
        for col in 0..m {
            mass[c][col] += w_hat[(l, col)] * w_hat[(l, col)];
        }
    }
    let weights = pathfinding::matrix::Matrix::from_rows(
        mass.iter()
            .map(|row| row.iter().map(|&v| (v * 1e12).round() as i64).collect::<Vec<_>>()),
    )
    .expect("square mass matrix");
    kuhn_munkres(&weights).1
}

/// Post-clustering of a fitted factor pair: k-means on the rows of `Ŵ`, then
/// spectral clustering of the `Q̂` slice matched to each layer cluster.
pub fn alma_postprocess(
    fit: &FactorPair,
    ranks: &[usize],
    kmeans_cfg: &KmeansConfig,
    rng: &mut impl Rng,
) -> Result<ClusteringResult> {
    let groups = fit.w.ncols();
    let layer_labels = between_layer_labels(&fit.w, &kmeans_cfg.with_k(groups), rng)?;
    let columns = match_clusters_to_columns(&fit.w, &layer_labels);
    let community_labels = columns
        .iter()
        .map(|&col| {
            let slice = fit.q.slice(col).into_owned();
            within_layer_labels(&slice, ranks[col], kmeans_cfg, EigOrder::Magnitude, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusteringResult {
        layer_labels,
        community_labels,
    })
}

#[derive(Debug, Clone)]
pub struct AlmaRun {
    pub init_labels: Vec<usize>,
    pub fit: FactorPair,
    pub clustering: ClusteringResult,
}

/// Spectral initialization, alternating fit and post-clustering.
pub fn run_alma(
    a: &Tensor3,
    ranks: &[usize],
    alma_cfg: &AlmaConfig,
    kmeans_cfg: &KmeansConfig,
    rng: &mut impl Rng,
) -> Result<AlmaRun> {
    if ranks.is_empty() {
        return Err(Error::Contract("at least one layer group".into()));
    }
    let init = spectral_init(a, ranks.len(), kmeans_cfg, rng)?;
    let fit = alma_fit(a, ranks, &init.w, alma_cfg)?;
    let clustering = alma_postprocess(&fit, ranks, kmeans_cfg, rng)?;
    Ok(AlmaRun {
        init_labels: init.labels,
        fit,
        clustering,
    })
}
