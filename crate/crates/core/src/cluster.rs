//! k-means (k-means++ seeding, Lloyd iterations, best of several restarts)
//! and the two post-processing clusterers: layers from the rows of the
//! estimated loading matrix, nodes from the leading eigenvectors of an
//! estimated group slice.
//!
//! Restarts stand in for an approximation-certified k-means solver; they do
//! not carry a formal `(1 + eps)` guarantee.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig_topk, EigOrder};
use crate::rng::substream;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_lloyd_iter: usize,
    pub tol: f64,
}

impl KmeansConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            restarts: 20,
            max_lloyd_iter: 100,
            tol: 1e-9,
        }
    }

    pub fn with_k(self, k: usize) -> Self {
        Self { k, ..self }
    }
}

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    /// `k x dim`, one center per row.
    pub centers: Matrix,
    pub objective: f64,
}

impl KmeansResult {
    pub fn empty_clusters(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.centers.nrows()];
        self.labels.iter().for_each(|&c| counts[c] += 1);
        (0..counts.len()).filter(|&c| counts[c] == 0).collect()
    }
}

fn sq_dist(points: &Matrix, i: usize, centers: &Matrix, c: usize) -> f64 {
    (0..points.ncols())
        .map(|d| {
            let diff = points[(i, d)] - centers[(c, d)];
            diff * diff
        })
        .sum()
}

fn assign(points: &Matrix, centers: &Matrix) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(points.nrows());
    let mut dists = Vec::with_capacity(points.nrows());
    for i in 0..points.nrows() {
        let mut best = (0, f64::INFINITY);
        for c in 0..centers.nrows() {
            let d = sq_dist(points, i, centers, c);
            if d < best.1 {
                best = (c, d);
            }
        }
        labels.push(best.0);
        dists.push(best.1);
    }
    (labels, dists)
}

fn plus_plus_seed(points: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let rows = points.nrows();
    let mut centers = Matrix::zeros(k, points.ncols());
    let first = rng.random_range(0..rows);
    centers.row_mut(0).copy_from(&points.row(first));
    let mut d2: Vec<f64> = (0..rows).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = rows - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..rows)
        };
        centers.row_mut(c).copy_from(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, c));
        }
    }
    centers
}

/// Lloyd iterations from the given centers. Returns the objective after
/// every assignment step alongside the final state.
pub(crate) fn lloyd(
    points: &Matrix,
    mut centers: Matrix,
    cfg: &KmeansConfig,
) -> (KmeansResult, Vec<f64>) {
    let k = centers.nrows();
    let dim = points.ncols();
    let (mut labels, mut dists) = assign(points, &centers);
    let mut objective: f64 = dists.iter().sum();
    let mut history = vec![objective];
    for _ in 0..cfg.max_lloyd_iter {
        // Re-seed empty clusters from the points farthest from their centers.
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&c| counts[c] += 1);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..labels.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                if dists[i] > 0.0 {
                    counts[labels[i]] -= 1;
                    counts[c] = 1;
                    labels[i] = c;
                    dists[i] = 0.0;
                    centers.row_mut(c).copy_from(&points.row(i));
                }
            }
        }
        let mut sums = Matrix::zeros(k, dim);
        for (i, &c) in labels.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += points.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c) / counts[c] as f64;
                centers.row_mut(c).copy_from(&mean);
            }
        }
        let (next_labels, next_dists) = assign(points, &centers);
        let next_objective: f64 = next_dists.iter().sum();
        history.push(next_objective);
        let stalled = next_labels == labels
            || objective - next_objective <= cfg.tol * objective.max(f64::MIN_POSITIVE);
        labels = next_labels;
        dists = next_dists;
        objective = next_objective;
        if stalled {
            break;
        }
    }
    (
        KmeansResult {
            labels,
            centers,
            objective,
        },
        history,
    )
}

/// Best-of-restarts k-means on the rows of `points`.
///
/// One `u64` is drawn from `rng`; restart `r` runs on the substream
/// `(that seed, r)`, so the result does not depend on how restarts are
/// scheduled. Ties go to the lowest restart index.
pub fn kmeans(points: &Matrix, cfg: &KmeansConfig, rng: &mut impl Rng) -> Result<KmeansResult> {
    if cfg.k == 0 || cfg.restarts == 0 {
        return Err(Error::Contract("k-means needs k >= 1 and restarts >= 1".into()));
    }
    if points.nrows() < cfg.k {
        return Err(Error::Contract(format!(
            "k-means with k = {} on {} points",
            cfg.k,
            points.nrows()
        )));
    }
    let seed: u64 = rng.random();
    let mut best: Option<KmeansResult> = None;
    for r in 0..cfg.restarts {
        let mut stream = substream(seed, &[r as u64]);
        let init = plus_plus_seed(points, cfg.k, &mut stream);
        let (res, _) = lloyd(points, init, cfg);
        if best.as_ref().is_none_or(|b| res.objective < b.objective) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Layer partition from the rows of an estimated `L x M` loading matrix.
pub fn between_layer_labels(w_hat: &Matrix, cfg: &KmeansConfig, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if cfg.k != w_hat.ncols() {
        return Err(Error::Contract(format!(
            "k = {} but the loading has {} columns",
            cfg.k,
            w_hat.ncols()
        )));
    }
    Ok(kmeans(w_hat, cfg, rng)?.labels)
}

/// Spectral clustering of one symmetric slice into `k` communities.
pub fn within_layer_labels(
    slice: &Matrix,
    k: usize,
    cfg: &KmeansConfig,
    order: EigOrder,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if k == 1 {
        return Ok(vec![0; slice.nrows()]);
    }
    let vectors = sym_eig_topk(slice, k, order)?.vectors;
    Ok(kmeans(&vectors, &cfg.with_k(k), rng)?.labels)
}
