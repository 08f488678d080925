//! Spectral initialization of the loading matrix.
//!
//! The top-`M` left singular vectors of the layer-rows unfolding of `A`
//! (`L x n²`) are clustered with k-means, and the resulting hard partition is
//! turned into `Z (ZᵀZ)^{-1/2}`.

use rand::Rng;

use crate::cluster::{kmeans, KmeansConfig};
use crate::error::{Error, Result};
use crate::linalg::{svd_top_left, sym_eig_topk, symmetrize, EigOrder};
use crate::model::normalized_clustering_matrix;
use crate::tensor::{Matrix, Tensor3};

#[derive(Debug, Clone)]
pub struct SpectralInit {
    /// Top-`M` left singular vectors of the unfolding.
    pub singular_vectors: Matrix,
    pub labels: Vec<usize>,
    /// Normalized clustering matrix built from `labels`.
    pub w: Matrix,
}

/// `W(l, m) = 1/sqrt(|group m|)` when `labels[l] == m`, zero otherwise.
pub fn clustering_to_w(labels: &[usize], groups: usize) -> Result<Matrix> {
    normalized_clustering_matrix(labels, groups)
}

/// Leading left singular subspace of the layer unfolding. Uses the `L x L`
/// Gram matrix `A ×₂,₃ A` when `n² > L`.
pub fn layer_subspace(a: &Tensor3, groups: usize) -> Result<Matrix> {
    let [layers, n, _] = a.dims();
    if groups == 0 || groups > layers {
        return Err(Error::Contract(format!("M = {groups} outside 1..={layers}")));
    }
    if n * n > layers {
        let gram = symmetrize(&a.mode23_product(a)?);
        Ok(sym_eig_topk(&gram, groups, EigOrder::Value)?.vectors)
    } else {
        svd_top_left(&a.mode1_matricize(), groups)
    }
}

pub fn spectral_init(
    a: &Tensor3,
    groups: usize,
    kmeans_cfg: &KmeansConfig,
    rng: &mut impl Rng,
) -> Result<SpectralInit> {
    let singular_vectors = layer_subspace(a, groups)?;
    let labels = if groups == 1 {
        vec![0; a.dims()[0]]
    } else {
        let res = kmeans(&singular_vectors, &kmeans_cfg.with_k(groups), rng)?;
        if let Some(&empty) = res.empty_clusters().first() {
            return Err(Error::EmptyCluster(empty));
        }
        res.labels
    };
    let w = clustering_to_w(&labels, groups)?;
    Ok(SpectralInit {
        singular_vectors,
        labels,
        w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonality_defect;
    use crate::metrics::best_permutation_error;
    use crate::model::assemble_ground_truth;
    use crate::rng::substream;
    use crate::synthgen::sample_instance;

    #[test]
    fn clustering_to_w_examples() {
        let w = clustering_to_w(&[0, 0, 1], 2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(w, Matrix::from_row_slice(3, 2, &[s, 0.0, s, 0.0, 0.0, 1.0]));
        let ones = clustering_to_w(&[0; 4], 1).unwrap();
        assert!(ones.iter().all(|&v| v == 0.5));
        assert!((w.tr_mul(&w) - Matrix::identity(2, 2)).amax() <= 1e-15);
        assert!(matches!(clustering_to_w(&[0, 0], 2), Err(Error::InvalidPartition(_))));
    }

    #[test]
    fn single_group_gives_uniform_loading() {
        let a = Tensor3::from_fn([5, 4, 4], |l, i, j| ((l + i * j) % 2) as f64);
        let init = spectral_init(&a, 1, &KmeansConfig::new(1), &mut substream(1, &[0])).unwrap();
        assert!(init.w.iter().all(|&v| (v - 1.0 / 5f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn noiseless_recovery() {
        for (seed, m) in (0..20).zip([2usize, 3].into_iter().cycle()) {
            let mut rng = substream(100 + seed, &[0]);
            let inst = sample_instance(60, 30, m, 2, 0.8, 0.5, &mut rng).unwrap();
            let gt = assemble_ground_truth(&inst).unwrap();
            let init = spectral_init(&gt.p_star, m, &KmeansConfig::new(m), &mut rng).unwrap();
            assert_eq!(best_permutation_error(&inst.z, &init.labels, m).unwrap().rate, 0.0);
            assert!(orthogonality_defect(&init.w) <= 1e-14);
            // equal to W* up to a column permutation
            let perm = best_permutation_error(&inst.z, &init.labels, m).unwrap().perm;
            assert_eq!(init.w.select_columns(&perm), gt.w_star);
        }
    }

    #[test]
    fn tall_unfolding_path_matches_gram_path() {
        // n² <= L uses the direct SVD.
        let mut rng = substream(7, &[0]);
        let a = Tensor3::from_fn([20, 2, 2], |_, _, _| rand::Rng::random_range(&mut rng, 0.0..1.0));
        let direct = layer_subspace(&a, 2).unwrap();
        let gram = sym_eig_topk(&symmetrize(&a.mode23_product(&a).unwrap()), 2, EigOrder::Value)
            .unwrap()
            .vectors;
        let proj = |u: &Matrix| u * u.transpose();
        assert!((proj(&direct) - proj(&gram)).amax() <= 1e-8);
    }

    #[test]
    fn rejects_too_many_groups() {
        let a = Tensor3::zeros(2, 3, 3);
        assert!(spectral_init(&a, 3, &KmeansConfig::new(3), &mut substream(0, &[0])).is_err());
    }
}
