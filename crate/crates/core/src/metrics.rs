//! Misclassification rates minimized over label permutations.

use pathfinding::kuhn_munkres::kuhn_munkres;

use crate::error::{Error, Result};

/// Largest label count searched exhaustively.
pub const EXHAUSTIVE_MAX_K: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationError {
    pub rate: f64,
    /// `perm[t]` is the estimated label matched to true label `t`.
    pub perm: Vec<usize>,
}

/// `K x K` confusion counts, `c[t][e]` = items with truth `t` and estimate `e`.
/// `K` grows to cover every label that occurs, so partitions with fewer
/// nonempty groups are padded with zero rows/columns.
fn confusion(truth: &[usize], est: &[usize], k: usize) -> Result<Vec<Vec<i64>>> {
    if truth.len() != est.len() {
        return Err(Error::DimensionMismatch(format!(
            "truth has {} labels, estimate has {}",
            truth.len(),
            est.len()
        )));
    }
    let k = truth
        .iter()
        .chain(est)
        .map(|&c| c + 1)
        .max()
        .unwrap_or(0)
        .max(k)
        .max(1);
    let mut c = vec![vec![0i64; k]; k];
    for (&t, &e) in truth.iter().zip(est) {
        c[t][e] += 1;
    }
    Ok(c)
}

fn finish(n: usize, matched: i64, perm: Vec<usize>) -> PermutationError {
    let rate = if n == 0 { 0.0 } else { (n as i64 - matched) as f64 / n as f64 };
    PermutationError { rate, perm }
}

/// Exhaustive search over all bijections (Heap's algorithm).
pub fn exhaustive_permutation_error(truth: &[usize], est: &[usize], k: usize) -> Result<PermutationError> {
    let c = confusion(truth, est, k)?;
    let k = c.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let score = |p: &[usize]| (0..k).map(|t| c[t][p[t]]).sum::<i64>();
    let mut best = (score(&perm), perm.clone());
    let mut stack = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            let s = score(&perm);
            if s > best.0 {
                best = (s, perm.clone());
            }
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    Ok(finish(truth.len(), best.0, best.1))
}

/// Optimal assignment on the confusion matrix.
pub fn hungarian_permutation_error(truth: &[usize], est: &[usize], k: usize) -> Result<PermutationError> {
    let c = confusion(truth, est, k)?;
    let weights = pathfinding::matrix::Matrix::from_rows(c).expect("square confusion matrix");
    let (matched, perm) = kuhn_munkres(&weights);
    Ok(finish(truth.len(), matched, perm))
}

/// Fraction of items misplaced under the best relabeling of `est`.
pub fn best_permutation_error(truth: &[usize], est: &[usize], k: usize) -> Result<PermutationError> {
    let span = truth.iter().chain(est).map(|&c| c + 1).max().unwrap_or(0).max(k);
    if span <= EXHAUSTIVE_MAX_K {
        exhaustive_permutation_error(truth, est, k)
    } else {
        hungarian_permutation_error(truth, est, k)
    }
}

pub fn between_layer_error(truth_z: &[usize], est_z: &[usize], groups: usize) -> Result<f64> {
    Ok(best_permutation_error(truth_z, est_z, groups)?.rate)
}

pub fn within_layer_error(truth: &[usize], est: &[usize], k: usize) -> Result<f64> {
    Ok(best_permutation_error(truth, est, k)?.rate)
}

pub fn avg_within_error(per_group: &[f64]) -> Result<f64> {
    if per_group.is_empty() {
        return Err(Error::Contract("no groups to average".into()));
    }
    Ok(per_group.iter().sum::<f64>() / per_group.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn permutation_examples() {
        let t = [0, 0, 1, 1];
        let same = best_permutation_error(&t, &t, 2).unwrap();
        assert_eq!(same.rate, 0.0);
        assert_eq!(same.perm, vec![0, 1]);
        let swapped = best_permutation_error(&t, &[1, 1, 0, 0], 2).unwrap();
        assert_eq!(swapped.rate, 0.0);
        assert_eq!(swapped.perm, vec![1, 0]);
        assert_eq!(best_permutation_error(&t, &[0, 1, 0, 1], 2).unwrap().rate, 0.5);
        assert!(best_permutation_error(&t, &[0, 1], 2).is_err());
    }

    #[test]
    fn between_layer_examples() {
        let truth: Vec<usize> = (0..39).map(|l| l % 3).collect();
        assert_eq!(between_layer_error(&truth, &truth, 3).unwrap(), 0.0);
        let lumped = vec![0; 39];
        assert!((between_layer_error(&truth, &lumped, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn random_labels_average_two_thirds() {
        // Monte Carlo: for large L the best-permutation error of random labels
        // concentrates near 1 - 1/M.
        let mut rng = crate::rng::substream(1, &[0]);
        let truth: Vec<usize> = (0..3000).map(|l| l % 3).collect();
        let mut acc = 0.0;
        for _ in 0..20 {
            let est: Vec<usize> = (0..3000).map(|_| rng.random_range(0..3)).collect();
            acc += between_layer_error(&truth, &est, 3).unwrap();
        }
        assert!((acc / 20.0 - 2.0 / 3.0).abs() < 0.02);

        // node level mirror
        let truth: Vec<usize> = (0..100).map(|i| i % 4).collect();
        assert_eq!(within_layer_error(&truth, &truth, 4).unwrap(), 0.0);
        let shifted: Vec<usize> = truth.iter().map(|&c| (c + 1) % 4).collect();
        assert_eq!(within_layer_error(&truth, &shifted, 4).unwrap(), 0.0);
    }

    #[test]
    fn averages() {
        assert_eq!(avg_within_error(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((avg_within_error(&[0.1, 0.2, 0.3]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(avg_within_error(&[0.4]).unwrap(), 0.4);
        assert!(avg_within_error(&[]).is_err());
    }

    #[test]
    fn padding_for_missing_groups() {
        let truth = [0, 1, 2, 2];
        let est = [0, 0, 0, 0];
        assert_eq!(best_permutation_error(&truth, &est, 3).unwrap().rate, 0.5);
    }

    #[test]
    fn large_k_uses_assignment() {
        let truth: Vec<usize> = (0..80).map(|i| i % 8).collect();
        let est: Vec<usize> = truth.iter().map(|&c| (c + 3) % 8).collect();
        let r = best_permutation_error(&truth, &est, 8).unwrap();
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.perm[0], 3);
    }

    proptest! {
        #[test]
        fn rate_bounds_and_relabel_invariance(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40),
            shift in 0usize..4,
        ) {
            let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let est: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let r = best_permutation_error(&truth, &est, 4).unwrap().rate;
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert_eq!(best_permutation_error(&truth, &truth, 4).unwrap().rate, 0.0);
            let est2: Vec<usize> = est.iter().map(|&c| (c + shift) % 4).collect();
            let truth2: Vec<usize> = truth.iter().map(|&c| (c + shift) % 4).collect();
            prop_assert_eq!(best_permutation_error(&truth, &est2, 4).unwrap().rate, r);
            prop_assert_eq!(best_permutation_error(&truth2, &est, 4).unwrap().rate, r);
            let h = hungarian_permutation_error(&truth, &est, 4).unwrap().rate;
            prop_assert_eq!(h, r);
        }
    }
}
