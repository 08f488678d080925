//! Conditioning quantities computed from a known ground truth.
//!
//! Everything here works on the exactly low-rank slices
//! `sqrt(L_m) Theta_m B_m Theta_mᵀ` (diagonal kept), so the node subspaces
//! `U_m` are the spans of the membership matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, sym_eig_topk, EigOrder};
use crate::model::{build_membership_matrix, GroundTruth, MmlsbmInstance};
use crate::tensor::{Matrix, Tensor3};

/// Relative threshold for the rank checks behind the A1 conditions.
pub const A1_TOL: f64 = 1e-8;
/// Generators shorter than this fraction of `||Q||_F` are dropped.
pub const BASIS_DROP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaH {
    pub value: f64,
    /// `M(M-1)/2` skew directions before orthonormalization.
    pub generators: usize,
    /// Dimension kept after dropping dependent generators.
    pub basis_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionNumbers {
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Report {
    pub a1a: Vec<bool>,
    pub a1b: Vec<bool>,
    /// Per group: `sigma_{M-1}` of the stacked projected slices.
    pub min_singular_values: Vec<f64>,
    /// Per group: largest relative residual of a membership column outside
    /// the other groups' spans.
    pub residuals: Vec<f64>,
}

impl A1Report {
    pub fn holds(&self) -> bool {
        self.a1a.iter().all(|&b| b) || self.a1b.iter().all(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub kappa_h: KappaH,
    pub conditions: ConditionNumbers,
    pub beta_nl: f64,
    pub a1: A1Report,
}

/// `I - U Uᵀ` for the top-`k` eigenvectors (by magnitude) of a slice.
fn complement_projector(slice: &Matrix, k: usize) -> Result<Matrix> {
    let u = sym_eig_topk(slice, k, EigOrder::Magnitude)?.vectors;
    Ok(Matrix::identity(slice.nrows(), slice.nrows()) - &u * u.transpose())
}

fn complement_projectors(q: &Tensor3, ranks: &[usize]) -> Result<Vec<Matrix>> {
    if ranks.len() != q.dims()[0] {
        return Err(Error::DimensionMismatch(format!(
            "{} ranks for {} slices",
            ranks.len(),
            q.dims()[0]
        )));
    }
    ranks
        .iter()
        .enumerate()
        .map(|(m, &k)| complement_projector(&q.slice(m).into_owned(), k))
        .collect()
}

/// `X - Pperp X Pperp`, the part of `X` touching the slice's own subspace.
fn tangent_part(x: &Matrix, perp: &Matrix) -> Matrix {
    x - perp * x * perp
}

/// Norm of the composite projector `P_{L2} P_{L1}` at the truth, where `L1`
/// collects slice-wise tangent directions of the rank-`K_m` sets and `L2`
/// is spanned by the skew rotations `Q ×₁ E_ij`.
pub fn kappa_h(gt: &GroundTruth, ranks: &[usize]) -> Result<KappaH> {
    let q = &gt.q_star_lowrank;
    let [groups, n, _] = q.dims();
    let perps = complement_projectors(q, ranks)?;
    let generators = groups * groups.saturating_sub(1) / 2;
    let drop = BASIS_DROP_TOL * q.frobenius_norm();

    // Modified Gram-Schmidt over the flattened generators.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..groups {
        for j in i + 1..groups {
            let mut e = Matrix::zeros(groups, groups);
            e[(i, j)] = 1.0;
            e[(j, i)] = -1.0;
            let mut v = q.mode1_product(&e)?.into_data();
            for b in &basis {
                let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > drop {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
        }
    }
    if basis.is_empty() {
        return Ok(KappaH {
            value: 0.0,
            generators,
            basis_dim: 0,
        });
    }

    let projected: Vec<Tensor3> = basis
        .into_iter()
        .map(|v| {
            let t = Tensor3::from_vec([groups, n, n], v)?;
            let slices: Vec<Matrix> = (0..groups)
                .map(|m| tangent_part(&t.slice(m).into_owned(), &perps[m]))
                .collect();
            Tensor3::from_slices(&slices)
        })
        .collect::<Result<_>>()?;
    let d = projected.len();
    let gram = Matrix::from_fn(d, d, |a, b| {
        projected[a].data().iter().zip(projected[b].data()).map(|(x, y)| x * y).sum()
    });
    let top = sym_eig_topk(&gram, 1, EigOrder::Value)?.values[0];
    Ok(KappaH {
        value: top.max(0.0).sqrt(),
        generators,
        basis_dim: d,
    })
}

/// `kappa0 = sigma_1 / sigma_M` of `Q ×₂,₃ Q`; `kappa1 = p² n² L / ||Q||²`;
/// `kappa2 = sqrt(K_sum p L) n / min_m sigma_{K_m}(Q(m))`.
pub fn condition_numbers(gt: &GroundTruth, ranks: &[usize], p_max: f64) -> Result<ConditionNumbers> {
    let q = &gt.q_star_lowrank;
    let [groups, n, _] = q.dims();
    if ranks.len() != groups {
        return Err(Error::DimensionMismatch(format!("{} ranks for {groups} slices", ranks.len())));
    }
    let layers = gt.p_star.dims()[0] as f64;
    let gram_sv = singular_values(&q.mode23_product(q)?);
    let kappa0 = gram_sv[0] / gram_sv[groups - 1];

    let norm2 = q.frobenius_norm().powi(2);
    let nf = n as f64;
    let kappa1 = p_max * p_max * nf * nf * layers / norm2;

    let mut min_sigma = f64::INFINITY;
    for (m, &k) in ranks.iter().enumerate() {
        let slice = q.slice(m).into_owned();
        let sv = singular_values(&slice);
        let sigma = sv.get(k - 1).copied().unwrap_or(0.0);
        if sigma <= BASIS_DROP_TOL * sv[0].max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateSlice { slice: m, sigma });
        }
        min_sigma = min_sigma.min(sigma);
    }
    let k_sum: usize = ranks.iter().sum();
    let kappa2 = (k_sum as f64 * p_max * layers).sqrt() * nf / min_sigma;
    Ok(ConditionNumbers { kappa0, kappa1, kappa2 })
}

/// `ln²(n+L) sqrt(M³ kappa0⁵) (1/sqrt(p n²) + K_sum² / (p n min(n, L)))`.
pub fn beta_nl(n: usize, layers: usize, groups: usize, k_sum: usize, kappa0: f64, p_max: f64) -> f64 {
    let (nf, lf, mf, kf) = (n as f64, layers as f64, groups as f64, k_sum as f64);
    let log2 = (nf + lf).ln().powi(2);
    let lead = (mf.powi(3) * kappa0.powi(5)).sqrt();
    let tail = 1.0 / (p_max * nf * nf).sqrt() + kf * kf / (p_max * nf * nf.min(lf));
    log2 * lead * tail
}

/// Residual of `target`'s columns after projection onto the column span of
/// `others`, relative to each column's norm. Returns the largest one.
fn max_column_residual(target: &Matrix, others: &Matrix) -> f64 {
    let basis = if others.ncols() == 0 {
        Matrix::zeros(target.nrows(), 0)
    } else {
        let svd = others.clone().svd(true, false);
        let u = svd.u.expect("u requested");
        let s = &svd.singular_values;
        let smax = s.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > A1_TOL * smax).collect();
        u.select_columns(&keep)
    };
    target
        .column_iter()
        .map(|c| {
            let norm = c.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let r = &c - &basis * (basis.tr_mul(&c));
            r.norm() / norm
        })
        .fold(0.0, f64::max)
}

/// The two sufficient conditions for a trivial tangent-plane intersection.
pub fn check_a1(gt: &GroundTruth, inst: &MmlsbmInstance) -> Result<A1Report> {
    let q = &gt.q_star_lowrank;
    let groups = inst.groups;
    let n = inst.n;
    let perps = complement_projectors(q, &inst.ranks)?;
    let thetas: Vec<Matrix> = (0..groups)
        .map(|m| build_membership_matrix(&inst.memberships[m], inst.ranks[m]))
        .collect::<Result<_>>()?;

    let mut report = A1Report {
        a1a: Vec::with_capacity(groups),
        a1b: Vec::with_capacity(groups),
        min_singular_values: Vec::with_capacity(groups),
        residuals: Vec::with_capacity(groups),
    };
    for m in 0..groups {
        if groups == 1 {
            report.a1a.push(true);
            report.min_singular_values.push(f64::NAN);
        } else {
            let others: Vec<usize> = (0..groups).filter(|&o| o != m).collect();
            let mut stacked = Matrix::zeros(n * n, groups - 1);
            for (c, &o) in others.iter().enumerate() {
                let x = &perps[m] * q.slice(o) * &perps[m];
                stacked.column_mut(c).copy_from_slice(x.as_slice());
            }
            let sv = singular_values(&stacked);
            let last = sv[groups - 2];
            report.a1a.push(sv[0] > 0.0 && last > A1_TOL * sv[0]);
            report.min_singular_values.push(last);
        }

        let other_cols: Vec<Matrix> = (0..groups).filter(|&o| o != m).map(|o| thetas[o].clone()).collect();
        let width: usize = other_cols.iter().map(|t| t.ncols()).sum();
        let mut joined = Matrix::zeros(n, width);
        let mut at = 0;
        for t in &other_cols {
            joined.columns_mut(at, t.ncols()).copy_from(t);
            at += t.ncols();
        }
        let residual = max_column_residual(&thetas[m], &joined);
        report.a1b.push(residual > A1_TOL);
        report.residuals.push(residual);
    }
    Ok(report)
}

/// All diagnostics for one instance.
pub fn diagnose(gt: &GroundTruth, inst: &MmlsbmInstance) -> Result<DiagnosticsReport> {
    let conditions = condition_numbers(gt, &inst.ranks, inst.p_max)?;
    let k_sum = inst.ranks.iter().sum();
    Ok(DiagnosticsReport {
        kappa_h: kappa_h(gt, &inst.ranks)?,
        beta_nl: beta_nl(inst.n, inst.layers, inst.groups, k_sum, conditions.kappa0, inst.p_max),
        conditions,
        a1: check_a1(gt, inst)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assemble_ground_truth;
    use crate::rng::substream;
    use crate::synthgen::sample_instance;
    use nalgebra::SymmetricEigen;
    use rand::Rng;

    fn checker_board(n: usize) -> MmlsbmInstance {
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        MmlsbmInstance {
            n,
            layers: 6,
            groups: 2,
            ranks: vec![2, 2],
            z: vec![0, 1, 0, 1, 0, 1],
            memberships: vec![labels.clone(), labels],
            connectivity: vec![
                vec![vec![0.6, 0.1], vec![0.1, 0.5]],
                vec![vec![0.2, 0.5], vec![0.5, 0.3]],
            ],
            p_max: 0.6,
        }
    }

    fn random_two_group(rng: &mut impl Rng, n: usize) -> MmlsbmInstance {
        let draw = |rng: &mut dyn rand::RngCore, k: usize| -> Vec<usize> {
            let mut v: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            // make every community nonempty
            for c in 0..k {
                v[c] = c;
            }
            v
        };
        let b = |rng: &mut dyn rand::RngCore, k: usize| -> Vec<Vec<f64>> {
            let mut m = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in i..k {
                    let v = if i == j { rng.random_range(0.5..0.9) } else { rng.random_range(0.05..0.3) };
                    m[i][j] = v;
                    m[j][i] = v;
                }
            }
            m
        };
        MmlsbmInstance {
            n,
            layers: 8,
            groups: 2,
            ranks: vec![2, 3],
            z: vec![0, 1, 1, 0, 1, 0, 0, 1],
            memberships: vec![draw(rng, 2), draw(rng, 3)],
            connectivity: vec![b(rng, 2), b(rng, 3)],
            p_max: 0.9,
        }
    }

    /// Independent projector: eigenvectors sorted by |value| straight from
    /// the symmetric eigendecomposition.
    fn perp_oracle(x: &Matrix, k: usize) -> Matrix {
        let eig = SymmetricEigen::new(x.clone());
        let mut idx: Vec<usize> = (0..x.nrows()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
        let u = eig.eigenvectors.select_columns(&idx[..k]);
        Matrix::identity(x.nrows(), x.nrows()) - &u * u.transpose()
    }

    fn two_group_closed_form(gt: &GroundTruth, ranks: &[usize]) -> f64 {
        let q1 = gt.q_star_lowrank.slice(0).into_owned();
        let q2 = gt.q_star_lowrank.slice(1).into_owned();
        let p1 = perp_oracle(&q1, ranks[0]);
        let p2 = perp_oracle(&q2, ranks[1]);
        let num = (&q1 - &p2 * &q1 * &p2).norm_squared() + (&q2 - &p1 * &q2 * &p1).norm_squared();
        (num / (q1.norm_squared() + q2.norm_squared())).sqrt()
    }

    #[test]
    fn checker_board_is_degenerate() {
        let inst = checker_board(20);
        let gt = assemble_ground_truth(&inst).unwrap();
        let k = kappa_h(&gt, &inst.ranks).unwrap();
        assert!((k.value - 1.0).abs() <= 1e-8, "{}", k.value);
        let a1 = check_a1(&gt, &inst).unwrap();
        assert!(a1.a1b.iter().all(|&b| !b));
    }

    #[test]
    fn two_groups_match_closed_form() {
        let mut rng = substream(5, &[0]);
        for _ in 0..10 {
            let inst = random_two_group(&mut rng, 30);
            let gt = assemble_ground_truth(&inst).unwrap();
            let k = kappa_h(&gt, &inst.ranks).unwrap();
            let oracle = two_group_closed_form(&gt, &inst.ranks);
            assert!((k.value - oracle).abs() <= 1e-8, "{} vs {oracle}", k.value);
            assert_eq!(k.basis_dim, 1);
        }
    }

    #[test]
    fn single_group_has_no_skew_directions() {
        let mut rng = substream(6, &[0]);
        let inst = sample_instance(20, 5, 1, 2, 0.7, 0.5, &mut rng).unwrap();
        let gt = assemble_ground_truth(&inst).unwrap();
        let k = kappa_h(&gt, &inst.ranks).unwrap();
        assert_eq!((k.value, k.generators, k.basis_dim), (0.0, 0, 0));
        let a1 = check_a1(&gt, &inst).unwrap();
        assert_eq!(a1.a1a, vec![true]);
        assert_eq!(a1.a1b, vec![true]);
    }

    #[test]
    fn bounds_on_random_instances() {
        let mut rng = substream(7, &[0]);
        for t in 0..50 {
            let m = 2 + t % 3;
            let inst = sample_instance(20 + t % 7, 12, m, 2 + t % 2, 0.3 + 0.01 * t as f64, 0.6, &mut rng).unwrap();
            let gt = assemble_ground_truth(&inst).unwrap();
            let rep = diagnose(&gt, &inst).unwrap();
            let k = rep.kappa_h.value;
            assert!((-1e-9..=1.0 + 1e-9).contains(&k), "kappa_h {k}");
            let c = &rep.conditions;
            assert!(c.kappa0 >= 1.0 - 1e-9 && c.kappa1 >= 1.0 - 1e-9 && c.kappa2 >= 1.0 - 1e-9, "{c:?}");
            // Lemma 1: rank condition forces a trivial intersection
            if rep.a1.a1a.iter().all(|&b| b) {
                assert!(k < 1.0 - 1e-6, "kappa_h {k} with A1(a)");
            }
        }
    }

    #[test]
    fn random_memberships_satisfy_a1b() {
        let mut rng = substream(8, &[0]);
        let mut passed = 0;
        for _ in 0..10 {
            let inst = sample_instance(60, 12, 3, 3, 0.5, 0.5, &mut rng).unwrap();
            let gt = assemble_ground_truth(&inst).unwrap();
            if check_a1(&gt, &inst).unwrap().a1b.iter().all(|&b| b) {
                passed += 1;
            }
        }
        assert_eq!(passed, 10);
    }

    #[test]
    fn decorrelating_memberships_lowers_kappa_h() {
        let board = checker_board(30);
        let gt = assemble_ground_truth(&board).unwrap();
        let high = kappa_h(&gt, &board.ranks).unwrap().value;
        let mut apart = board.clone();
        apart.memberships[1] = (0..30).map(|i| usize::from(i >= 15)).collect();
        let gt = assemble_ground_truth(&apart).unwrap();
        let low = kappa_h(&gt, &apart.ranks).unwrap().value;
        assert!(low < high, "{low} vs {high}");
    }

    #[test]
    fn kappa1_single_block() {
        // one group, K = 1, B = [q]: every entry of the low-rank slice is
        // q sqrt(L), so ||Q||² = q² n² L.
        let inst = MmlsbmInstance {
            n: 10,
            layers: 4,
            groups: 1,
            ranks: vec![1],
            z: vec![0; 4],
            memberships: vec![vec![0; 10]],
            connectivity: vec![vec![vec![0.3]]],
            p_max: 0.6,
        };
        let gt = assemble_ground_truth(&inst).unwrap();
        let c = condition_numbers(&gt, &inst.ranks, inst.p_max).unwrap();
        assert!((c.kappa1 - (0.6f64 / 0.3).powi(2)).abs() <= 1e-12);
        assert!((c.kappa0 - 1.0).abs() <= 1e-12);
        // sigma_1 of the all-(q sqrt L) matrix is q sqrt(L) n
        let want = (0.6f64 * 4.0).sqrt() * 10.0 / (0.3 * 2.0 * 10.0);
        assert!((c.kappa2 - want).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_slice_is_reported() {
        let mut inst = checker_board(10);
        inst.connectivity[1] = vec![vec![0.4, 0.4], vec![0.4, 0.4]];
        let gt = assemble_ground_truth(&inst).unwrap();
        assert!(matches!(
            condition_numbers(&gt, &inst.ranks, inst.p_max),
            Err(Error::DegenerateSlice { slice: 1, .. })
        ));
    }

    #[test]
    fn beta_examples() {
        let b1 = beta_nl(50, 50, 3, 9, 2.0, 0.4);
        let b2 = beta_nl(50, 50, 3, 9, 2.0, 0.8);
        let first = |p: f64| 1.0 / (p * 2500.0f64).sqrt();
        let second = |p: f64| 81.0 / (p * 2500.0);
        let scale = (100f64).ln().powi(2) * (27.0f64 * 32.0).sqrt();
        assert!((b1 - scale * (first(0.4) + second(0.4))).abs() <= 1e-9 * b1);
        assert!((b2 - scale * (first(0.4) / 2f64.sqrt() + second(0.4) / 2.0)).abs() <= 1e-9 * b2);
        // spot value at n=100, L=40, M=3, K=9, kappa0=2, p=0.5 from a desk calculator
        let spot = 39.22176826626869;
        assert!((beta_nl(100, 40, 3, 9, 2.0, 0.5) - spot).abs() <= 1e-9 * spot);
    }

    #[test]
    fn report_serializes() {
        let inst = checker_board(8);
        let gt = assemble_ground_truth(&inst).unwrap();
        let rep = kappa_h(&gt, &inst.ranks).unwrap();
        let s = serde_json::to_string(&rep).unwrap();
        assert!(s.contains("\"basis_dim\":1"));
    }
}
