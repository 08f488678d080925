//! Seeded generation of block-model instances and Bernoulli adjacency tensors.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{planted_connectivity, GroundTruth, MmlsbmInstance};
use crate::tensor::Tensor3;

pub const MAX_RESAMPLES: usize = 100;

/// Draws layer groups uniformly from `0..M` and, per group, node communities
/// uniformly from `0..K`. Every group shares the connectivity with `p_max` on
/// the diagonal and `alpha * p_max` off it. Draws with an empty layer group
/// or an empty community are rejected and redrawn.
pub fn sample_instance(
    n: usize,
    layers: usize,
    groups: usize,
    k: usize,
    p_max: f64,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<MmlsbmInstance> {
    if !(p_max > 0.0 && p_max <= 1.0) {
        return Err(Error::Contract(format!("p_max = {p_max} outside (0, 1]")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha = {alpha} outside (0, 1)")));
    }
    if n == 0 || layers == 0 || groups == 0 || k == 0 {
        return Err(Error::Contract("n, L, M and K must be positive".into()));
    }
    let connectivity = planted_connectivity(k, p_max, alpha * p_max);
    for _ in 0..MAX_RESAMPLES {
        let z: Vec<usize> = (0..layers).map(|_| rng.random_range(0..groups)).collect();
        if !covers(&z, groups) {
            continue;
        }
        let memberships: Vec<Vec<usize>> = (0..groups)
            .map(|_| (0..n).map(|_| rng.random_range(0..k)).collect())
            .collect();
        if !memberships.iter().all(|g| covers(g, k)) {
            continue;
        }
        return Ok(MmlsbmInstance {
            n,
            layers,
            groups,
            ranks: vec![k; groups],
            z,
            memberships,
            connectivity: vec![connectivity.clone(); groups],
            p_max,
        });
    }
    Err(Error::RetryExhausted(MAX_RESAMPLES))
}

fn covers(labels: &[usize], k: usize) -> bool {
    let mut seen = vec![false; k];
    labels.iter().for_each(|&c| seen[c] = true);
    seen.into_iter().all(|s| s)
}

/// Symmetric binary tensor with zero diagonal; `A(l,i,j)` for `i < j` is
/// Bernoulli(`P*(l,i,j)`), drawn layer by layer, column by column.
pub fn sample_adjacency(gt: &GroundTruth, rng: &mut impl Rng) -> Tensor3 {
    let [layers, n, _] = gt.p_star.dims();
    let mut a = Tensor3::zeros(layers, n, n);
    for l in 0..layers {
        for j in 1..n {
            for i in 0..j {
                let p = gt.p_star.get(l, i, j);
                if rng.random::<f64>() < p {
                    a.set(l, i, j, 1.0);
                    a.set(l, j, i, 1.0);
                }
            }
        }
    }
    a
}

/// Writes `# layers=L nodes=n` followed by one `l i j` line (zero-based,
/// `i < j`) per edge.
pub fn write_edge_list<W: Write>(w: &mut W, a: &Tensor3) -> Result<()> {
    let [layers, n, _] = a.dims();
    writeln!(w, "# layers={layers} nodes={n}")?;
    for l in 0..layers {
        for i in 0..n {
            for j in i + 1..n {
                if a.get(l, i, j) != 0.0 {
                    writeln!(w, "{l} {i} {j}")?;
                }
            }
        }
    }
    Ok(())
}

/// Reads the edge-list format. Dimensions come from the header when present,
/// otherwise from the largest indices seen.
pub fn read_edge_list<R: BufRead>(r: R) -> Result<Tensor3> {
    let mut header: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut layers = None;
            let mut nodes = None;
            for tok in rest.split_whitespace() {
                if let Some(v) = tok.strip_prefix("layers=") {
                    layers = v.parse().ok();
                } else if let Some(v) = tok.strip_prefix("nodes=") {
                    nodes = v.parse().ok();
                }
            }
            if let (Some(l), Some(n)) = (layers, nodes) {
                header = Some((l, n));
            }
            continue;
        }
        let parsed: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        if parsed.len() != 3 {
            return Err(Error::Format(format!("line {}: expected `l i j`", lineno + 1)));
        }
        edges.push((parsed[0], parsed[1], parsed[2]));
    }
    let (layers, n) = header.unwrap_or_else(|| {
        let l = edges.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let n = edges.iter().map(|e| e.1.max(e.2) + 1).max().unwrap_or(0);
        (l, n)
    });
    let mut a = Tensor3::zeros(layers, n, n);
    for (l, i, j) in edges {
        if l >= layers || i >= n || j >= n {
            return Err(Error::Format(format!("edge ({l},{i},{j}) outside {layers}x{n}x{n}")));
        }
        if i == j {
            return Err(Error::Format(format!("self-loop ({l},{i},{i})")));
        }
        a.set(l, i, j, 1.0);
        a.set(l, j, i, 1.0);
    }
    Ok(a)
}
