use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::csr::{spmm_with, CsrMatrix, Exec};
use crate::matrix::FeatureMatrix;

/// Canonical undirected edge set: `(min, max)` pairs, self-loops removed, duplicates collapsed.
pub(crate) fn canonical_edges(edges: &[(usize, usize)], n: usize) -> Result<BTreeSet<(usize, usize)>> {
    if n == 0 {
        return Err(Error::input("graph must have at least one node"));
    }
    let mut set = BTreeSet::new();
    for &(u, v) in edges {
        if u >= n || v >= n {
            return Err(Error::input(format!(
                "edge ({u}, {v}) has an endpoint outside [0, {n})"
            )));
        }
        if u != v {
            set.insert((u.min(v), u.max(v)));
        }
    }
    Ok(set)
}

/// Unweighted symmetric adjacency `A` without self-loops.
pub fn binary_adjacency(edges: &[(usize, usize)], n: usize) -> Result<CsrMatrix> {
    let set = canonical_edges(edges, n)?;
    let entries = set
        .iter()
        .flat_map(|&(u, v)| [(u, v, 1.0), (v, u, 1.0)])
        .collect();
    CsrMatrix::from_triplets(n, n, entries)
}

/// Augmented normalized adjacency `D^{-1/2} (A + I) D^{-1/2}`.
///
/// Input self-loops are ignored and the identity is added exactly once, so an
/// isolated node has degree 1 and `Â[i][i] = 1`.
pub fn build_normalized_adjacency(edges: &[(usize, usize)], n: usize) -> Result<CsrMatrix> {
    let set = canonical_edges(edges, n)?;
    let mut degree = vec![1usize; n];
    for &(u, v) in &set {
        degree[u] += 1;
        degree[v] += 1;
    }
    let norm = |u: usize, v: usize| 1.0 / ((degree[u] * degree[v]) as f64).sqrt();

    let mut entries = Vec::with_capacity(2 * set.len() + n);
    for i in 0..n {
        entries.push((i, i, norm(i, i)));
    }
    for &(u, v) in &set {
        // One value, mirrored, so Â is exactly symmetric.
        let w = norm(u, v);
        entries.push((u, v, w));
        entries.push((v, u, w));
    }
    CsrMatrix::from_triplets(n, n, entries)
}

/// `[Â·X, Â²·X, …, Â^K·X]` by repeated sparse products.
pub fn propagate(adj: &CsrMatrix, x: &FeatureMatrix, k: usize) -> Result<Vec<FeatureMatrix>> {
    propagate_with(adj, x, k, Exec::Sequential)
}

pub fn propagate_with(
    adj: &CsrMatrix,
    x: &FeatureMatrix,
    k: usize,
    exec: Exec,
) -> Result<Vec<FeatureMatrix>> {
    if k == 0 {
        return Err(Error::input("propagation needs at least one hop"));
    }
    if adj.n_rows() != adj.n_cols() {
        return Err(Error::shape("adjacency must be square"));
    }
    let mut out: Vec<FeatureMatrix> = Vec::with_capacity(k);
    for hop in 0..k {
        let prev = if hop == 0 { x } else { &out[hop - 1] };
        let next = spmm_with(adj, prev, exec)?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_two_nodes() {
        let a = build_normalized_adjacency(&[(0, 1)], 2).unwrap();
        assert_eq!(a.to_dense().data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn isolated_node_keeps_unit_self_loop() {
        let a = build_normalized_adjacency(&[], 1).unwrap();
        assert_eq!(a.to_dense().data(), &[1.0]);
    }

    #[test]
    fn self_loops_and_duplicates_ignored() {
        let clean = build_normalized_adjacency(&[(0, 1), (1, 2)], 3).unwrap();
        let noisy =
            build_normalized_adjacency(&[(0, 1), (1, 0), (1, 1), (2, 1), (0, 0)], 3).unwrap();
        assert_eq!(clean, noisy);
    }

    #[test]
    fn errors() {
        assert!(matches!(build_normalized_adjacency(&[], 0), Err(Error::Input(_))));
        assert!(matches!(
            build_normalized_adjacency(&[(0, 3)], 3),
            Err(Error::Input(_))
        ));
        let a = CsrMatrix::identity(2);
        assert!(matches!(
            propagate(&a, &FeatureMatrix::zeros(2, 1), 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn propagate_identity_features_gives_dense_adjacency() {
        let a = build_normalized_adjacency(&[(0, 1), (1, 2), (2, 3)], 4).unwrap();
        let p = propagate(&a, &FeatureMatrix::identity(4), 1).unwrap();
        assert_eq!(p[0], a.to_dense());
    }

    #[test]
    fn propagate_zero_stays_zero() {
        let a = build_normalized_adjacency(&[(0, 1), (1, 2)], 3).unwrap();
        let p = propagate(&a, &FeatureMatrix::zeros(3, 2), 3).unwrap();
        assert!(p.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
    }
}
