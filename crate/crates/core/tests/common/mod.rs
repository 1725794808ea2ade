//! Dense reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn random_edges(n: usize, p: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn random_dense(rows: usize, cols: usize, rng: &mut impl Rng) -> Dense {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `D^{-1/2}(A+I)D^{-1/2}` straight from the definition.
pub fn dense_normalized(edges: &[(usize, usize)], n: usize) -> Dense {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in edges {
        if u != v {
            a[u][v] = 1.0;
            a[v][u] = 1.0;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect())
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn hconcat(blocks: &[Dense]) -> Dense {
    let n = blocks[0].len();
    (0..n)
        .map(|i| blocks.iter().flat_map(|b| b[i].iter().copied()).collect())
        .collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Largest elementwise relative error, with a floor on the scale for entries near zero.
pub fn max_rel_err(a: &Dense, b: &Dense, floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs() / p.abs().max(q.abs()).max(floor))
        })
        .fold(0.0, f64::max)
}

/// Shortest-path distances from `src` by breadth-first search on an edge list.
pub fn bfs_distances(edges: &[(usize, usize)], n: usize, src: usize) -> Vec<Option<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        if u != v {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}
