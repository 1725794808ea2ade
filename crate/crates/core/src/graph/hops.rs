//! Exact-distance hop neighborhoods.
//!
//! Hop-k neighbors of `i` are the nodes at shortest-path distance exactly `k`,
//! i.e. the k-th BFS frontier from `i`. These sets are disjoint across `k`,
//! unlike the support of `Âᵏ`, which also reaches everything closer.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::csr::{CsrMatrix, Exec};

/// Reusable BFS scratch space for one worker.
pub(crate) struct LayeredBfs {
    seen: Vec<usize>,
    frontier: Vec<usize>,
    next: Vec<usize>,
}

impl LayeredBfs {
    pub(crate) fn new(n: usize) -> Self {
        LayeredBfs {
            seen: vec![usize::MAX; n],
            frontier: Vec::new(),
            next: Vec::new(),
        }
    }

    /// Calls `visit(hop, frontier)` for hops `1..=k_max` until the frontier empties.
    pub(crate) fn run(
        &mut self,
        adj: &CsrMatrix,
        source: usize,
        k_max: usize,
        mut visit: impl FnMut(usize, &[usize]),
    ) {
        self.frontier.clear();
        self.frontier.push(source);
        self.seen[source] = source;
        for hop in 1..=k_max {
            self.next.clear();
            for &u in &self.frontier {
                for &v in adj.row(u).0 {
                    if self.seen[v] != source {
                        self.seen[v] = source;
                        self.next.push(v);
                    }
                }
            }
            if self.next.is_empty() {
                break;
            }
            self.next.sort_unstable();
            visit(hop, &self.next);
            std::mem::swap(&mut self.frontier, &mut self.next);
        }
    }
}

fn check_adjacency(adj: &CsrMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::input("hop distance must be at least 1"));
    }
    if adj.n_rows() != adj.n_cols() {
        return Err(Error::shape("adjacency must be square"));
    }
    Ok(())
}

/// Binary matrix whose `(i, j)` entries are the pairs at shortest-path distance exactly `k`.
pub fn hop_k_neighbors(adj_binary: &CsrMatrix, k: usize) -> Result<CsrMatrix> {
    Ok(hop_layers(adj_binary, k, Exec::Sequential)?.pop().expect("k >= 1 layers"))
}

/// Exact-distance neighbor matrices for every hop `1..=k_max` from a single BFS per node.
pub fn hop_layers(adj_binary: &CsrMatrix, k_max: usize, exec: Exec) -> Result<Vec<CsrMatrix>> {
    check_adjacency(adj_binary, k_max)?;
    let n = adj_binary.n_rows();
    let per_node = |bfs: &mut LayeredBfs, src: usize| {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); k_max];
        bfs.run(adj_binary, src, k_max, |hop, frontier| {
            rows[hop - 1].extend_from_slice(frontier)
        });
        rows
    };
    let node_rows: Vec<Vec<Vec<usize>>> = match exec {
        Exec::Sequential => {
            let mut bfs = LayeredBfs::new(n);
            (0..n).map(|src| per_node(&mut bfs, src)).collect()
        }
        Exec::Parallel => (0..n)
            .into_par_iter()
            .map_init(|| LayeredBfs::new(n), per_node)
            .collect(),
    };

    (0..k_max)
        .map(|h| {
            let mut row_ptr = Vec::with_capacity(n + 1);
            let mut col_idx = Vec::new();
            row_ptr.push(0);
            for rows in &node_rows {
                col_idx.extend_from_slice(&rows[h]);
                row_ptr.push(col_idx.len());
            }
            let values = vec![1.0; col_idx.len()];
            CsrMatrix::try_new(n, n, row_ptr, col_idx, values)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::adjacency::binary_adjacency;

    #[test]
    fn path_graph_second_hop() {
        let a = binary_adjacency(&[(0, 1), (1, 2)], 3).unwrap();
        let h2 = hop_k_neighbors(&a, 2).unwrap();
        let pairs: Vec<_> = h2.iter().map(|(r, c, _)| (r, c)).collect();
        assert_eq!(pairs, vec![(0, 2), (2, 0)]);
    }

    #[test]
    fn first_hop_is_adjacency() {
        let a = binary_adjacency(&[(0, 1), (1, 2), (2, 0), (2, 3)], 5).unwrap();
        assert_eq!(hop_k_neighbors(&a, 1).unwrap(), a);
    }

    #[test]
    fn zero_hop_rejected() {
        let a = binary_adjacency(&[(0, 1)], 2).unwrap();
        assert!(matches!(hop_k_neighbors(&a, 0), Err(Error::Input(_))));
    }

    #[test]
    fn hops_beyond_diameter_are_empty() {
        let a = binary_adjacency(&[(0, 1)], 3).unwrap();
        assert_eq!(hop_k_neighbors(&a, 4).unwrap().nnz(), 0);
    }
}
