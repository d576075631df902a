//! Directed communication topology between the virtual leader (node 0) and
//! the followers (nodes 1..=N).
//!
//! Edge semantics: `a[i][j] > 0` means node `i` receives node `j`'s
//! estimates. Information therefore flows along `j -> i`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Validated weighted adjacency over `N + 1` nodes, node 0 being the leader.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    adjacency: DMatrix<f64>,
}

/// Graph Laplacian together with its follower block and leader pinning gains.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPair {
    pub laplacian: DMatrix<f64>,
    /// Lower-right `N x N` block of the Laplacian.
    pub follower_block: DMatrix<f64>,
    /// Diagonal of `a[i][0]`, i = 1..=N.
    pub leader_gain_diag: DMatrix<f64>,
}

/// Validates a row-major `(N+1) x (N+1)` weight matrix.
pub fn build_topology<R: AsRef<[f64]>>(rows: &[R]) -> Result<Topology> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::EmptyTopology);
    }
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != n {
            return Err(Error::NonSquare { row: i, len: row.len(), expected: n });
        }
        for (j, &w) in row.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::NegativeWeight { row: i, col: j, value: w });
            }
            if i == j && w != 0.0 {
                return Err(Error::SelfLoop { index: i });
            }
        }
    }
    let adjacency = DMatrix::from_fn(n, n, |i, j| rows[i].as_ref()[j]);
    Ok(Topology { adjacency })
}

impl Topology {
    /// Chain `0 -> 1 -> ... -> N` with unit weights.
    pub fn chain(n_followers: usize) -> Self {
        let n = n_followers + 1;
        let adjacency = DMatrix::from_fn(n, n, |i, j| if i >= 1 && j + 1 == i { 1.0 } else { 0.0 });
        Self { adjacency }
    }

    pub fn n_followers(&self) -> usize {
        self.adjacency.nrows() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Weight `a[i][j]`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    /// Nodes `j` with `a[i][j] > 0`, in ascending order.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n_nodes())
            .map(move |j| (j, self.adjacency[(i, j)]))
            .filter(|&(_, w)| w > 0.0)
    }

    /// Row-major copy of the adjacency.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_nodes())
            .map(|i| (0..self.n_nodes()).map(|j| self.adjacency[(i, j)]).collect())
            .collect()
    }
}

/// `l_ii = sum_j a_ij`, `l_ij = -a_ij`.
pub fn laplacian(t: &Topology) -> LaplacianPair {
    let n = t.n_nodes();
    let a = &t.adjacency;
    let laplacian = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            a.row(i).iter().sum()
        } else {
            -a[(i, j)]
        }
    });
    let follower_block = laplacian.view((1, 1), (n - 1, n - 1)).into_owned();
    let pins = DVector::from_fn(n - 1, |i, _| a[(i + 1, 0)]);
    LaplacianPair {
        laplacian,
        follower_block,
        leader_gain_diag: DMatrix::from_diagonal(&pins),
    }
}

/// True iff every follower is reachable from node 0 along `j -> i` edges.
pub fn has_leader_rooted_spanning_tree(t: &Topology) -> bool {
    let n = t.n_nodes();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && t.weight(i, j) > 0.0 {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn chain_rows() -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; 6]; 6];
        for i in 1..6 {
            rows[i][i - 1] = 1.0;
        }
        rows
    }

    #[test]
    fn empty_two_node_graph() {
        let t = build_topology(&[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(t.n_followers(), 1);
        assert_eq!(t.in_neighbors(1).count(), 0);
        assert!(!has_leader_rooted_spanning_tree(&t));
    }

    #[test]
    fn rejects_bad_matrices() {
        assert_eq!(
            build_topology(&[[1.0, 0.0], [0.0, 0.0]]),
            Err(Error::SelfLoop { index: 0 })
        );
        assert!(matches!(
            build_topology(&[vec![0.0, -1.0], vec![0.0, 0.0]]),
            Err(Error::NegativeWeight { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            build_topology(&[vec![0.0, 1.0], vec![0.0]]),
            Err(Error::NonSquare { row: 1, len: 1, expected: 2 })
        ));
    }

    #[test]
    fn single_follower_laplacian() {
        let t = build_topology(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let lp = laplacian(&t);
        assert_eq!(lp.laplacian, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 1.0]));
        assert_eq!(lp.follower_block, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(lp.leader_gain_diag, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn chain_graph() {
        let t = build_topology(&chain_rows()).unwrap();
        assert_eq!(t, Topology::chain(5));
        assert!(has_leader_rooted_spanning_tree(&t));
        let h = laplacian(&t).follower_block;
        for i in 0..5 {
            for j in 0..5 {
                let expected = match (i, j) {
                    _ if i == j => 1.0,
                    _ if i == j + 1 => -1.0,
                    _ => 0.0,
                };
                assert_eq!(h[(i, j)], expected);
            }
        }
    }

    #[test]
    fn leader_isolated() {
        let t = build_topology(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]).unwrap();
        assert!(!has_leader_rooted_spanning_tree(&t));
    }

    #[test]
    fn complete_graph_is_rooted() {
        let n = 5;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        assert!(has_leader_rooted_spanning_tree(&build_topology(&rows).unwrap()));
    }

    #[test]
    fn rows_of_laplacian_sum_to_zero_and_h_matches_pins() {
        let rows = vec![
            vec![0.0, 0.5, 0.0, 0.0],
            vec![0.3, 0.0, 0.0, 2.0],
            vec![0.0, 1.5, 0.0, 0.25],
            vec![0.0, 0.0, 0.7, 0.0],
        ];
        let lp = laplacian(&build_topology(&rows).unwrap());
        for i in 0..4 {
            assert!(lp.laplacian.row(i).iter().sum::<f64>().abs() < 1e-12);
        }
        let ones = DVector::from_element(3, 1.0);
        let lhs = &lp.follower_block * &ones;
        let rhs = &lp.leader_gain_diag * &ones;
        assert!((lhs - rhs).norm() < 1e-12);
    }
}
