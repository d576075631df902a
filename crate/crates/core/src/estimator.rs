//! Cooperative estimator: every follower reconstructs the leader's state
//! `chi0` and system matrix `A0` from its in-neighbors only.
//!
//! ```text
//! chi_hat_i' = A_hat_i chi_hat_i + b1 * sum_j a_ij (chi_hat_j - chi_hat_i)
//! A_hat_i'   =                     b2 * sum_j a_ij (A_hat_j - A_hat_i)
//! ```
//!
//! Node 0 contributes the leader's true `(chi0, A0)` to its out-neighbors.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{Matrix6, Vector6};

use crate::dynamics::LeaderModel;
use crate::graph::Topology;
use crate::{Error, Result};

/// One agent's estimate of the leader.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObserverState {
    pub chi_hat: Vector6<f64>,
    pub a_hat: Matrix6<f64>,
}

impl ObserverState {
    /// The leader's own (exact) entry.
    pub fn from_leader(l: &LeaderModel) -> Self {
        Self { chi_hat: l.chi0, a_hat: l.a0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGains {
    pub beta1: f64,
    pub beta2: f64,
}

impl ObserverGains {
    pub fn new(beta1: f64, beta2: f64) -> Result<Self> {
        if !(beta1.is_finite() && beta1 > 0.0) {
            return Err(Error::InvalidGain { field: "beta1", reason: "must be positive" });
        }
        if !(beta2.is_finite() && beta2 > 0.0) {
            return Err(Error::InvalidGain { field: "beta2", reason: "must be positive" });
        }
        Ok(Self { beta1, beta2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverDerivative {
    pub chi_hat_dot: Vector6<f64>,
    pub a_hat_dot: Matrix6<f64>,
}

/// Read access to per-node data keyed by graph node index.
pub trait NodeLookup<T> {
    fn node(&self, index: usize) -> Option<&T>;
}

impl<T> NodeLookup<T> for [T] {
    fn node(&self, index: usize) -> Option<&T> {
        self.get(index)
    }
}

impl<T> NodeLookup<T> for Vec<T> {
    fn node(&self, index: usize) -> Option<&T> {
        self.get(index)
    }
}

impl<T> NodeLookup<T> for BTreeMap<usize, T> {
    fn node(&self, index: usize) -> Option<&T> {
        self.get(&index)
    }
}

/// Right-hand side of the observer and matrix adaptation law for agent `i`.
///
/// `neighbors` must provide every node `j` with `a_ij > 0`; node 0 is the
/// leader's true state and matrix. Nothing else is read.
pub fn observer_derivative<N: NodeLookup<ObserverState> + ?Sized>(
    i: usize,
    own: &ObserverState,
    neighbors: &N,
    t: &Topology,
    g: &ObserverGains,
) -> Result<ObserverDerivative> {
    let mut chi_sum = Vector6::zeros();
    let mut a_sum = Matrix6::zeros();
    for (j, w) in t.in_neighbors(i) {
        let nb = neighbors.node(j).ok_or(Error::MissingNeighbor { agent: i, neighbor: j })?;
        chi_sum += w * (nb.chi_hat - own.chi_hat);
        a_sum += w * (nb.a_hat - own.a_hat);
    }
    Ok(ObserverDerivative {
        chi_hat_dot: own.a_hat * own.chi_hat + g.beta1 * chi_sum,
        a_hat_dot: g.beta2 * a_sum,
    })
}

/// Exact second derivative of `chi_hat_i`, obtained by differentiating the
/// observer law:
/// `A_hat_i' chi_hat_i + A_hat_i chi_hat_i' + b1 * sum_j a_ij (chi_hat_j' - chi_hat_i')`.
///
/// `derivatives` holds the first derivatives of every neighbor from the
/// same evaluation pass; the leader's entry is `A0 chi0`.
pub fn observer_second_derivative<D: NodeLookup<Vector6<f64>> + ?Sized>(
    i: usize,
    own: &ObserverState,
    own_derivative: &ObserverDerivative,
    derivatives: &D,
    t: &Topology,
    g: &ObserverGains,
) -> Result<Vector6<f64>> {
    let mut sum = Vector6::zeros();
    for (j, w) in t.in_neighbors(i) {
        let d = derivatives
            .node(j)
            .ok_or(Error::MissingNeighborDerivative { agent: i, neighbor: j })?;
        sum += w * (d - own_derivative.chi_hat_dot);
    }
    Ok(own_derivative.a_hat_dot * own.chi_hat
        + own.a_hat * own_derivative.chi_hat_dot
        + g.beta1 * sum)
}

/// Per-agent `(|chi_hat - chi0|, |A_hat - A0|_F)`.
pub fn estimation_errors(states: &[ObserverState], leader: &LeaderModel) -> Vec<(f64, f64)> {
    states
        .iter()
        .map(|s| ((s.chi_hat - leader.chi0).norm(), (s.a_hat - leader.a0).norm()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::orbit_matrix;
    use crate::graph::build_topology;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn leader() -> LeaderModel {
        LeaderModel { a0: orbit_matrix(), chi0: Vector6::new(0.3, 8.0, -1.0, 8.0, 0.5, 8.0) }
    }

    fn single() -> Topology {
        build_topology(&[[0.0, 0.0], [1.0, 0.0]]).unwrap()
    }

    #[test]
    fn consensus_fixed_point() {
        let l = leader();
        let nodes = vec![ObserverState::from_leader(&l), ObserverState::from_leader(&l)];
        let g = ObserverGains::new(5.0, 5.0).unwrap();
        let d = observer_derivative(1, &nodes[1], &nodes, &single(), &g).unwrap();
        assert_eq!(d.chi_hat_dot, l.a0 * l.chi0);
        assert_eq!(d.a_hat_dot, Matrix6::zeros());
    }

    #[test]
    fn zero_estimate_pulls_toward_leader() {
        let l = leader();
        let nodes = vec![ObserverState::from_leader(&l), ObserverState::default()];
        let g = ObserverGains::new(5.0, 2.0).unwrap();
        let d = observer_derivative(1, &nodes[1], &nodes, &single(), &g).unwrap();
        assert_eq!(d.chi_hat_dot, 5.0 * l.chi0);
        assert_eq!(d.a_hat_dot, 2.0 * l.a0);
    }

    #[test]
    fn no_in_edges() {
        let t = build_topology(&[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        let own = ObserverState { chi_hat: Vector6::repeat(1.0), a_hat: orbit_matrix() };
        let empty: BTreeMap<usize, ObserverState> = BTreeMap::new();
        let d = observer_derivative(1, &own, &empty, &t, &ObserverGains::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(d.chi_hat_dot, own.a_hat * own.chi_hat);
        assert_eq!(d.a_hat_dot, Matrix6::zeros());
    }

    #[test]
    fn missing_neighbor() {
        let empty: BTreeMap<usize, ObserverState> = BTreeMap::new();
        let r = observer_derivative(1, &ObserverState::default(), &empty, &single(), &ObserverGains::new(1.0, 1.0).unwrap());
        assert_eq!(r, Err(Error::MissingNeighbor { agent: 1, neighbor: 0 }));
    }

    #[test]
    fn rejects_nonpositive_gains() {
        assert!(ObserverGains::new(0.0, 1.0).is_err());
        assert!(ObserverGains::new(1.0, -1.0).is_err());
    }

    #[test]
    fn second_derivative_at_consensus() {
        let l = leader();
        let t = Topology::chain(3);
        let g = ObserverGains::new(5.0, 5.0).unwrap();
        let nodes = vec![ObserverState::from_leader(&l); 4];
        let firsts: Vec<ObserverDerivative> = (0..4)
            .map(|i| {
                if i == 0 {
                    ObserverDerivative { chi_hat_dot: l.a0 * l.chi0, a_hat_dot: Matrix6::zeros() }
                } else {
                    observer_derivative(i, &nodes[i], &nodes, &t, &g).unwrap()
                }
            })
            .collect();
        let chi_dots: Vec<Vector6<f64>> = firsts.iter().map(|d| d.chi_hat_dot).collect();
        for i in 1..4 {
            let dd = observer_second_derivative(i, &nodes[i], &firsts[i], &chi_dots, &t, &g).unwrap();
            assert_abs_diff_eq!(dd, l.a0 * l.a0 * l.chi0, epsilon = 1e-12);
        }
    }

    #[test]
    fn second_derivative_of_isolated_linear_system() {
        let t = build_topology(&[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        let own = ObserverState { chi_hat: Vector6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0), a_hat: orbit_matrix() * 0.5 };
        let g = ObserverGains::new(1.0, 1.0).unwrap();
        let empty: Vec<Vector6<f64>> = Vec::new();
        let empty_states: Vec<ObserverState> = Vec::new();
        let d = observer_derivative(1, &own, &empty_states, &t, &g).unwrap();
        let dd = observer_second_derivative(1, &own, &d, &empty, &t, &g).unwrap();
        assert_eq!(dd, own.a_hat * d.chi_hat_dot);
    }

    #[test]
    fn error_norms() {
        let l = leader();
        let mut s = ObserverState::from_leader(&l);
        assert_eq!(estimation_errors(&[s], &l), vec![(0.0, 0.0)]);
        s.chi_hat[0] += 1.0;
        s.a_hat += Matrix6::identity();
        let (e, a) = estimation_errors(&[s], &l)[0];
        assert_abs_diff_eq!(e, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a, libm::sqrt(6.0), epsilon = 1e-14);
    }

    #[test]
    fn ignores_non_neighbors() {
        let t = Topology::chain(4);
        let l = leader();
        let g = ObserverGains::new(5.0, 5.0).unwrap();
        let mut nodes: Vec<ObserverState> = (0..5)
            .map(|k| ObserverState { chi_hat: Vector6::repeat(k as f64), a_hat: orbit_matrix() * k as f64 })
            .collect();
        nodes[0] = ObserverState::from_leader(&l);
        let before = observer_derivative(2, &nodes[2], &nodes, &t, &g).unwrap();
        for j in [0usize, 3, 4] {
            let mut mutated = nodes.clone();
            mutated[j].chi_hat = Vector6::repeat(1e6);
            mutated[j].a_hat = Matrix6::repeat(-42.0);
            assert_eq!(observer_derivative(2, &mutated[2], &mutated, &t, &g).unwrap(), before);
        }
    }

    #[test]
    fn matrix_adaptation_ignores_state_estimates() {
        let t = Topology::chain(2);
        let g = ObserverGains::new(5.0, 3.0).unwrap();
        let l = leader();
        let mut nodes = vec![ObserverState::from_leader(&l), ObserverState::default(), ObserverState::default()];
        nodes[2].a_hat = Matrix6::repeat(0.25);
        let a_dot = observer_derivative(2, &nodes[2], &nodes, &t, &g).unwrap().a_hat_dot;
        nodes[1].chi_hat = Vector6::new(9.0, -3.0, 1.0, 0.0, 2.0, 7.0);
        nodes[2].chi_hat = Vector6::new(-1.0, 4.0, 0.0, 3.0, 3.0, 3.0);
        assert_eq!(observer_derivative(2, &nodes[2], &nodes, &t, &g).unwrap().a_hat_dot, a_dot);
    }
}
