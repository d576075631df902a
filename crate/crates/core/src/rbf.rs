//! Gaussian radial basis function networks on a regular lattice.
//!
//! A network carries one lattice of centers with a shared width and one
//! weight vector per output channel. Centers are enumerated row-major: the
//! last input axis varies fastest.

use alloc::vec;
use alloc::vec::Vec;

use libm::exp;
use nalgebra::Vector3;

use crate::{Error, Result};

/// Output channels of every network (surge, sway, yaw).
pub const CHANNELS: usize = 3;

/// One weight vector per output channel.
pub type ChannelWeights = [Vec<f64>; CHANNELS];

#[derive(Debug, Clone, PartialEq)]
pub struct RbfNetwork {
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
    width: f64,
    axes: Vec<Vec<f64>>,
    pub weights: ChannelWeights,
}

/// `n` evenly spaced points over `[lo, hi]`, both endpoints included.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { hi } else { lo + step * k as f64 }).collect()
}

/// Builds a lattice network with all weights zero.
pub fn build_grid_network(bounds: &[(f64, f64)], counts: &[usize], width: f64) -> Result<RbfNetwork> {
    if bounds.len() != counts.len() {
        return Err(Error::DimensionMismatch { expected: bounds.len(), got: counts.len() });
    }
    if bounds.is_empty() {
        return Err(Error::BadCount { axis: 0 });
    }
    for (axis, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::BadBounds { axis });
        }
    }
    if let Some(axis) = counts.iter().position(|&c| c < 2) {
        return Err(Error::BadCount { axis });
    }
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::BadWidth(width));
    }
    let axes: Vec<Vec<f64>> =
        bounds.iter().zip(counts).map(|(&(lo, hi), &n)| linspace(lo, hi, n)).collect();
    let n_nodes = counts.iter().product();
    Ok(RbfNetwork {
        bounds: bounds.to_vec(),
        counts: counts.to_vec(),
        width,
        axes,
        weights: [vec![0.0; n_nodes], vec![0.0; n_nodes], vec![0.0; n_nodes]],
    })
}

impl RbfNetwork {
    pub fn input_dim(&self) -> usize {
        self.counts.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.weights[0].len()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Per-axis center coordinates.
    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    /// Coordinates of center `index`.
    pub fn center(&self, mut index: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.input_dim()];
        for axis in (0..self.input_dim()).rev() {
            let n = self.counts[axis];
            c[axis] = self.axes[axis][index % n];
            index /= n;
        }
        c
    }

    /// Same lattice, with the given weights.
    pub fn with_weights(&self, weights: ChannelWeights) -> Result<Self> {
        for w in &weights {
            if w.len() != self.n_nodes() {
                return Err(Error::DimensionMismatch { expected: self.n_nodes(), got: w.len() });
            }
        }
        Ok(Self { weights, ..self.clone() })
    }

    /// Whether `other` uses the same lattice and width.
    pub fn same_lattice(&self, other: &Self) -> bool {
        self.bounds == other.bounds && self.counts == other.counts && self.width == other.width
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: z.len() });
        }
        Ok(())
    }

    /// `S(Z)` evaluated center by center.
    pub fn regressor(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        let inv_w2 = 1.0 / (self.width * self.width);
        Ok((0..self.n_nodes())
            .map(|j| {
                let d2: f64 = self.center(j).iter().zip(z).map(|(c, x)| (x - c) * (x - c)).sum();
                exp(-d2 * inv_w2)
            })
            .collect())
    }

    /// `S(Z)` as the outer product of per-axis Gaussians, written into `out`.
    ///
    /// Agrees with [`RbfNetwork::regressor`] up to rounding and is what the
    /// simulator uses.
    pub fn regressor_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(z)?;
        if out.len() != self.n_nodes() {
            return Err(Error::DimensionMismatch { expected: self.n_nodes(), got: out.len() });
        }
        let inv_w2 = 1.0 / (self.width * self.width);
        out[0] = 1.0;
        let mut filled = 1;
        for (axis, x) in self.axes.iter().zip(z) {
            // expand in place from the back so earlier entries stay readable
            let factors: Vec<f64> = axis.iter().map(|c| exp(-(x - c) * (x - c) * inv_w2)).collect();
            let n = factors.len();
            for i in (0..filled).rev() {
                let base = out[i];
                for (k, f) in factors.iter().enumerate() {
                    out[i * n + k] = base * f;
                }
            }
            filled *= n;
        }
        Ok(())
    }

    /// `W_k^T S` for every channel given a precomputed regressor.
    pub fn output_from_regressor(&self, s: &[f64]) -> Vector3<f64> {
        Vector3::from_fn(|k, _| dot(&self.weights[k], s))
    }

    /// Channel-wise `W_k^T S(Z)`.
    pub fn nn_output(&self, z: &[f64]) -> Result<Vector3<f64>> {
        let mut s = vec![0.0; self.n_nodes()];
        self.regressor_into(z, &mut s)?;
        Ok(self.output_from_regressor(&s))
    }

    /// Euclidean norm of each channel's weight vector.
    pub fn weight_norms(&self) -> [f64; CHANNELS] {
        core::array::from_fn(|k| libm::sqrt(dot(&self.weights[k], &self.weights[k])))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weights recorded at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSnapshot {
    pub time: f64,
    pub weights: ChannelWeights,
}

/// Element-wise mean of the snapshots whose time lies in `[t_a, t_b]`.
pub fn average_weights(snapshots: &[WeightSnapshot], t_a: f64, t_b: f64) -> Result<ChannelWeights> {
    let empty = Error::EmptyWindow { start: t_a, end: t_b };
    if !(t_b > t_a) {
        return Err(empty);
    }
    let inside: Vec<&WeightSnapshot> =
        snapshots.iter().filter(|s| s.time >= t_a && s.time <= t_b).collect();
    if inside.len() < 2 {
        return Err(empty);
    }
    let len = inside[0].weights[0].len();
    let mut mean: ChannelWeights = core::array::from_fn(|_| vec![0.0; len]);
    for snap in &inside {
        for (acc, w) in mean.iter_mut().zip(&snap.weights) {
            if w.len() != len {
                return Err(Error::DimensionMismatch { expected: len, got: w.len() });
            }
            for (a, x) in acc.iter_mut().zip(w) {
                *a += x;
            }
        }
    }
    let n = inside.len() as f64;
    for acc in &mut mean {
        for a in acc.iter_mut() {
            *a /= n;
        }
    }
    Ok(mean)
}
