//! Decentralized learning controller.
//!
//! Backstepping on the tracking error `z1 = eta - eta_hat_d` with virtual
//! control `alpha = J^T (-K1 z1 + eta_hat_d')` and velocity error
//! `z2 = nu - alpha`. The feedback law is
//! `tau = -J^T z1 - K2 z2 + W^T S(Z)`, and the weights follow the
//! sigma-modified law `W_k' = -Gamma_k (S(Z) z2_k + sigma_k W_k)`.
//!
//! Only the agent's own state and its own observer output enter these
//! functions.

use nalgebra::{Matrix3, Vector3};

use crate::dynamics::{rotation, rotation_rate, AgentState, Vehicle};
use crate::rbf::{ChannelWeights, RbfNetwork, CHANNELS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub k1: Matrix3<f64>,
    pub k2: Matrix3<f64>,
    /// Adaptation gain per channel.
    pub gamma: [f64; CHANNELS],
    /// Leakage per channel.
    pub sigma: [f64; CHANNELS],
}

fn is_spd(m: &Matrix3<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
        && (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0)
        && m.symmetric_eigenvalues().iter().all(|&l| l > 0.0)
}

impl ControllerGains {
    pub fn new(
        k1: Matrix3<f64>,
        k2: Matrix3<f64>,
        gamma: [f64; CHANNELS],
        sigma: [f64; CHANNELS],
    ) -> Result<Self> {
        if !is_spd(&k1) {
            return Err(Error::NotPositiveDefinite { what: "K1" });
        }
        if !is_spd(&k2) {
            return Err(Error::NotPositiveDefinite { what: "K2" });
        }
        if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidGain { field: "gamma", reason: "must be positive" });
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidGain { field: "sigma", reason: "must be non-negative" });
        }
        Ok(Self { k1, k2, gamma, sigma })
    }

    /// `lambda_min(K2) > 2 lambda_max(K1)`. Violations are allowed; callers
    /// surface them as warnings.
    pub fn satisfies_gain_relation(&self) -> bool {
        let min_k2 = self.k2.symmetric_eigenvalues().min();
        let max_k1 = self.k1.symmetric_eigenvalues().max();
        min_k2 > 2.0 * max_k1
    }
}

/// Tracking error, virtual control and velocity error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacksteppingErrors {
    pub z1: Vector3<f64>,
    pub alpha: Vector3<f64>,
    pub z2: Vector3<f64>,
}

/// The reference seen by one agent: `eta_hat_d = eta_hat_0 + d*` and its
/// first two derivatives, all produced by that agent's own observer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reference {
    pub eta: Vector3<f64>,
    pub eta_dot: Vector3<f64>,
    pub eta_ddot: Vector3<f64>,
}

pub fn backstepping_errors(
    s: &AgentState,
    eta_hat_d: &Vector3<f64>,
    eta_hat_d_dot: &Vector3<f64>,
    g: &ControllerGains,
) -> BacksteppingErrors {
    let z1 = s.eta - eta_hat_d;
    let alpha = rotation(s.eta[2]).transpose() * (-g.k1 * z1 + eta_hat_d_dot);
    BacksteppingErrors { z1, alpha, z2: s.nu - alpha }
}

/// Time derivative of the virtual control:
/// `J'^T (-K1 z1 + eta_d') + J^T (K1 eta_d' - K1 J nu + eta_d'')`.
pub fn alpha_dot(s: &AgentState, reference: &Reference, g: &ControllerGains) -> Vector3<f64> {
    let psi = s.eta[2];
    let j = rotation(psi);
    let j_dot = rotation_rate(psi, s.nu[2]);
    let z1 = s.eta - reference.eta;
    j_dot.transpose() * (-g.k1 * z1 + reference.eta_dot)
        + j.transpose() * (g.k1 * reference.eta_dot - g.k1 * (j * s.nu) + reference.eta_ddot)
}

/// `-J^T z1 - K2 z2`, the part of the law that does not involve the network.
pub fn feedback_terms(z1: &Vector3<f64>, z2: &Vector3<f64>, psi: f64, g: &ControllerGains) -> Vector3<f64> {
    -(rotation(psi).transpose() * z1) - g.k2 * z2
}

/// Learning feedback law with the current (adapting) weights.
pub fn ddl_control(
    z1: &Vector3<f64>,
    z2: &Vector3<f64>,
    psi: f64,
    g: &ControllerGains,
    net: &RbfNetwork,
    z: &[f64],
) -> Result<Vector3<f64>> {
    Ok(feedback_terms(z1, z2, psi, g) + net.nn_output(z)?)
}

/// Constant-weight law. Same expression as [`ddl_control`], but the network
/// holds consolidated weights and nothing is adapted.
pub fn pretrained_control(
    z1: &Vector3<f64>,
    z2: &Vector3<f64>,
    psi: f64,
    g: &ControllerGains,
    frozen: &RbfNetwork,
    z: &[f64],
) -> Result<Vector3<f64>> {
    Ok(feedback_terms(z1, z2, psi, g) + frozen.nn_output(z)?)
}

/// Writes `W_k' = -Gamma_k (S z2_k + sigma_k W_k)` for every channel given a
/// precomputed regressor `s`.
pub fn adaptation_derivative_into(
    weights: [&[f64]; CHANNELS],
    s: &[f64],
    z2: &Vector3<f64>,
    g: &ControllerGains,
    out: [&mut [f64]; CHANNELS],
) {
    for (k, (o, w)) in out.into_iter().zip(weights).enumerate() {
        let (gamma, sigma, e) = (g.gamma[k], g.sigma[k], z2[k]);
        for ((o, sj), wj) in o.iter_mut().zip(s).zip(w) {
            *o = -gamma * (sj * e + sigma * wj);
        }
    }
}

/// Weight derivatives of every channel at input `z`.
pub fn adaptation_derivative(
    net: &RbfNetwork,
    z: &[f64],
    z2: &Vector3<f64>,
    g: &ControllerGains,
) -> Result<ChannelWeights> {
    let n = net.n_nodes();
    let mut s = alloc::vec![0.0; n];
    net.regressor_into(z, &mut s)?;
    let mut out: ChannelWeights = core::array::from_fn(|_| alloc::vec![0.0; n]);
    let [a, b, c] = &mut out;
    let w = &net.weights;
    adaptation_derivative_into([&w[0], &w[1], &w[2]], &s, z2, g, [a, b, c]);
    Ok(out)
}

/// `F = M alpha' + C(nu) nu + D(nu) nu + g(eta) + Delta(chi)`, the function
/// the network is meant to learn. Uses true parameters, so it is only ever
/// called on the simulator side.
pub fn true_nonlinearity_oracle(vehicle: &Vehicle, s: &AgentState, alpha_dot: &Vector3<f64>) -> Vector3<f64> {
    vehicle.mass() * alpha_dot + vehicle.passive_forces(s)
}
