//! Planar 3-DOF vehicle model and the virtual leader exosystem.
//!
//! Pose `eta = [x, y, psi]` lives in the earth frame, velocity
//! `nu = [u, v, r]` in the body frame. Heading is kept unwrapped.

use libm::{cos, fabs, sin};
use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::{Error, Result};

/// Deterministic unmodelled dynamics, one formula per vehicle of the
/// reference group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uncertainty {
    /// `0`
    Zero,
    /// `[0.2u^2 + 0.3v, -0.95, 0.33|r|]`
    Quadratic,
    /// `[-0.58 + cos v, 0.23r^3, 0.74u^2]`
    Trigonometric,
    /// `[-0.31, 0, 0.38u^2 + v^3]`
    Cubic,
    /// `[sin v, cos(u + r), -0.65]`
    Oscillatory,
}

impl Uncertainty {
    pub fn from_id(id: u32) -> Result<Self> {
        Ok(match id {
            1 => Self::Zero,
            2 => Self::Quadratic,
            3 => Self::Trigonometric,
            4 => Self::Cubic,
            5 => Self::Oscillatory,
            other => return Err(Error::UnknownUncertaintyId(other)),
        })
    }

    pub fn id(self) -> u32 {
        match self {
            Self::Zero => 1,
            Self::Quadratic => 2,
            Self::Trigonometric => 3,
            Self::Cubic => 4,
            Self::Oscillatory => 5,
        }
    }

    /// Evaluates the uncertainty at `chi = [eta, nu]`.
    pub fn eval(self, nu: &Vector3<f64>) -> Vector3<f64> {
        let (u, v, r) = (nu[0], nu[1], nu[2]);
        match self {
            Self::Zero => Vector3::zeros(),
            Self::Quadratic => Vector3::new(0.2 * u * u + 0.3 * v, -0.95, 0.33 * fabs(r)),
            Self::Trigonometric => Vector3::new(-0.58 + cos(v), 0.23 * r * r * r, 0.74 * u * u),
            Self::Cubic => Vector3::new(-0.31, 0.0, 0.38 * u * u + v * v * v),
            Self::Oscillatory => Vector3::new(sin(v), cos(u + r), -0.65),
        }
    }
}

/// Which Coriolis matrix to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoriolisForm {
    /// Entries as published, with `C32 = -m11 u`.
    #[default]
    Printed,
    /// Skew-symmetric variant, `C32 = +m11 u`.
    SkewSymmetric,
}

/// Physical and hydrodynamic constants of one vehicle.
///
/// Added-mass and damping coefficients follow the usual sign convention
/// (negative numbers for dissipative terms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub mass: f64,
    pub inertia_z: f64,
    pub x_g: f64,
    pub x_udot: f64,
    pub y_vdot: f64,
    pub y_rdot: f64,
    pub n_rdot: f64,
    pub x_u: f64,
    pub y_v: f64,
    pub y_r: f64,
    pub n_v: f64,
    pub n_r: f64,
    pub x_uu: f64,
    pub y_vv: f64,
    pub y_rv: f64,
    pub y_vr: f64,
    pub y_rr: f64,
    pub n_vv: f64,
    pub n_rv: f64,
    pub n_vr: f64,
    pub n_rr: f64,
    pub uncertainty: Uncertainty,
    pub coriolis: CoriolisForm,
}

impl VehicleParams {
    /// Rigid body with no hydrodynamics at all.
    pub fn rigid(mass: f64, inertia_z: f64) -> Self {
        Self {
            mass,
            inertia_z,
            x_g: 0.0,
            x_udot: 0.0,
            y_vdot: 0.0,
            y_rdot: 0.0,
            n_rdot: 0.0,
            x_u: 0.0,
            y_v: 0.0,
            y_r: 0.0,
            n_v: 0.0,
            n_r: 0.0,
            x_uu: 0.0,
            y_vv: 0.0,
            y_rv: 0.0,
            y_vr: 0.0,
            y_rr: 0.0,
            n_vv: 0.0,
            n_rv: 0.0,
            n_vr: 0.0,
            n_rr: 0.0,
            uncertainty: Uncertainty::Zero,
            coriolis: CoriolisForm::Printed,
        }
    }
}

/// Pose and body velocity of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentState {
    pub eta: Vector3<f64>,
    pub nu: Vector3<f64>,
}

impl AgentState {
    pub fn new(eta: Vector3<f64>, nu: Vector3<f64>) -> Self {
        Self { eta, nu }
    }

    /// `chi = [eta, nu]`.
    pub fn chi(&self) -> Vector6<f64> {
        Vector6::new(self.eta[0], self.eta[1], self.eta[2], self.nu[0], self.nu[1], self.nu[2])
    }
}

/// Time derivative of an [`AgentState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentDerivative {
    pub eta_dot: Vector3<f64>,
    pub nu_dot: Vector3<f64>,
}

/// Restoring forces `g(eta)`.
pub type RestoringFn = fn(&Vector3<f64>) -> Vector3<f64>;

/// Neutrally buoyant vehicle in the horizontal plane.
pub fn no_restoring(_eta: &Vector3<f64>) -> Vector3<f64> {
    Vector3::zeros()
}

/// Inertia matrix including added mass.
pub fn mass_matrix(p: &VehicleParams) -> Result<Matrix3<f64>> {
    let m11 = p.mass - p.x_udot;
    let m22 = p.mass - p.y_vdot;
    let m23 = p.mass * p.x_g - p.y_rdot;
    let m33 = p.inertia_z - p.n_rdot;
    let m = Matrix3::new(m11, 0.0, 0.0, 0.0, m22, m23, 0.0, m23, m33);
    let finite = m.iter().all(|x| x.is_finite());
    if !finite || m.symmetric_eigenvalues().iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite { what: "mass matrix" });
    }
    Ok(m)
}

fn coriolis_from_mass(m: &Matrix3<f64>, form: CoriolisForm, nu: &Vector3<f64>) -> Matrix3<f64> {
    let (u, v, r) = (nu[0], nu[1], nu[2]);
    let (m11, m22, m23) = (m[(0, 0)], m[(1, 1)], m[(1, 2)]);
    let c13 = -m22 * v - m23 * r;
    let c23 = -m11 * u;
    let c32 = match form {
        CoriolisForm::Printed => -m11 * u,
        CoriolisForm::SkewSymmetric => m11 * u,
    };
    Matrix3::new(0.0, 0.0, c13, 0.0, 0.0, c23, -c13, c32, 0.0)
}

/// Coriolis and centripetal matrix `C(nu)`.
pub fn coriolis_matrix(p: &VehicleParams, nu: &Vector3<f64>) -> Result<Matrix3<f64>> {
    Ok(coriolis_from_mass(&mass_matrix(p)?, p.coriolis, nu))
}

/// Linear plus quadratic damping `D(nu)`.
pub fn damping_matrix(p: &VehicleParams, nu: &Vector3<f64>) -> Matrix3<f64> {
    let (au, av, ar) = (fabs(nu[0]), fabs(nu[1]), fabs(nu[2]));
    let d11 = -(p.x_u + p.x_uu * au);
    let d22 = -(p.y_v + p.y_vv * av + p.y_rv * ar);
    let d23 = -(p.y_r + p.y_vr * av + p.y_rr * ar);
    let d32 = -(p.n_v + p.n_vv * av + p.n_rv * ar);
    let d33 = -(p.n_r + p.n_vr * av + p.n_rr * ar);
    Matrix3::new(d11, 0.0, 0.0, 0.0, d22, d23, 0.0, d32, d33)
}

/// Unmodelled dynamics `Delta(chi)`.
pub fn uncertainty(p: &VehicleParams, state: &AgentState) -> Vector3<f64> {
    p.uncertainty.eval(&state.nu)
}

/// Body-to-earth rotation `J(psi)`.
pub fn rotation(psi: f64) -> Matrix3<f64> {
    let (s, c) = (sin(psi), cos(psi));
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `dJ/dt = dJ/dpsi * r`.
pub fn rotation_rate(psi: f64, r: f64) -> Matrix3<f64> {
    let (s, c) = (sin(psi), cos(psi));
    Matrix3::new(-s * r, c * r, 0.0, -c * r, -s * r, 0.0, 0.0, 0.0, 0.0)
}

/// A vehicle with its constant inertia data factored once.
#[derive(Debug, Clone)]
pub struct Vehicle {
    params: VehicleParams,
    mass: Matrix3<f64>,
    mass_inv: Matrix3<f64>,
    restoring: RestoringFn,
}

impl Vehicle {
    pub fn new(params: VehicleParams) -> Result<Self> {
        Self::with_restoring(params, no_restoring)
    }

    pub fn with_restoring(params: VehicleParams, restoring: RestoringFn) -> Result<Self> {
        let mass = mass_matrix(&params)?;
        let mass_inv = mass
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite { what: "mass matrix" })?;
        Ok(Self { params, mass, mass_inv, restoring })
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn mass(&self) -> &Matrix3<f64> {
        &self.mass
    }

    pub fn coriolis(&self, nu: &Vector3<f64>) -> Matrix3<f64> {
        coriolis_from_mass(&self.mass, self.params.coriolis, nu)
    }

    /// `C(nu) nu + D(nu) nu + g(eta) + Delta(chi)`: every force the
    /// actuators have to overcome at the current state.
    pub fn passive_forces(&self, s: &AgentState) -> Vector3<f64> {
        let nu = &s.nu;
        self.coriolis(nu) * nu
            + damping_matrix(&self.params, nu) * nu
            + (self.restoring)(&s.eta)
            + uncertainty(&self.params, s)
    }

    pub fn derivative(&self, s: &AgentState, tau: &Vector3<f64>) -> AgentDerivative {
        AgentDerivative {
            eta_dot: rotation(s.eta[2]) * s.nu,
            nu_dot: self.mass_inv * (tau - self.passive_forces(s)),
        }
    }
}

/// `eta_dot = J(psi) nu`, `nu_dot = M^-1 (tau - C nu - D nu - g - Delta)`.
pub fn vehicle_derivative(
    p: &VehicleParams,
    s: &AgentState,
    tau: &Vector3<f64>,
) -> Result<AgentDerivative> {
    Ok(Vehicle::new(*p)?.derivative(s, tau))
}

/// Linear exosystem `chi0_dot = A0 chi0` generating the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderModel {
    pub a0: Matrix6<f64>,
    pub chi0: Vector6<f64>,
}

impl LeaderModel {
    /// The block oscillator `[[0, B], [-B, 0]]` with `B = diag(1, -1, 1)`,
    /// started at `[0, a, 0, a, 0, a]`. Its solution is
    /// `a [sin t, cos t, sin t, cos t, sin t, cos t]`.
    pub fn orbit(amplitude: f64) -> Self {
        Self {
            a0: orbit_matrix(),
            chi0: Vector6::new(0.0, amplitude, 0.0, amplitude, 0.0, amplitude),
        }
    }

    pub fn eta0(&self) -> Vector3<f64> {
        self.chi0.fixed_rows::<3>(0).into_owned()
    }

    /// Whether every eigenvalue of `A0` has `|Re| <= tol`.
    pub fn is_marginally_stable(&self, tol: f64) -> bool {
        self.a0.complex_eigenvalues().iter().all(|l| fabs(l.re) <= tol)
    }
}

/// `[[0, B], [-B, 0]]` with `B = diag(1, -1, 1)`.
pub fn orbit_matrix() -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    for (k, b) in [1.0, -1.0, 1.0].into_iter().enumerate() {
        a[(k, k + 3)] = b;
        a[(k + 3, k)] = -b;
    }
    a
}

pub fn leader_derivative(l: &LeaderModel) -> Vector6<f64> {
    l.a0 * l.chi0
}

/// Exact solution of [`LeaderModel::orbit`] at time `t`.
pub fn leader_closed_form(amplitude: f64, t: f64) -> Vector6<f64> {
    let (s, c) = (amplitude * sin(t), amplitude * cos(t));
    Vector6::new(s, c, s, c, s, c)
}

/// Closed form of the reference orbit with amplitude 80.
pub fn leader_closed_form_default(t: f64) -> Vector6<f64> {
    leader_closed_form(80.0, t)
}
