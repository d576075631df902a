//! Coupled simulation of the leader, the vehicles, their observers and the
//! adaptive weights, integrated as one state vector with fixed-step RK4.
//!
//! Global state layout (version [`STATE_LAYOUT_VERSION`]):
//!
//! ```text
//! [ chi0 (6) | per agent: eta, nu (6) | per agent: chi_hat (6), vec A_hat (36, column-major)
//!   | per agent: W_1, W_2, W_3 (n_nodes each, adaptive mode only) ]
//! ```
//!
//! Every derivative evaluation runs three passes: observer derivatives for
//! all agents, then their second derivatives, then controller, plant and
//! weight derivatives per agent.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix6, Vector3, Vector6};

use crate::controller::{
    adaptation_derivative_into, alpha_dot, backstepping_errors, feedback_terms, true_nonlinearity_oracle,
    ControllerGains, Reference,
};
use crate::dynamics::{AgentState, LeaderModel, RestoringFn, Vehicle, VehicleParams, no_restoring};
use crate::estimator::{observer_derivative, observer_second_derivative, ObserverDerivative, ObserverGains, ObserverState};
use crate::graph::{has_leader_rooted_spanning_tree, Topology};
use crate::integrate::Rk4;
use crate::rbf::{average_weights, build_grid_network, dot, ChannelWeights, RbfNetwork, WeightSnapshot, CHANNELS};
use crate::{Error, Result};

pub const STATE_LAYOUT_VERSION: u32 = 1;

const LEADER_DIM: usize = 6;
const PLANT_DIM: usize = 6;
const OBSERVER_DIM: usize = 42;

/// What the network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NnInput {
    /// `Z = nu` (3-D lattice).
    #[default]
    Velocity,
    /// `Z = [eta, nu]` (6-D lattice).
    FullState,
}

impl NnInput {
    pub fn dim(self) -> usize {
        match self {
            Self::Velocity => 3,
            Self::FullState => 6,
        }
    }

    /// Network input at state `s`, written into the first `dim()` entries.
    pub fn features(self, s: &AgentState) -> [f64; 6] {
        match self {
            Self::Velocity => [s.nu[0], s.nu[1], s.nu[2], 0.0, 0.0, 0.0],
            Self::FullState => [s.eta[0], s.eta[1], s.eta[2], s.nu[0], s.nu[1], s.nu[2]],
        }
    }
}

/// Lattice description shared by every agent's network.
#[derive(Debug, Clone, PartialEq)]
pub struct NnSpec {
    pub bounds: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
    pub width: f64,
    pub input: NnInput,
}

impl NnSpec {
    pub fn build(&self) -> Result<RbfNetwork> {
        if self.bounds.len() != self.input.dim() {
            return Err(Error::DimensionMismatch { expected: self.input.dim(), got: self.bounds.len() });
        }
        build_grid_network(&self.bounds, &self.counts, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMode {
    /// Online weight adaptation, starting from zero weights.
    Adaptive,
    /// Constant consolidated weights, one network per agent.
    Pretrained(Vec<RbfNetwork>),
    /// Exact compensation with the true `F` in place of the network. A
    /// baseline, not a learning controller.
    ModelBased,
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub params: VehicleParams,
    pub restoring: RestoringFn,
    pub initial: AgentState,
    pub initial_observer: ObserverState,
    /// Desired offset `d*` from the leader pose.
    pub offset: Vector3<f64>,
    pub observer_gains: ObserverGains,
    pub controller_gains: ControllerGains,
}

impl AgentConfig {
    pub fn new(
        params: VehicleParams,
        initial: AgentState,
        offset: Vector3<f64>,
        observer_gains: ObserverGains,
        controller_gains: ControllerGains,
    ) -> Self {
        Self {
            params,
            restoring: no_restoring,
            initial,
            initial_observer: ObserverState::default(),
            offset,
            observer_gains,
            controller_gains,
        }
    }
}

impl PartialEq for AgentConfig {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && core::ptr::fn_addr_eq(self.restoring, other.restoring)
            && self.initial == other.initial
            && self.initial_observer == other.initial_observer
            && self.offset == other.offset
            && self.observer_gains == other.observer_gains
            && self.controller_gains == other.controller_gains
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub topology: Topology,
    pub leader: LeaderModel,
    pub agents: Vec<AgentConfig>,
    pub nn: NnSpec,
    pub mode: ControlMode,
    pub dt: f64,
    pub t_end: f64,
    /// Record every `decimation`-th integration step.
    pub decimation: usize,
    /// Keep full weight vectors every `weight_snapshot_every`-th record.
    pub weight_snapshot_every: usize,
    /// Freeze the vehicles and controllers, integrating only leader and
    /// observers.
    pub observers_only: bool,
    /// Unused: the simulation is deterministic.
    pub seed: u64,
}

/// Non-fatal findings about a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warning {
    /// Some follower cannot be reached from the leader.
    NoRootedSpanningTree,
    /// `A0` has eigenvalues off the imaginary axis.
    LeaderNotMarginallyStable,
    /// `lambda_min(K2) <= 2 lambda_max(K1)` for this agent.
    GainRelationViolated { agent: usize },
}

impl SimConfig {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_steps(&self) -> usize {
        libm::round(self.t_end / self.dt) as usize
    }

    /// Checks hard constraints and returns soft findings.
    pub fn validate(&self) -> Result<Vec<Warning>> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig { field: "dt", reason: "must be positive" });
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidConfig { field: "t_end", reason: "must be non-negative" });
        }
        if self.decimation == 0 {
            return Err(Error::InvalidConfig { field: "decimation", reason: "must be at least 1" });
        }
        if self.weight_snapshot_every == 0 {
            return Err(Error::InvalidConfig { field: "weight_snapshot_every", reason: "must be at least 1" });
        }
        if self.agents.len() != self.topology.n_followers() {
            return Err(Error::DimensionMismatch { expected: self.topology.n_followers(), got: self.agents.len() });
        }
        let lattice = self.nn.build()?;
        if let ControlMode::Pretrained(nets) = &self.mode {
            if nets.len() != self.agents.len() {
                return Err(Error::DimensionMismatch { expected: self.agents.len(), got: nets.len() });
            }
            for net in nets {
                if net.input_dim() != self.nn.input.dim() {
                    return Err(Error::DimensionMismatch { expected: self.nn.input.dim(), got: net.input_dim() });
                }
            }
        }
        let _ = lattice;
        for a in &self.agents {
            Vehicle::new(a.params)?;
        }
        let mut warnings = Vec::new();
        if !has_leader_rooted_spanning_tree(&self.topology) {
            warnings.push(Warning::NoRootedSpanningTree);
        }
        if !self.leader.is_marginally_stable(1e-9) {
            warnings.push(Warning::LeaderNotMarginallyStable);
        }
        for (agent, a) in self.agents.iter().enumerate() {
            if !a.controller_gains.satisfies_gain_relation() {
                warnings.push(Warning::GainRelationViolated { agent });
            }
        }
        Ok(warnings)
    }
}

/// Recorded history of one agent, on the trace's time grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentTrace {
    pub eta: Vec<Vector3<f64>>,
    pub nu: Vec<Vector3<f64>>,
    pub chi_hat: Vec<Vector6<f64>>,
    /// `|A_hat - A0|_F`.
    pub a_hat_error: Vec<f64>,
    pub z1: Vec<Vector3<f64>>,
    pub z2: Vec<Vector3<f64>>,
    pub tau: Vec<Vector3<f64>>,
    /// Ground-truth nonlinearity `F` along the run.
    pub oracle: Vec<Vector3<f64>>,
    /// Network output `W(t)^T S(Z(t))` with the weights in use.
    pub nn_output: Vec<Vector3<f64>>,
    pub weight_norms: Vec<[f64; CHANNELS]>,
    pub weight_snapshots: Vec<WeightSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub leader: Vec<Vector6<f64>>,
    pub agents: Vec<AgentTrace>,
    /// Networks at the end of the run (frozen ones in pretrained mode).
    pub final_networks: Vec<RbfNetwork>,
    pub input: NnInput,
    /// Number of per-agent weight-law evaluations performed.
    pub adaptation_evaluations: u64,
    pub warnings: Vec<Warning>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `|chi_hat_i - chi0|` series for agent `i` (0-based).
    pub fn state_error_series(&self, agent: usize) -> Vec<f64> {
        self.agents[agent].chi_hat.iter().zip(&self.leader).map(|(c, l)| (c - l).norm()).collect()
    }

    /// Zero-weight lattice of the run.
    pub fn lattice(&self) -> RbfNetwork {
        let net = &self.final_networks[0];
        let n = net.n_nodes();
        net.with_weights(core::array::from_fn(|_| vec![0.0; n])).expect("same size")
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct AgentSample {
    z1: Vector3<f64>,
    z2: Vector3<f64>,
    tau: Vector3<f64>,
    oracle: Vector3<f64>,
    nn_output: Vector3<f64>,
}

struct Layout {
    n: usize,
    n_nodes: usize,
    adaptive: bool,
}

impl Layout {
    fn plant(&self, i: usize) -> usize {
        LEADER_DIM + PLANT_DIM * i
    }
    fn observer(&self, i: usize) -> usize {
        LEADER_DIM + PLANT_DIM * self.n + OBSERVER_DIM * i
    }
    fn weights(&self, i: usize, k: usize) -> usize {
        LEADER_DIM + (PLANT_DIM + OBSERVER_DIM) * self.n + (i * CHANNELS + k) * self.n_nodes
    }
    fn dim(&self) -> usize {
        let w = if self.adaptive { CHANNELS * self.n_nodes * self.n } else { 0 };
        LEADER_DIM + (PLANT_DIM + OBSERVER_DIM) * self.n + w
    }
}

fn read_agent(x: &[f64], at: usize) -> AgentState {
    AgentState::new(Vector3::from_column_slice(&x[at..at + 3]), Vector3::from_column_slice(&x[at + 3..at + 6]))
}

fn read_observer(x: &[f64], at: usize) -> ObserverState {
    ObserverState {
        chi_hat: Vector6::from_column_slice(&x[at..at + 6]),
        a_hat: Matrix6::from_column_slice(&x[at + 6..at + OBSERVER_DIM]),
    }
}

/// Right-hand side of the coupled system with preallocated scratch space.
struct System<'a> {
    cfg: &'a SimConfig,
    layout: Layout,
    vehicles: Vec<Vehicle>,
    lattice: RbfNetwork,
    nodes: Vec<ObserverState>,
    firsts: Vec<ObserverDerivative>,
    chi_dots: Vec<Vector6<f64>>,
    regressor: Vec<f64>,
    adaptation_evaluations: u64,
}

impl<'a> System<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        let lattice = cfg.nn.build()?;
        let n = cfg.n_agents();
        let n_nodes = match &cfg.mode {
            ControlMode::Adaptive => lattice.n_nodes(),
            ControlMode::Pretrained(nets) => nets.iter().map(|n| n.n_nodes()).max().unwrap_or(0),
            ControlMode::ModelBased => 0,
        };
        let layout = Layout { n, n_nodes: lattice.n_nodes(), adaptive: matches!(cfg.mode, ControlMode::Adaptive) };
        let vehicles =
            cfg.agents.iter().map(|a| Vehicle::with_restoring(a.params, a.restoring)).collect::<Result<_>>()?;
        let zero = ObserverDerivative { chi_hat_dot: Vector6::zeros(), a_hat_dot: Matrix6::zeros() };
        Ok(Self {
            cfg,
            layout,
            vehicles,
            lattice,
            nodes: vec![ObserverState::default(); n + 1],
            firsts: vec![zero; n + 1],
            chi_dots: vec![Vector6::zeros(); n + 1],
            regressor: vec![0.0; n_nodes],
            adaptation_evaluations: 0,
        })
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.layout.dim()];
        x[..LEADER_DIM].copy_from_slice(self.cfg.leader.chi0.as_slice());
        for (i, a) in self.cfg.agents.iter().enumerate() {
            let p = self.layout.plant(i);
            x[p..p + 3].copy_from_slice(a.initial.eta.as_slice());
            x[p + 3..p + 6].copy_from_slice(a.initial.nu.as_slice());
            let o = self.layout.observer(i);
            x[o..o + 6].copy_from_slice(a.initial_observer.chi_hat.as_slice());
            x[o + 6..o + OBSERVER_DIM].copy_from_slice(a.initial_observer.a_hat.as_slice());
        }
        x
    }

    fn eval(&mut self, x: &[f64], dx: &mut [f64], mut record: Option<&mut [AgentSample]>) -> Result<()> {
        let cfg = self.cfg;
        let layout = &self.layout;
        let n = layout.n;
        let a0 = cfg.leader.a0;
        let chi0 = Vector6::from_column_slice(&x[..LEADER_DIM]);
        let chi0_dot = a0 * chi0;
        dx[..LEADER_DIM].copy_from_slice(chi0_dot.as_slice());

        self.nodes[0] = ObserverState { chi_hat: chi0, a_hat: a0 };
        for i in 0..n {
            self.nodes[i + 1] = read_observer(x, layout.observer(i));
        }

        // pass 1: observer derivatives
        self.chi_dots[0] = chi0_dot;
        for i in 0..n {
            let d = observer_derivative(i + 1, &self.nodes[i + 1], &self.nodes, &cfg.topology, &cfg.agents[i].observer_gains)?;
            let o = layout.observer(i);
            dx[o..o + 6].copy_from_slice(d.chi_hat_dot.as_slice());
            dx[o + 6..o + OBSERVER_DIM].copy_from_slice(d.a_hat_dot.as_slice());
            self.firsts[i + 1] = d;
            self.chi_dots[i + 1] = d.chi_hat_dot;
        }

        if cfg.observers_only {
            for i in 0..n {
                let p = layout.plant(i);
                dx[p..p + PLANT_DIM].fill(0.0);
            }
            if layout.adaptive {
                let w0 = layout.weights(0, 0);
                dx[w0..].fill(0.0);
            }
            return Ok(());
        }

        for i in 0..n {
            // pass 2: this agent's second derivative of its own estimate
            let agent = &cfg.agents[i];
            let chi_ddot = observer_second_derivative(
                i + 1,
                &self.nodes[i + 1],
                &self.firsts[i + 1],
                &self.chi_dots,
                &cfg.topology,
                &agent.observer_gains,
            )?;

            // pass 3: controller, plant, weights
            let g = &agent.controller_gains;
            let s = read_agent(x, layout.plant(i));
            let own = &self.nodes[i + 1];
            let reference = Reference {
                eta: own.chi_hat.fixed_rows::<3>(0) + agent.offset,
                eta_dot: self.chi_dots[i + 1].fixed_rows::<3>(0).into_owned(),
                eta_ddot: chi_ddot.fixed_rows::<3>(0).into_owned(),
            };
            let errs = backstepping_errors(&s, &reference.eta, &reference.eta_dot, g);
            let features = cfg.nn.input.features(&s);
            let z = &features[..cfg.nn.input.dim()];

            let nn = match &cfg.mode {
                ControlMode::Adaptive => {
                    self.lattice.regressor_into(z, &mut self.regressor)?;
                    let s_vec = &self.regressor;
                    let w = |k: usize| &x[layout.weights(i, k)..layout.weights(i, k) + layout.n_nodes];
                    let out = Vector3::new(dot(w(0), s_vec), dot(w(1), s_vec), dot(w(2), s_vec));
                    let base = layout.weights(i, 0);
                    let (d0, rest) = dx[base..base + CHANNELS * layout.n_nodes].split_at_mut(layout.n_nodes);
                    let (d1, d2) = rest.split_at_mut(layout.n_nodes);
                    adaptation_derivative_into([w(0), w(1), w(2)], s_vec, &errs.z2, g, [d0, d1, d2]);
                    self.adaptation_evaluations += 1;
                    out
                }
                ControlMode::Pretrained(nets) => {
                    let net = &nets[i];
                    let buf = &mut self.regressor[..net.n_nodes()];
                    net.regressor_into(z, buf)?;
                    net.output_from_regressor(buf)
                }
                ControlMode::ModelBased => {
                    true_nonlinearity_oracle(&self.vehicles[i], &s, &alpha_dot(&s, &reference, g))
                }
            };
            let tau = feedback_terms(&errs.z1, &errs.z2, s.eta[2], g) + nn;
            let d = self.vehicles[i].derivative(&s, &tau);
            let p = layout.plant(i);
            dx[p..p + 3].copy_from_slice(d.eta_dot.as_slice());
            dx[p + 3..p + 6].copy_from_slice(d.nu_dot.as_slice());

            if let Some(rec) = record.as_deref_mut() {
                let ad = alpha_dot(&s, &reference, g);
                rec[i] = AgentSample {
                    z1: errs.z1,
                    z2: errs.z2,
                    tau,
                    oracle: true_nonlinearity_oracle(&self.vehicles[i], &s, &ad),
                    nn_output: nn,
                };
            }
        }
        Ok(())
    }

    fn current_networks(&self, x: &[f64]) -> Vec<RbfNetwork> {
        match &self.cfg.mode {
            ControlMode::Adaptive => (0..self.layout.n)
                .map(|i| {
                    let w: ChannelWeights = core::array::from_fn(|k| {
                        let at = self.layout.weights(i, k);
                        x[at..at + self.layout.n_nodes].to_vec()
                    });
                    self.lattice.with_weights(w).expect("lattice size")
                })
                .collect(),
            ControlMode::Pretrained(nets) => nets.clone(),
            ControlMode::ModelBased => vec![self.lattice.clone(); self.layout.n],
        }
    }
}

struct Recorder {
    trace: SimTrace,
    samples: Vec<AgentSample>,
    dx: Vec<f64>,
    snapshot_every: usize,
    records: usize,
}

impl Recorder {
    fn record(&mut self, sys: &mut System<'_>, t: f64, x: &[f64]) -> Result<()> {
        sys.eval(x, &mut self.dx, Some(&mut self.samples))?;
        let layout = &sys.layout;
        let leader = Vector6::from_column_slice(&x[..LEADER_DIM]);
        self.trace.times.push(t);
        self.trace.leader.push(leader);
        let take_snapshot = layout.adaptive && self.records % self.snapshot_every == 0;
        for (i, tr) in self.trace.agents.iter_mut().enumerate() {
            let s = read_agent(x, layout.plant(i));
            let o = read_observer(x, layout.observer(i));
            let smp = self.samples[i];
            tr.eta.push(s.eta);
            tr.nu.push(s.nu);
            tr.chi_hat.push(o.chi_hat);
            tr.a_hat_error.push((o.a_hat - sys.cfg.leader.a0).norm());
            tr.z1.push(smp.z1);
            tr.z2.push(smp.z2);
            tr.tau.push(smp.tau);
            tr.oracle.push(smp.oracle);
            tr.nn_output.push(smp.nn_output);
            let norms = if layout.adaptive {
                core::array::from_fn(|k| {
                    let at = layout.weights(i, k);
                    let w = &x[at..at + layout.n_nodes];
                    libm::sqrt(dot(w, w))
                })
            } else {
                match &sys.cfg.mode {
                    ControlMode::Pretrained(nets) => nets[i].weight_norms(),
                    _ => [0.0; CHANNELS],
                }
            };
            tr.weight_norms.push(norms);
            if take_snapshot {
                let weights = core::array::from_fn(|k| {
                    let at = layout.weights(i, k);
                    x[at..at + layout.n_nodes].to_vec()
                });
                tr.weight_snapshots.push(WeightSnapshot { time: t, weights });
            }
        }
        self.records += 1;
        Ok(())
    }
}

/// Integrates the configured system from `t = 0` to `t_end`.
pub fn run_scenario(cfg: &SimConfig) -> Result<SimTrace> {
    let warnings = cfg.validate()?;
    let mut sys = System::new(cfg)?;
    let mut x = sys.initial_state();
    let dim = x.len();
    let mut rk = Rk4::new(dim);
    let mut rec = Recorder {
        trace: SimTrace {
            times: Vec::new(),
            leader: Vec::new(),
            agents: vec![AgentTrace::default(); cfg.n_agents()],
            final_networks: Vec::new(),
            input: cfg.nn.input,
            adaptation_evaluations: 0,
            warnings,
        },
        samples: vec![AgentSample::default(); cfg.n_agents()],
        dx: vec![0.0; dim],
        snapshot_every: cfg.weight_snapshot_every,
        records: 0,
    };
    rec.record(&mut sys, 0.0, &x)?;
    let steps = cfg.n_steps();
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let mut f = |state: &[f64], d: &mut [f64]| sys.eval(state, d, None);
        rk.step(&mut f, t, &mut x, cfg.dt)?;
        if (k + 1) % cfg.decimation == 0 {
            rec.record(&mut sys, (k + 1) as f64 * cfg.dt, &x)?;
        }
    }
    rec.trace.final_networks = sys.current_networks(&x);
    rec.trace.adaptation_evaluations = sys.adaptation_evaluations;
    Ok(rec.trace)
}

/// Consolidates each agent's recorded weights over `[t_a, t_b]` into
/// constant networks.
pub fn learned_networks(trace: &SimTrace, t_a: f64, t_b: f64) -> Result<Vec<RbfNetwork>> {
    let lattice = trace.lattice();
    trace
        .agents
        .iter()
        .map(|a| lattice.with_weights(average_weights(&a.weight_snapshots, t_a, t_b)?))
        .collect()
}
