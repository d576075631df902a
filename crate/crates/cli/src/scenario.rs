//! TOML scenario files and the built-in presets.
//!
//! A file may start with `preset = "<name>"`. The named preset is loaded
//! first and the file is merged over it: tables merge key by key, every
//! other value (arrays included, so `[[agents]]`) replaces the preset's.
//! The grammar is documented in the crate README.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use formation_core::controller::ControllerGains;
use formation_core::dynamics::{AgentState, CoriolisForm, LeaderModel, Uncertainty, Vehicle, VehicleParams};
use formation_core::estimator::{ObserverGains, ObserverState};
use formation_core::graph::build_topology;
use formation_core::rbf::CHANNELS;
use formation_core::sim::{AgentConfig, ControlMode, NnInput, NnSpec, SimConfig};
use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};
use crate::weights_file;

pub const PRESETS: [(&str, &str); 2] = [
    ("paper-5auv", include_str!("../presets/paper-5auv.toml")),
    ("desk-5auv", include_str!("../presets/desk-5auv.toml")),
];

const MAX_PRESET_DEPTH: usize = 8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader: Option<LeaderDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<ObserverDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nn: Option<NnDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vehicles: BTreeMap<String, VehicleDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentDoc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub weights: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
}

/// A 3x3 gain written either as its diagonal or as full rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainMatrix {
    Diagonal(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

/// A per-channel gain written once for all channels or per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelGain {
    All(f64),
    Each(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<GainMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<GainMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<ChannelGain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<ChannelGain>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    /// `adaptive` (default), `pretrained` or `model-based`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(flatten)]
    pub gains: GainsDoc,
    /// Prefix of the per-agent weight files, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_path: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnDoc {
    /// `nu` (default, Z = [u, v, r]) or `chi` (Z = [eta, nu]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decimation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_snapshot_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observers_only: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Hydrodynamic coefficients. Omitted coefficients are zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleDoc {
    pub mass: Option<f64>,
    pub inertia_z: Option<f64>,
    #[serde(default)]
    pub x_g: f64,
    #[serde(default)]
    pub x_udot: f64,
    #[serde(default)]
    pub y_vdot: f64,
    #[serde(default)]
    pub y_rdot: f64,
    #[serde(default)]
    pub n_rdot: f64,
    #[serde(default)]
    pub x_u: f64,
    #[serde(default)]
    pub y_v: f64,
    #[serde(default)]
    pub y_r: f64,
    #[serde(default)]
    pub n_v: f64,
    #[serde(default)]
    pub n_r: f64,
    #[serde(default)]
    pub x_uu: f64,
    #[serde(default)]
    pub y_vv: f64,
    #[serde(default)]
    pub y_rv: f64,
    #[serde(default)]
    pub y_vr: f64,
    #[serde(default)]
    pub y_rr: f64,
    #[serde(default)]
    pub n_vv: f64,
    #[serde(default)]
    pub n_rv: f64,
    #[serde(default)]
    pub n_vr: f64,
    #[serde(default)]
    pub n_rr: f64,
    /// `printed` (default) or `skew`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coriolis: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDoc {
    /// Name of a `[vehicles.<name>]` table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<String>,
    /// Inline coefficients, used instead of `vehicle`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<VehicleDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty_id: Option<u32>,
    pub eta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_hat0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hat0: Option<Vec<Vec<f64>>>,
    /// Per-agent override of `[observer]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<ObserverDoc>,
    /// Per-agent override of the gains in `[controller]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<GainsDoc>,
}

fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_error(text: &str, e: toml::de::Error) -> CliError {
    let (line, column) = e.span().map_or((1, 1), |s| position(text, s.start));
    CliError::Parse { line, column, message: e.message().trim().to_string() }
}

/// Parses one document, checking its shape, without resolving presets.
fn parse_table(text: &str) -> Result<Table> {
    let table: Table = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    if table.is_empty() {
        return Err(CliError::Parse { line: 1, column: 1, message: "empty scenario".into() });
    }
    toml::from_str::<ScenarioDoc>(text).map_err(|e| parse_error(text, e))?;
    Ok(table)
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| CliError::UnknownPreset(name.into()))
}

fn resolve_presets(mut table: Table, depth: usize) -> Result<Table> {
    let Some(name) = table.remove("preset") else {
        return Ok(table);
    };
    let Value::String(name) = name else {
        return Err(CliError::validation("preset", "must be a string"));
    };
    if depth >= MAX_PRESET_DEPTH {
        return Err(CliError::validation("preset", format!("chain too deep at {name:?}")));
    }
    let base = parse_table(preset_text(&name)?)?;
    let mut base = resolve_presets(base, depth + 1)?;
    merge(&mut base, table);
    Ok(base)
}

/// Parses `text` and merges it over its preset, if any.
pub fn parse_doc(text: &str) -> Result<ScenarioDoc> {
    let table = resolve_presets(parse_table(text)?, 0)?;
    ScenarioDoc::deserialize(Value::Table(table)).map_err(|e| CliError::Parse { line: 1, column: 1, message: e.to_string() })
}

pub fn load_doc(path: &Path) -> Result<ScenarioDoc> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_doc(&text)
}

/// Reads and validates a scenario file. Relative weight paths resolve
/// against the file's directory.
pub fn parse_scenario(path: &Path) -> Result<SimConfig> {
    let doc = load_doc(path)?;
    resolve(&doc, path.parent().unwrap_or(Path::new(".")))
}

pub fn parse_str(text: &str, base_dir: &Path) -> Result<SimConfig> {
    resolve(&parse_doc(text)?, base_dir)
}

/// A preset by name with nothing overridden.
pub fn load_preset(name: &str) -> Result<SimConfig> {
    parse_str(&format!("preset = {name:?}\n"), Path::new("."))
}

fn required<T: Clone>(v: &Option<T>, field: &str) -> Result<T> {
    v.clone().ok_or_else(|| CliError::validation(field, "missing"))
}

fn vector<const N: usize>(v: &[f64], field: &str) -> Result<[f64; N]> {
    v.try_into().map_err(|_| CliError::DimensionMismatch { what: field.into(), expected: N, got: v.len() })
}

fn matrix6(rows: &[Vec<f64>], field: &str) -> Result<Matrix6<f64>> {
    if rows.len() != 6 {
        return Err(CliError::DimensionMismatch { what: field.into(), expected: 6, got: rows.len() });
    }
    let mut m = Matrix6::zeros();
    for (i, row) in rows.iter().enumerate() {
        let r: [f64; 6] = vector(row, &format!("{field}[{i}]"))?;
        for (j, x) in r.into_iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    Ok(m)
}

fn gain_matrix(g: &GainMatrix, field: &str) -> Result<Matrix3<f64>> {
    match g {
        GainMatrix::Diagonal(d) => Ok(Matrix3::from_diagonal(&Vector3::from(vector::<3>(d, field)?))),
        GainMatrix::Rows(rows) => {
            if rows.len() != 3 {
                return Err(CliError::DimensionMismatch { what: field.into(), expected: 3, got: rows.len() });
            }
            let mut m = Matrix3::zeros();
            for (i, row) in rows.iter().enumerate() {
                let r: [f64; 3] = vector(row, &format!("{field}[{i}]"))?;
                for (j, x) in r.into_iter().enumerate() {
                    m[(i, j)] = x;
                }
            }
            Ok(m)
        }
    }
}

fn channel_gain(g: &ChannelGain, field: &str) -> Result<[f64; CHANNELS]> {
    match g {
        ChannelGain::All(x) => Ok([*x; CHANNELS]),
        ChannelGain::Each(v) => vector(v, field),
    }
}

fn coriolis(s: &Option<String>, field: &str) -> Result<CoriolisForm> {
    match s.as_deref() {
        None | Some("printed") => Ok(CoriolisForm::Printed),
        Some("skew") => Ok(CoriolisForm::SkewSymmetric),
        Some(other) => Err(CliError::validation(field, format!("{other:?} is not printed|skew"))),
    }
}

fn vehicle_params(v: &VehicleDoc, uncertainty: Uncertainty, field: &str) -> Result<VehicleParams> {
    let p = VehicleParams {
        mass: required(&v.mass, &format!("{field}.mass"))?,
        inertia_z: required(&v.inertia_z, &format!("{field}.inertia_z"))?,
        x_g: v.x_g,
        x_udot: v.x_udot,
        y_vdot: v.y_vdot,
        y_rdot: v.y_rdot,
        n_rdot: v.n_rdot,
        x_u: v.x_u,
        y_v: v.y_v,
        y_r: v.y_r,
        n_v: v.n_v,
        n_r: v.n_r,
        x_uu: v.x_uu,
        y_vv: v.y_vv,
        y_rv: v.y_rv,
        y_vr: v.y_vr,
        y_rr: v.y_rr,
        n_vv: v.n_vv,
        n_rv: v.n_rv,
        n_vr: v.n_vr,
        n_rr: v.n_rr,
        uncertainty,
        coriolis: coriolis(&v.coriolis, &format!("{field}.coriolis"))?,
    };
    Vehicle::new(p).map_err(|e| CliError::validation(field, e))?;
    Ok(p)
}

fn vehicle_doc(p: &VehicleParams) -> VehicleDoc {
    VehicleDoc {
        mass: Some(p.mass),
        inertia_z: Some(p.inertia_z),
        x_g: p.x_g,
        x_udot: p.x_udot,
        y_vdot: p.y_vdot,
        y_rdot: p.y_rdot,
        n_rdot: p.n_rdot,
        x_u: p.x_u,
        y_v: p.y_v,
        y_r: p.y_r,
        n_v: p.n_v,
        n_r: p.n_r,
        x_uu: p.x_uu,
        y_vv: p.y_vv,
        y_rv: p.y_rv,
        y_vr: p.y_vr,
        y_rr: p.y_rr,
        n_vv: p.n_vv,
        n_rv: p.n_rv,
        n_vr: p.n_vr,
        n_rr: p.n_rr,
        coriolis: match p.coriolis {
            CoriolisForm::Printed => None,
            CoriolisForm::SkewSymmetric => Some("skew".into()),
        },
    }
}

fn merged_gains(global: &GainsDoc, local: Option<&GainsDoc>) -> GainsDoc {
    let local = local.cloned().unwrap_or_default();
    GainsDoc {
        k1: local.k1.or_else(|| global.k1.clone()),
        k2: local.k2.or_else(|| global.k2.clone()),
        gamma: local.gamma.or_else(|| global.gamma.clone()),
        sigma: local.sigma.or_else(|| global.sigma.clone()),
    }
}

fn controller_gains(g: &GainsDoc, field: &str) -> Result<ControllerGains> {
    let k1 = gain_matrix(&required(&g.k1, &format!("{field}.k1"))?, &format!("{field}.k1"))?;
    let k2 = gain_matrix(&required(&g.k2, &format!("{field}.k2"))?, &format!("{field}.k2"))?;
    let gamma = channel_gain(&required(&g.gamma, &format!("{field}.gamma"))?, &format!("{field}.gamma"))?;
    let sigma = match &g.sigma {
        Some(s) => channel_gain(s, &format!("{field}.sigma"))?,
        None => [0.0; CHANNELS],
    };
    ControllerGains::new(k1, k2, gamma, sigma).map_err(|e| {
        let which = match e {
            formation_core::Error::NotPositiveDefinite { what: "K1" } => "k1",
            formation_core::Error::NotPositiveDefinite { .. } => "k2",
            formation_core::Error::InvalidGain { field, .. } => field,
            _ => "gains",
        };
        CliError::validation(format!("{field}.{which}"), e)
    })
}

fn observer_gains(global: &ObserverDoc, local: Option<&ObserverDoc>, field: &str) -> Result<ObserverGains> {
    let b1 = local.and_then(|l| l.beta1).or(global.beta1);
    let b2 = local.and_then(|l| l.beta2).or(global.beta2);
    let beta1 = required(&b1, &format!("{field}.beta1"))?;
    let beta2 = required(&b2, &format!("{field}.beta2"))?;
    ObserverGains::new(beta1, beta2).map_err(|e| match e {
        formation_core::Error::InvalidGain { field: f, .. } => CliError::validation(format!("{field}.{f}"), e),
        e => CliError::validation(field, e),
    })
}

/// Turns a merged document into a validated configuration.
pub fn resolve(doc: &ScenarioDoc, base_dir: &Path) -> Result<SimConfig> {
    let topo_doc = required(&doc.topology, "topology")?;
    let weights = required(&topo_doc.weights, "topology.weights")?;
    let topology = build_topology(&weights).map_err(|e| match e {
        formation_core::Error::NonSquare { expected, len, .. } => {
            CliError::DimensionMismatch { what: "topology.weights".into(), expected, got: len }
        }
        e => CliError::validation("topology.weights", e),
    })?;
    let n = topology.n_followers();
    if doc.agents.len() != n {
        return Err(CliError::DimensionMismatch { what: "agents".into(), expected: n, got: doc.agents.len() });
    }

    let leader_doc = required(&doc.leader, "leader")?;
    let a0 = match &leader_doc.a0 {
        Some(rows) => matrix6(rows, "leader.a0")?,
        None => return Err(CliError::validation("leader.a0", "missing")),
    };
    let chi0 = Vector6::from(vector::<6>(&required(&leader_doc.chi0, "leader.chi0")?, "leader.chi0")?);
    let leader = LeaderModel { a0, chi0 };

    let obs = required(&doc.observer, "observer")?;
    let ctrl = required(&doc.controller, "controller")?;
    let nn_doc = required(&doc.nn, "nn")?;
    let sim = required(&doc.sim, "sim")?;

    let input = match nn_doc.input.as_deref() {
        None | Some("nu") => NnInput::Velocity,
        Some("chi") => NnInput::FullState,
        Some(other) => return Err(CliError::validation("nn.input", format!("{other:?} is not nu|chi"))),
    };
    let bounds = required(&nn_doc.bounds, "nn.bounds")?
        .iter()
        .enumerate()
        .map(|(k, b)| vector::<2>(b, &format!("nn.bounds[{k}]")).map(|[lo, hi]| (lo, hi)))
        .collect::<Result<Vec<_>>>()?;
    let counts = required(&nn_doc.counts, "nn.counts")?;
    if bounds.len() != input.dim() {
        return Err(CliError::DimensionMismatch { what: "nn.bounds".into(), expected: input.dim(), got: bounds.len() });
    }
    if counts.len() != input.dim() {
        return Err(CliError::DimensionMismatch { what: "nn.counts".into(), expected: input.dim(), got: counts.len() });
    }
    let nn = NnSpec { bounds, counts, width: required(&nn_doc.width, "nn.width")?, input };
    nn.build().map_err(|e| {
        let field = match e {
            formation_core::Error::BadBounds { .. } => "nn.bounds",
            formation_core::Error::BadCount { .. } => "nn.counts",
            _ => "nn.width",
        };
        CliError::validation(field, e)
    })?;

    let mut agents = Vec::with_capacity(n);
    for (i, a) in doc.agents.iter().enumerate() {
        let field = format!("agents[{i}]");
        let uncertainty = Uncertainty::from_id(a.uncertainty_id.unwrap_or(1))
            .map_err(|e| CliError::validation(format!("{field}.uncertainty_id"), e))?;
        let params = match (&a.vehicle, &a.params) {
            (Some(_), Some(_)) => {
                return Err(CliError::validation(format!("{field}.vehicle"), "give either vehicle or params"))
            }
            (Some(name), None) => {
                let v = doc
                    .vehicles
                    .get(name)
                    .ok_or_else(|| CliError::validation(format!("{field}.vehicle"), format!("no vehicle named {name:?}")))?;
                vehicle_params(v, uncertainty, &format!("vehicles.{name}"))?
            }
            (None, Some(v)) => vehicle_params(v, uncertainty, &format!("{field}.params"))?,
            (None, None) => return Err(CliError::validation(format!("{field}.vehicle"), "missing")),
        };
        let vec3 = |v: &Option<Vec<f64>>, name: &str| -> Result<Vector3<f64>> {
            match v {
                Some(v) => Ok(Vector3::from(vector::<3>(v, &format!("{field}.{name}"))?)),
                None => Ok(Vector3::zeros()),
            }
        };
        let eta = Vector3::from(vector::<3>(&required(&a.eta, &format!("{field}.eta"))?, &format!("{field}.eta"))?);
        let initial = AgentState::new(eta, vec3(&a.nu, "nu")?);
        let offset = vec3(&a.d_star, "d_star")?;
        let initial_observer = ObserverState {
            chi_hat: match &a.chi_hat0 {
                Some(v) => Vector6::from(vector::<6>(v, &format!("{field}.chi_hat0"))?),
                None => Vector6::zeros(),
            },
            a_hat: match &a.a_hat0 {
                Some(rows) => matrix6(rows, &format!("{field}.a_hat0"))?,
                None => Matrix6::zeros(),
            },
        };
        let og = observer_gains(&obs, a.observer.as_ref(), &field)?;
        let cg = controller_gains(&merged_gains(&ctrl.gains, a.controller.as_ref()), &field)?;
        let mut cfg = AgentConfig::new(params, initial, offset, og, cg);
        cfg.initial_observer = initial_observer;
        agents.push(cfg);
    }

    let mode = match ctrl.mode.as_deref() {
        None | Some("adaptive") => ControlMode::Adaptive,
        Some("model-based") => ControlMode::ModelBased,
        Some("pretrained") => {
            let prefix = required(&ctrl.weights_path, "controller.weights_path")?;
            let nets = weights_file::load_all(&base_dir.join(prefix), n)?;
            let lattice = nn.build()?;
            for (i, net) in nets.iter().enumerate() {
                if net.input_dim() != lattice.input_dim() {
                    return Err(CliError::DimensionMismatch {
                        what: format!("weights for agent {}", i + 1),
                        expected: lattice.input_dim(),
                        got: net.input_dim(),
                    });
                }
            }
            ControlMode::Pretrained(nets)
        }
        Some(other) => {
            return Err(CliError::validation("controller.mode", format!("{other:?} is not adaptive|pretrained|model-based")))
        }
    };

    let cfg = SimConfig {
        topology,
        leader,
        agents,
        nn,
        mode,
        dt: required(&sim.dt, "sim.dt")?,
        t_end: required(&sim.t_end, "sim.t_end")?,
        decimation: sim.decimation.unwrap_or(1),
        weight_snapshot_every: sim.weight_snapshot_every.unwrap_or(1),
        observers_only: sim.observers_only.unwrap_or(false),
        seed: sim.seed.unwrap_or(0),
    };
    cfg.validate().map_err(|e| match e {
        formation_core::Error::InvalidConfig { field, reason } => CliError::validation(format!("sim.{field}"), reason),
        e => CliError::Core(e),
    })?;
    Ok(cfg)
}

fn gain_matrix_doc(m: &Matrix3<f64>) -> GainMatrix {
    if (0..3).all(|i| (0..3).all(|j| i == j || m[(i, j)] == 0.0)) {
        GainMatrix::Diagonal(m.diagonal().iter().copied().collect())
    } else {
        GainMatrix::Rows(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

fn channel_gain_doc(g: &[f64; CHANNELS]) -> ChannelGain {
    if g.iter().all(|x| x.to_bits() == g[0].to_bits()) {
        ChannelGain::All(g[0])
    } else {
        ChannelGain::Each(g.to_vec())
    }
}

fn gains_doc(g: &ControllerGains) -> GainsDoc {
    GainsDoc {
        k1: Some(gain_matrix_doc(&g.k1)),
        k2: Some(gain_matrix_doc(&g.k2)),
        gamma: Some(channel_gain_doc(&g.gamma)),
        sigma: Some(channel_gain_doc(&g.sigma)),
    }
}

fn rows6(m: &Matrix6<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Self-contained document for `cfg`. Pretrained configurations need the
/// prefix their weight files were written under.
pub fn to_doc(cfg: &SimConfig, weights_path: Option<&str>) -> Result<ScenarioDoc> {
    let first = cfg.agents.first().ok_or_else(|| CliError::validation("agents", "empty"))?;
    let mode = match &cfg.mode {
        ControlMode::Adaptive => "adaptive",
        ControlMode::ModelBased => "model-based",
        ControlMode::Pretrained(_) => {
            if weights_path.is_none() {
                return Err(CliError::validation("controller.weights_path", "pretrained mode needs a weights prefix"));
            }
            "pretrained"
        }
    };
    let agents = cfg
        .agents
        .iter()
        .map(|a| AgentDoc {
            vehicle: None,
            params: Some(vehicle_doc(&a.params)),
            uncertainty_id: Some(a.params.uncertainty.id()),
            eta: Some(a.initial.eta.iter().copied().collect()),
            nu: Some(a.initial.nu.iter().copied().collect()),
            d_star: Some(a.offset.iter().copied().collect()),
            chi_hat0: Some(a.initial_observer.chi_hat.iter().copied().collect()),
            a_hat0: Some(rows6(&a.initial_observer.a_hat)),
            observer: (a.observer_gains != first.observer_gains)
                .then(|| ObserverDoc { beta1: Some(a.observer_gains.beta1), beta2: Some(a.observer_gains.beta2) }),
            controller: (a.controller_gains != first.controller_gains).then(|| gains_doc(&a.controller_gains)),
        })
        .collect();
    Ok(ScenarioDoc {
        preset: None,
        topology: Some(TopologyDoc { weights: Some(cfg.topology.rows()) }),
        leader: Some(LeaderDoc { a0: Some(rows6(&cfg.leader.a0)), chi0: Some(cfg.leader.chi0.iter().copied().collect()) }),
        observer: Some(ObserverDoc {
            beta1: Some(first.observer_gains.beta1),
            beta2: Some(first.observer_gains.beta2),
        }),
        controller: Some(ControllerDoc {
            mode: Some(mode.into()),
            gains: gains_doc(&first.controller_gains),
            weights_path: weights_path.map(Into::into),
        }),
        nn: Some(NnDoc {
            input: Some(match cfg.nn.input {
                NnInput::Velocity => "nu".into(),
                NnInput::FullState => "chi".into(),
            }),
            bounds: Some(cfg.nn.bounds.iter().map(|&(lo, hi)| vec![lo, hi]).collect()),
            counts: Some(cfg.nn.counts.clone()),
            width: Some(cfg.nn.width),
        }),
        sim: Some(SimDoc {
            dt: Some(cfg.dt),
            t_end: Some(cfg.t_end),
            decimation: Some(cfg.decimation),
            weight_snapshot_every: Some(cfg.weight_snapshot_every),
            observers_only: Some(cfg.observers_only),
            seed: Some(cfg.seed),
        }),
        vehicles: BTreeMap::new(),
        agents,
    })
}

/// Writes `cfg` as a scenario file that parses back to an equal config.
pub fn serialize(cfg: &SimConfig) -> Result<String> {
    let doc = to_doc(cfg, None)?;
    toml::to_string(&doc).map_err(|e| CliError::validation("scenario", e))
}

pub fn serialize_with_weights(cfg: &SimConfig, weights_path: &str) -> Result<String> {
    let doc = to_doc(cfg, Some(weights_path))?;
    toml::to_string(&doc).map_err(|e| CliError::validation("scenario", e))
}

/// Absolute form of a command-line path.
pub fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn here() -> &'static Path {
        Path::new(".")
    }

    #[test]
    fn paper_preset_values() {
        let cfg = load_preset("paper-5auv").unwrap();
        assert_eq!(cfg.n_agents(), 5);
        assert_eq!(cfg.dt, 2e-4);
        assert_eq!(cfg.t_end, 80.0);
        assert_eq!(cfg.nn.counts, vec![16, 16, 16]);
        assert_eq!(cfg.nn.bounds, vec![(-100.0, 100.0); 3]);
        assert_eq!(cfg.nn.width, 60.0);
        assert_eq!(cfg.nn.input, NnInput::Velocity);
        let a = &cfg.agents[0];
        assert_eq!(a.observer_gains, ObserverGains { beta1: 5.0, beta2: 5.0 });
        assert_eq!(a.controller_gains.k1, Matrix3::from_diagonal(&Vector3::new(960.0, 800.0, 800.0)));
        assert_eq!(a.controller_gains.k2, Matrix3::from_diagonal(&Vector3::new(1440.0, 1200.0, 1200.0)));
        assert_eq!(a.controller_gains.gamma, [10.0; 3]);
        assert_eq!(a.controller_gains.sigma, [1e-4; 3]);
        assert_eq!(a.initial.eta, Vector3::new(30.0, 60.0, 0.0));
        assert_eq!(cfg.agents[4].initial.eta, Vector3::new(10.0, 50.0, 0.0));
        assert_eq!(cfg.agents[1].offset, Vector3::new(10.0, -10.0, 0.0));
        assert_eq!(a.params.mass, 23.0);
        assert_eq!(a.params.y_vv, -36.0);
        assert_eq!(cfg.agents[4].params.uncertainty, Uncertainty::Oscillatory);
        assert_eq!(a.initial_observer, ObserverState::default());
        assert_eq!(cfg.leader, LeaderModel::orbit(80.0));
        assert_eq!(cfg.topology, formation_core::graph::Topology::chain(5));
    }

    #[test]
    fn desk_preset_inherits_vehicles() {
        let paper = load_preset("paper-5auv").unwrap();
        let desk = load_preset("desk-5auv").unwrap();
        assert_eq!(desk.leader, LeaderModel::orbit(8.0));
        assert_eq!(desk.nn.counts, vec![9, 9, 9]);
        assert_eq!(desk.dt, 1e-3);
        for (d, p) in desk.agents.iter().zip(&paper.agents) {
            assert_eq!(d.params, p.params);
            assert_eq!(d.controller_gains.k1, Matrix3::from_diagonal(&Vector3::new(9.6, 8.0, 8.0)));
            assert_eq!(d.initial_observer.chi_hat, Vector6::new(0.0, 4.0, 0.0, 4.0, 0.0, 4.0));
        }
    }

    #[test]
    fn empty_file_is_parse_error() {
        for text in ["", "\n\n# only a comment\n"] {
            assert!(matches!(parse_doc(text), Err(CliError::Parse { line: 1, column: 1, .. })), "{text:?}");
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_doc("preset = \"desk-5auv\"\n[sim]\ndt = = 3\n").unwrap_err();
        match err {
            CliError::Parse { line, column, .. } => assert_eq!((line, column), (3, 6)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_error_has_position() {
        let err = parse_doc("[sim]\ndt = \"fast\"\n").unwrap_err();
        match err {
            CliError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(parse_doc("[sim]\nstep = 1.0\n"), Err(CliError::Parse { line: 2, .. })));
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(parse_doc("preset = \"nope\"\n"), Err(CliError::UnknownPreset(n)) if n == "nope"));
    }

    #[test]
    fn four_agents_on_six_nodes() {
        let mut text = String::from("preset = \"desk-5auv\"\n");
        for _ in 0..4 {
            text.push_str("[[agents]]\nvehicle = \"auv1\"\neta = [0.0, 0.0, 0.0]\n");
        }
        match parse_str(&text, here()) {
            Err(CliError::DimensionMismatch { what, expected, got }) => {
                assert_eq!((what.as_str(), expected, got), ("agents", 5, 4))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_merge_over_preset() {
        let cfg = parse_str("preset = \"desk-5auv\"\n[sim]\nt_end = 2.5\n[controller]\ngamma = [1.0, 2.0, 3.0]\n", here()).unwrap();
        assert_eq!(cfg.t_end, 2.5);
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.agents[0].controller_gains.gamma, [1.0, 2.0, 3.0]);
        assert_eq!(cfg.agents[0].controller_gains.sigma, [1e-4; 3]);
    }

    #[test]
    fn validation_names_field() {
        let cases = [
            ("[sim]\ndt = -1.0\n", "sim.dt"),
            ("[nn]\nwidth = 0.0\n", "nn.width"),
            ("[controller]\nk1 = [1.0, -1.0, 1.0]\n", "agents[0].k1"),
            ("[controller]\nmode = \"psychic\"\n", "controller.mode"),
            ("[controller]\nmode = \"pretrained\"\n", "controller.weights_path"),
            ("[vehicles.auv3]\nmass = -5.0\n", "vehicles.auv3"),
            ("[observer]\nbeta2 = 0.0\n", "agents[0].beta2"),
        ];
        for (body, field) in cases {
            let text = format!("preset = \"desk-5auv\"\n{body}");
            match parse_str(&text, here()) {
                Err(CliError::Validation { field: f, .. }) => assert_eq!(f, field, "{body}"),
                other => panic!("{body}: {other:?}"),
            }
        }
    }

    #[test]
    fn missing_weights_file() {
        let dir = tempfile::tempdir().unwrap();
        let text = "preset = \"desk-5auv\"\n[controller]\nmode = \"pretrained\"\nweights_path = \"nothing\"\n";
        assert!(matches!(parse_str(text, dir.path()), Err(CliError::MissingWeightsFile(_))));
    }

    #[test]
    fn presets_round_trip() {
        for (name, _) in PRESETS {
            let cfg = load_preset(name).unwrap();
            let text = serialize(&cfg).unwrap();
            assert_eq!(parse_str(&text, here()).unwrap(), cfg, "{name}");
        }
    }

    #[test]
    fn heterogeneous_gains_round_trip() {
        let mut cfg = load_preset("desk-5auv").unwrap();
        cfg.agents[2].controller_gains.k1[(0, 1)] = 0.5;
        cfg.agents[2].controller_gains.k1[(1, 0)] = 0.5;
        cfg.agents[3].observer_gains.beta1 = 0.1 + 0.2;
        cfg.agents[1].params.coriolis = CoriolisForm::SkewSymmetric;
        cfg.mode = ControlMode::ModelBased;
        cfg.observers_only = true;
        let text = serialize(&cfg).unwrap();
        assert_eq!(parse_str(&text, here()).unwrap(), cfg);
    }

    #[test]
    fn pretrained_needs_prefix() {
        let mut cfg = load_preset("desk-5auv").unwrap();
        let nets = vec![cfg.nn.build().unwrap(); 5];
        cfg.mode = ControlMode::Pretrained(nets.clone());
        assert!(serialize(&cfg).is_err());
        let dir = tempfile::tempdir().unwrap();
        weights_file::save_all(&nets, &dir.path().join("w")).unwrap();
        let text = serialize_with_weights(&cfg, "w").unwrap();
        assert_eq!(parse_str(&text, dir.path()).unwrap(), cfg);
    }

    #[test]
    fn error_positions() {
        assert_eq!(position("ab\ncd", 0), (1, 1));
        assert_eq!(position("ab\ncd", 4), (2, 2));
    }
}
