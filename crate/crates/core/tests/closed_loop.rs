use formation_core::analysis::formation_error_series;
use formation_core::controller::ControllerGains;
use formation_core::dynamics::{AgentState, LeaderModel, Uncertainty, VehicleParams};
use formation_core::estimator::{ObserverGains, ObserverState};
use formation_core::graph::Topology;
use formation_core::sim::{learned_networks, run_scenario, AgentConfig, ControlMode, NnInput, NnSpec, SimConfig};
use formation_core::Error;
use nalgebra::{Matrix3, Vector3};

fn vehicle(k: usize) -> VehicleParams {
    let mut p = VehicleParams::rigid(20.0 + 5.0 * k as f64, 3.0 + k as f64);
    p.x_u = -4.0;
    p.y_v = -6.0;
    p.n_r = -2.0;
    p.uncertainty = Uncertainty::from_id(2 + k as u32 % 4).unwrap();
    p
}

fn config(mode: ControlMode) -> SimConfig {
    let gains = ControllerGains::new(
        Matrix3::from_diagonal_element(2.0),
        Matrix3::from_diagonal_element(40.0),
        [20.0; 3],
        [1e-4; 3],
    )
    .unwrap();
    let og = ObserverGains::new(5.0, 5.0).unwrap();
    let leader = LeaderModel::orbit(1.0);
    let agents = (0..3)
        .map(|k| {
            let d = Vector3::new(2.0 * k as f64 - 2.0, -3.0, 0.0);
            let start = AgentState::new(d + Vector3::new(0.5, 2.5, 0.2), Vector3::zeros());
            let mut a = AgentConfig::new(vehicle(k), start, d, og, gains);
            a.initial_observer = ObserverState::from_leader(&leader);
            a
        })
        .collect();
    SimConfig {
        topology: Topology::chain(3),
        leader,
        agents,
        nn: NnSpec { bounds: vec![(-3.0, 3.0); 3], counts: vec![5; 3], width: 1.5, input: NnInput::Velocity },
        mode,
        dt: 1e-3,
        t_end: 15.0,
        decimation: 10,
        weight_snapshot_every: 10,
        observers_only: false,
        seed: 0,
    }
}

fn offsets(cfg: &SimConfig) -> Vec<Vector3<f64>> {
    cfg.agents.iter().map(|a| a.offset).collect()
}

#[test]
fn model_based_baseline_converges() {
    let cfg = config(ControlMode::ModelBased);
    let tr = run_scenario(&cfg).unwrap();
    let fe = formation_error_series(&tr, &offsets(&cfg));
    for s in &fe.series {
        assert!(s.last().unwrap() < &(0.02 * s[0]), "{} -> {}", s[0], s.last().unwrap());
    }
    assert_eq!(tr.adaptation_evaluations, 0);
}

#[test]
fn adaptive_run_reduces_error_and_learns() {
    let cfg = config(ControlMode::Adaptive);
    let tr = run_scenario(&cfg).unwrap();
    let fe = formation_error_series(&tr, &offsets(&cfg));
    for s in &fe.series {
        assert!(s.last().unwrap() < &(0.1 * s[0]), "{} -> {}", s[0], s.last().unwrap());
    }
    assert!(tr.adaptation_evaluations > 0);
    assert!(tr.agents.iter().all(|a| a.weight_norms.last().unwrap().iter().any(|&w| w > 0.0)));
    assert_eq!(tr, run_scenario(&cfg).unwrap());
}

#[test]
fn pretrained_replay_does_not_adapt() {
    let learn = run_scenario(&config(ControlMode::Adaptive)).unwrap();
    let nets = learned_networks(&learn, 10.0, 15.0).unwrap();
    let cfg = config(ControlMode::Pretrained(nets.clone()));
    let tr = run_scenario(&cfg).unwrap();
    assert_eq!(tr.adaptation_evaluations, 0);
    assert_eq!(tr.final_networks, nets);
    for a in &tr.agents {
        assert!(a.weight_norms.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn observers_only_leaves_vehicles_still() {
    let mut cfg = config(ControlMode::Adaptive);
    cfg.observers_only = true;
    for a in &mut cfg.agents {
        a.initial_observer = ObserverState::default();
    }
    let tr = run_scenario(&cfg).unwrap();
    for (a, ac) in tr.agents.iter().zip(&cfg.agents) {
        assert!(a.eta.iter().all(|e| *e == ac.initial.eta));
    }
    for i in 0..3 {
        let e = tr.state_error_series(i);
        assert!(e.last().unwrap() < &1e-6, "agent {i}: {}", e.last().unwrap());
    }
}

#[test]
fn zero_horizon_records_one_sample() {
    let mut cfg = config(ControlMode::Adaptive);
    cfg.t_end = 0.0;
    let tr = run_scenario(&cfg).unwrap();
    assert_eq!(tr.len(), 1);
    assert_eq!(tr.agents[0].eta[0], cfg.agents[0].initial.eta);
}

#[test]
fn agent_count_must_match_topology() {
    let mut cfg = config(ControlMode::Adaptive);
    cfg.topology = Topology::chain(4);
    assert_eq!(run_scenario(&cfg).unwrap_err(), Error::DimensionMismatch { expected: 4, got: 3 });
}
