//! Acceptance run over the shipped presets: the nine numbered criteria from
//! [`formation_cli::verify`] plus the step-size invariant.
//!
//! Kept in its own package so that the name sorts last in the workspace and
//! `cargo test --workspace` reaches it only after every unit and integration
//! test of the other crates has run.

use formation_cli::scenario::load_preset;
use formation_cli::verify::{self, CriterionResult};
use formation_core::sim::{run_scenario, SimConfig};

/// Largest allowed final-pose shift, in metres, when `dt` is halved.
pub const STEP_SIZE_SHIFT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl InvariantResult {
    pub fn line(&self) -> String {
        format!("invariant {} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Largest per-component change of every agent's final pose between `dt` and
/// `dt / 2`.
pub fn final_pose_shift(cfg: &SimConfig) -> Result<f64, String> {
    let mut fine = cfg.clone();
    fine.dt = cfg.dt / 2.0;
    fine.decimation = cfg.decimation * 2;
    let a = run_scenario(cfg).map_err(|e| e.to_string())?;
    let b = run_scenario(&fine).map_err(|e| format!("half step: {e}"))?;
    Ok(a.agents
        .iter()
        .zip(&b.agents)
        .map(|(x, y)| (x.eta[x.eta.len() - 1] - y.eta[y.eta.len() - 1]).abs().max())
        .fold(0.0, f64::max))
}

pub fn step_size_robustness(desk: &SimConfig) -> InvariantResult {
    let name = "step-size robustness";
    match final_pose_shift(desk) {
        Ok(shift) if shift < STEP_SIZE_SHIFT => {
            InvariantResult { name, passed: true, detail: format!("final pose shift {shift:.2e} m < {STEP_SIZE_SHIFT:e}") }
        }
        Ok(shift) => InvariantResult {
            name,
            passed: false,
            detail: format!("final pose shift {shift:.3e} m >= {STEP_SIZE_SHIFT:e} when dt {} is halved", desk.dt),
        },
        Err(e) => InvariantResult { name, passed: false, detail: e },
    }
}

/// Runs everything, printing each line as it completes. Returns the ids of
/// failed criteria and whether the invariant held.
pub fn run(desk_preset: &str, paper_preset: &str) -> Result<(Vec<u8>, bool), formation_cli::CliError> {
    let desk = load_preset(desk_preset)?;
    let paper = load_preset(paper_preset)?;
    let results: Vec<CriterionResult> = verify::run_all(&desk, &paper, |r| println!("{}", r.line()));
    let failed = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    let inv = step_size_robustness(&desk);
    println!("{}", inv.line());
    Ok((failed, inv.passed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use formation_core::dynamics::AgentState;
    use nalgebra::Vector3;

    #[test]
    fn shift_is_zero_for_agents_at_rest() {
        let mut cfg = load_preset("desk-5auv").unwrap();
        cfg.t_end = 0.05;
        cfg.observers_only = true;
        for a in &mut cfg.agents {
            a.initial = AgentState::new(Vector3::new(1.0, 2.0, 0.5), Vector3::zeros());
        }
        assert_eq!(final_pose_shift(&cfg), Ok(0.0));
    }

    #[test]
    fn invariant_line_format() {
        let r = InvariantResult { name: "x", passed: false, detail: "d".into() };
        assert_eq!(r.line(), "invariant FAIL x: d");
    }
}
