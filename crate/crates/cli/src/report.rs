//! Convergence report as `key = value` text, and per-figure CSV series.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use formation_core::analysis::{
    final_quarter_start, formation_error_series, lyapunov_diagnostic, observer_decay_fit, online_approximation,
    ErrorStats,
};
use formation_core::rbf::{RbfNetwork, CHANNELS};
use formation_core::sim::{SimConfig, SimTrace};

use crate::error::{CliError, Result};

/// Pass/fail bounds applied by the report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Steady-state mean formation error, percent of the orbit radius.
    pub formation_mean_pct: f64,
    pub formation_max_pct: f64,
    /// Final over initial observer error.
    pub observer_ratio: f64,
    pub observer_r_squared: f64,
    pub approximation_median: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            formation_mean_pct: 1.0,
            formation_max_pct: 3.0,
            observer_ratio: 1e-3,
            observer_r_squared: 0.99,
            approximation_median: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentReport {
    pub formation_mean: f64,
    pub formation_max: f64,
    /// `None` when no clean decay segment exists.
    pub observer_rate: Option<f64>,
    pub observer_r_squared: Option<f64>,
    pub observer_state_ratio: f64,
    pub observer_matrix_ratio: f64,
    /// `|n(t_end) - n(t_a)| / n(t_end)` of each channel's weight norm over
    /// the final quarter.
    pub weight_norm_change: [f64; CHANNELS],
    pub approximation: [ErrorStats; CHANNELS],
    pub lyapunov_decreasing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub samples: usize,
    pub t_end: f64,
    pub orbit_radius: f64,
    pub steady_from: f64,
    pub agents: Vec<AgentReport>,
    pub thresholds: Thresholds,
}

/// Distance of the leader's initial position from the origin.
pub fn orbit_radius(trace: &SimTrace) -> f64 {
    trace.leader.first().map_or(0.0, |l| l[0].hypot(l[1]))
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        a / b
    }
}

pub fn convergence_report(trace: &SimTrace, cfg: &SimConfig, thresholds: Thresholds) -> Result<ConvergenceReport> {
    if trace.is_empty() {
        return Err(CliError::validation("trace", "no samples"));
    }
    if trace.agents.len() != cfg.n_agents() {
        return Err(CliError::DimensionMismatch { what: "trace agents".into(), expected: cfg.n_agents(), got: trace.agents.len() });
    }
    let offsets: Vec<_> = cfg.agents.iter().map(|a| a.offset).collect();
    let formation = formation_error_series(trace, &offsets);
    let fits = observer_decay_fit(trace);
    let from = final_quarter_start(trace.len());
    let approx = online_approximation(trace, from)?;
    let last = trace.len() - 1;
    let mut agents = Vec::with_capacity(cfg.n_agents());
    for (i, a) in trace.agents.iter().enumerate() {
        let state_err = trace.state_error_series(i);
        let fit = fits[i].as_ref().ok();
        let wn = &a.weight_norms;
        let lyap = lyapunov_diagnostic(trace, i, &cfg.agents[i].params, from)?;
        agents.push(AgentReport {
            formation_mean: formation.steady[i].mean,
            formation_max: formation.steady[i].max,
            observer_rate: fit.map(|f| f.rate),
            observer_r_squared: fit.map(|f| f.r_squared),
            observer_state_ratio: ratio(state_err[last], state_err[0]),
            observer_matrix_ratio: ratio(a.a_hat_error[last], a.a_hat_error[0]),
            weight_norm_change: std::array::from_fn(|c| ratio((wn[last][c] - wn[from][c]).abs(), wn[last][c])),
            approximation: approx[i],
            lyapunov_decreasing: lyap.decreasing_fraction,
        });
    }
    Ok(ConvergenceReport {
        samples: trace.len(),
        t_end: trace.times[last],
        orbit_radius: orbit_radius(trace),
        steady_from: trace.times[from],
        agents,
        thresholds,
    })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl ConvergenceReport {
    pub fn formation_pass(&self) -> bool {
        let r = self.orbit_radius / 100.0;
        self.agents.iter().all(|a| {
            a.formation_mean <= self.thresholds.formation_mean_pct * r && a.formation_max <= self.thresholds.formation_max_pct * r
        })
    }

    pub fn observer_pass(&self) -> bool {
        let t = &self.thresholds;
        self.agents.iter().all(|a| {
            a.observer_state_ratio <= t.observer_ratio
                && a.observer_matrix_ratio <= t.observer_ratio
                && a.observer_rate.is_some_and(|r| r < 0.0)
                && a.observer_r_squared.is_some_and(|r| r >= t.observer_r_squared)
        })
    }

    pub fn approximation_pass(&self) -> bool {
        self.agents.iter().all(|a| a.approximation.iter().all(|s| s.median <= self.thresholds.approximation_median))
    }

    /// One `key = value` line per metric, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: String, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("samples".into(), self.samples.to_string());
        kv("t_end".into(), num(self.t_end));
        kv("orbit_radius".into(), num(self.orbit_radius));
        kv("steady_from".into(), num(self.steady_from));
        for (i, a) in self.agents.iter().enumerate() {
            let p = format!("agent{}", i + 1);
            kv(format!("{p}.formation_mean"), num(a.formation_mean));
            kv(format!("{p}.formation_max"), num(a.formation_max));
            kv(format!("{p}.formation_mean_pct"), num(100.0 * ratio(a.formation_mean, self.orbit_radius)));
            kv(format!("{p}.formation_max_pct"), num(100.0 * ratio(a.formation_max, self.orbit_radius)));
            kv(format!("{p}.observer_rate"), a.observer_rate.map_or("none".into(), num));
            kv(format!("{p}.observer_r_squared"), a.observer_r_squared.map_or("none".into(), num));
            kv(format!("{p}.observer_state_ratio"), num(a.observer_state_ratio));
            kv(format!("{p}.observer_matrix_ratio"), num(a.observer_matrix_ratio));
            for c in 0..CHANNELS {
                kv(format!("{p}.weight_norm_change.{c}"), num(a.weight_norm_change[c]));
            }
            for c in 0..CHANNELS {
                let st = &a.approximation[c];
                kv(format!("{p}.approx_median.{c}"), num(st.median));
                kv(format!("{p}.approx_p95.{c}"), num(st.p95));
            }
            kv(format!("{p}.lyapunov_decreasing"), num(a.lyapunov_decreasing));
        }
        let verdict = |b: bool| if b { "PASS" } else { "FAIL" }.to_string();
        kv("check.observer".into(), verdict(self.observer_pass()));
        kv("check.formation".into(), verdict(self.formation_pass()));
        kv("check.approximation".into(), verdict(self.approximation_pass()));
        s
    }
}

/// Agent shown in the single-agent figures: the third, as in the reference
/// plots, or the last one in smaller groups.
pub fn figure_agent(n_agents: usize) -> usize {
    2.min(n_agents.saturating_sub(1))
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn write(&self, path: &Path) -> Result<()> {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|&x| num(x)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        fs::write(path, out).map_err(CliError::io(path))
    }
}

/// Writes the figure series into `dir`, returning the files written.
///
/// * `fig3_observer.csv`: leader position and heading (deg) against each
///   agent's estimate.
/// * `fig4_tracking.csv`: leader pose against each agent's pose.
/// * `fig5_formation.csv`: planar paths and formation error.
/// * `fig6_weight_norms.csv`: per-channel weight norms.
/// * `fig7_weights.csv`: the 16 largest final weights per channel of the
///   figure agent, only when the trace carries weight snapshots.
/// * `fig8_approximation.csv`: `F`, the online output and, when `frozen` is
///   given, the constant-weight output for the figure agent.
///
/// A replay trace run through the same function gives the pretrained
/// tracking series in `fig4_tracking.csv`.
pub fn write_figures(trace: &SimTrace, cfg: &SimConfig, frozen: Option<&[RbfNetwork]>, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let n = trace.agents.len();
    let deg = 180.0 / std::f64::consts::PI;
    let mut written = Vec::new();
    let mut emit = |name: &str, t: Table| -> Result<()> {
        let p = dir.join(name);
        t.write(&p)?;
        written.push(p);
        Ok(())
    };

    let mut header = vec!["t".into(), "x0".into(), "y0".into(), "psi0_deg".into()];
    for i in 1..=n {
        header.extend([format!("a{i}_xhat"), format!("a{i}_yhat"), format!("a{i}_psihat_deg")]);
    }
    let rows = (0..trace.len())
        .map(|k| {
            let l = &trace.leader[k];
            let mut r = vec![trace.times[k], l[0], l[1], l[2] * deg];
            for a in &trace.agents {
                let c = &a.chi_hat[k];
                r.extend([c[0], c[1], c[2] * deg]);
            }
            r
        })
        .collect();
    emit("fig3_observer.csv", Table { header, rows })?;

    let mut header = vec!["t".into(), "x0".into(), "y0".into(), "psi0_deg".into()];
    for i in 1..=n {
        header.extend([format!("a{i}_x"), format!("a{i}_y"), format!("a{i}_psi_deg")]);
    }
    let rows = (0..trace.len())
        .map(|k| {
            let l = &trace.leader[k];
            let mut r = vec![trace.times[k], l[0], l[1], l[2] * deg];
            for a in &trace.agents {
                let e = &a.eta[k];
                r.extend([e[0], e[1], e[2] * deg]);
            }
            r
        })
        .collect();
    emit("fig4_tracking.csv", Table { header, rows })?;

    let offsets: Vec<_> = cfg.agents.iter().map(|a| a.offset).collect();
    let fe = formation_error_series(trace, &offsets);
    let mut header = vec!["t".into(), "x0".into(), "y0".into()];
    for i in 1..=n {
        header.extend([format!("a{i}_x"), format!("a{i}_y"), format!("a{i}_error")]);
    }
    let rows = (0..trace.len())
        .map(|k| {
            let l = &trace.leader[k];
            let mut r = vec![trace.times[k], l[0], l[1]];
            for (i, a) in trace.agents.iter().enumerate() {
                r.extend([a.eta[k][0], a.eta[k][1], fe.series[i][k]]);
            }
            r
        })
        .collect();
    emit("fig5_formation.csv", Table { header, rows })?;

    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        header.extend((1..=CHANNELS).map(|c| format!("a{i}_w{c}_norm")));
    }
    let rows = (0..trace.len())
        .map(|k| {
            let mut r = vec![trace.times[k]];
            for a in &trace.agents {
                r.extend(a.weight_norms[k]);
            }
            r
        })
        .collect();
    emit("fig6_weight_norms.csv", Table { header, rows })?;

    let fa = figure_agent(n);
    let snaps = trace.agents.get(fa).map(|a| a.weight_snapshots.as_slice()).unwrap_or_default();
    if let Some(last) = snaps.last() {
        let mut picks: Vec<(usize, usize)> = Vec::new();
        for c in 0..CHANNELS {
            let mut idx: Vec<usize> = (0..last.weights[c].len()).collect();
            idx.sort_by(|&x, &y| last.weights[c][y].abs().total_cmp(&last.weights[c][x].abs()).then(x.cmp(&y)));
            picks.extend(idx.into_iter().take(16).map(|j| (c, j)));
        }
        let mut header = vec!["t".to_string()];
        header.extend(picks.iter().map(|&(c, j)| format!("w{}_n{j}", c + 1)));
        let rows = snaps
            .iter()
            .map(|s| {
                let mut r = vec![s.time];
                r.extend(picks.iter().map(|&(c, j)| s.weights[c][j]));
                r
            })
            .collect();
        emit("fig7_weights.csv", Table { header, rows })?;
    }

    if let Some(a) = trace.agents.get(fa) {
        let frozen = frozen.and_then(|f| f.get(fa));
        let mut header = vec!["t".to_string()];
        for c in 1..=CHANNELS {
            header.extend([format!("f{c}"), format!("nn{c}")]);
            if frozen.is_some() {
                header.push(format!("wbar{c}"));
            }
        }
        let dim = trace.input.dim();
        let mut rows = Vec::with_capacity(trace.len());
        for k in 0..trace.len() {
            let out = match frozen {
                Some(net) => {
                    let z = trace.input.features(&formation_core::dynamics::AgentState::new(a.eta[k], a.nu[k]));
                    Some(net.nn_output(&z[..dim])?)
                }
                None => None,
            };
            let mut r = vec![trace.times[k]];
            for c in 0..CHANNELS {
                r.extend([a.oracle[k][c], a.nn_output[k][c]]);
                if let Some(o) = &out {
                    r.push(o[c]);
                }
            }
            rows.push(r);
        }
        emit("fig8_approximation.csv", Table { header, rows })?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_str;

    fn short() -> (SimConfig, SimTrace) {
        let cfg = parse_str("preset = \"desk-5auv\"\n[sim]\nt_end = 0.5\n", Path::new(".")).unwrap();
        let tr = formation_core::sim::run_scenario(&cfg).unwrap();
        (cfg, tr)
    }

    #[test]
    fn report_keys_are_stable() {
        let (cfg, tr) = short();
        let rep = convergence_report(&tr, &cfg, Thresholds::default()).unwrap();
        let text = rep.to_text();
        assert_eq!(text, convergence_report(&tr, &cfg, Thresholds::default()).unwrap().to_text());
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys[0], "samples");
        assert!(keys.contains(&"agent5.approx_p95.2"));
        assert_eq!(keys.last(), Some(&"check.approximation"));
        assert_eq!(rep.orbit_radius, 8.0);
        for line in text.lines() {
            assert_eq!(line.split(" = ").count(), 2, "{line}");
        }
    }

    #[test]
    fn figures_written() {
        let (cfg, tr) = short();
        let dir = tempfile::tempdir().unwrap();
        let nets = formation_core::sim::learned_networks(&tr, 0.0, 0.5).unwrap();
        let files = write_figures(&tr, &cfg, Some(&nets), dir.path()).unwrap();
        let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(
            names,
            ["fig3_observer.csv", "fig4_tracking.csv", "fig5_formation.csv", "fig6_weight_norms.csv", "fig7_weights.csv", "fig8_approximation.csv"]
        );
        let fig8 = fs::read_to_string(dir.path().join("fig8_approximation.csv")).unwrap();
        assert!(fig8.starts_with("t,f1,nn1,wbar1,f2"));
        assert_eq!(fig8.lines().count(), tr.len() + 1);
    }

    #[test]
    fn figure_agent_choice() {
        assert_eq!(figure_agent(5), 2);
        assert_eq!(figure_agent(2), 1);
        assert_eq!(figure_agent(1), 0);
    }
}
