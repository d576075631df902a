use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use formation_cli::error::{CliError, Result};
use formation_cli::report::{convergence_report, write_figures, Thresholds};
use formation_cli::scenario::{absolute, load_doc, load_preset, resolve};
use formation_cli::{trace_csv, verify, weights_file};
use formation_core::sim::{learned_networks, run_scenario, SimConfig, SimTrace, Warning};

#[derive(Parser)]
#[command(name = "formation", version, about = "Distributed formation-learning simulator for AUV groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario in the mode it declares and write the trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run adaptively, then store the window-averaged weights per agent.
    Learn {
        #[arg(long)]
        scenario: PathBuf,
        /// Averaging window `a,b` in seconds.
        #[arg(long, value_parser = parse_window)]
        window: (f64, f64),
        #[arg(long)]
        weights_out: PathBuf,
        /// Also write the adaptive trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run with constant weights loaded from `PREFIX.<i>.rbfw`.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convergence report and per-figure CSVs from a saved trace.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        figures: Option<PathBuf>,
        /// Constant weights to compare against in the approximation figure.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Run the acceptance pipeline and print one line per criterion.
    Verify {
        #[arg(long, default_value = "desk-5auv")]
        preset: String,
        /// Preset used by the full-scale smoke criterion.
        #[arg(long, default_value = "paper-5auv")]
        paper_preset: String,
    },
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err("window needs finite a < b".into());
    }
    Ok((a, b))
}

fn scenario(path: &Path, mode_override: Option<&str>, weights: Option<&Path>) -> Result<SimConfig> {
    let mut doc = load_doc(path)?;
    if let Some(mode) = mode_override {
        let ctrl = doc.controller.get_or_insert_with(Default::default);
        ctrl.mode = Some(mode.into());
        ctrl.weights_path = weights.map(|w| absolute(w).to_string_lossy().into_owned());
    }
    resolve(&doc, path.parent().unwrap_or(Path::new(".")))
}

fn warn(trace: &SimTrace) {
    for w in &trace.warnings {
        let text = match w {
            Warning::NoRootedSpanningTree => "kind=NoRootedSpanningTree".to_string(),
            Warning::LeaderNotMarginallyStable => "kind=LeaderNotMarginallyStable".to_string(),
            Warning::GainRelationViolated { agent } => format!("kind=GainRelationViolated agent={}", agent + 1),
        };
        eprintln!("warning: {text}");
    }
}

fn simulate(cfg: &SimConfig) -> Result<SimTrace> {
    let trace = run_scenario(cfg)?;
    warn(&trace);
    Ok(trace)
}

fn write_trace(trace: &SimTrace, out: &Path) -> Result<()> {
    trace_csv::write_trace_csv(trace, out)?;
    println!("trace={} samples={} columns={}", out.display(), trace.len(), trace_csv::column_count(trace.agents.len()));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { scenario: path, out } => {
            let cfg = scenario(&path, None, None)?;
            let trace = simulate(&cfg)?;
            write_trace(&trace, &out)?;
            println!("adaptation_evaluations={}", trace.adaptation_evaluations);
        }
        Command::Learn { scenario: path, window: (a, b), weights_out, out } => {
            let cfg = scenario(&path, Some("adaptive"), None)?;
            let trace = simulate(&cfg)?;
            if let Some(out) = out {
                write_trace(&trace, &out)?;
            }
            let nets = learned_networks(&trace, a, b)?;
            for p in weights_file::save_all(&nets, &weights_out)? {
                println!("weights={}", p.display());
            }
        }
        Command::Replay { scenario: path, weights, out } => {
            let cfg = scenario(&path, Some("pretrained"), Some(&weights))?;
            let trace = simulate(&cfg)?;
            write_trace(&trace, &out)?;
            println!("adaptation_evaluations={}", trace.adaptation_evaluations);
        }
        Command::Analyze { trace, scenario: path, report, figures, weights } => {
            let mut doc = load_doc(&path)?;
            // the report needs the scenario's geometry, not its weights
            if let Some(c) = doc.controller.as_mut() {
                c.mode = Some("adaptive".into());
                c.weights_path = None;
            }
            let cfg = resolve(&doc, path.parent().unwrap_or(Path::new(".")))?;
            let tr = trace_csv::read_trace_csv(&trace, cfg.nn.input)?;
            let rep = convergence_report(&tr, &cfg, Thresholds::default())?;
            std::fs::write(&report, rep.to_text()).map_err(CliError::io(&report))?;
            println!("report={}", report.display());
            if let Some(dir) = figures {
                let frozen = match weights {
                    Some(prefix) => Some(weights_file::load_all(&prefix, cfg.n_agents())?),
                    None => None,
                };
                for p in write_figures(&tr, &cfg, frozen.as_deref(), &dir)? {
                    println!("figure={}", p.display());
                }
            }
        }
        Command::Verify { preset, paper_preset } => {
            let desk = load_preset(&preset)?;
            let paper = load_preset(&paper_preset)?;
            let results = verify::run_all(&desk, &paper, |r| println!("{}", r.line()));
            let passed = results.iter().filter(|r| r.passed).count();
            println!("summary passed={passed} failed={}", results.len() - passed);
            return Ok(passed == results.len());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(2)
        }
    }
}

