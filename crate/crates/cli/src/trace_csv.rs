//! CSV traces: one row per recorded sample, LF line endings, every value in
//! `{:.16e}` so it parses back to the same bits.
//!
//! Columns: `t`, the leader block `leader_{x,y,psi,u,v,r}`, then for each
//! follower `i = 1..N` a block of [`AGENT_COLUMNS`] columns:
//!
//! | columns | content |
//! |---|---|
//! | `a{i}_{x,y,psi}` | pose `eta` |
//! | `a{i}_{u,v,r}` | body velocity `nu` |
//! | `a{i}_chihat{0..5}` | observer estimate of the leader state |
//! | `a{i}_ahat_err` | `|A_hat - A0|_F` |
//! | `a{i}_z1_{0..2}`, `a{i}_z2_{0..2}` | backstepping errors |
//! | `a{i}_tau_{0..2}` | control input |
//! | `a{i}_wnorm_{0..2}` | per-channel weight norm |
//! | `a{i}_f_{0..2}` | true nonlinearity `F` |
//! | `a{i}_nn_{0..2}` | network output |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use formation_core::sim::{AgentTrace, NnInput, SimTrace};
use nalgebra::{Vector3, Vector6};

use crate::error::{CliError, Result};

pub const LEADER_COLUMNS: usize = 6;
pub const AGENT_COLUMNS: usize = 31;

pub fn column_count(n_agents: usize) -> usize {
    1 + LEADER_COLUMNS + AGENT_COLUMNS * n_agents
}

pub fn header(n_agents: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(["x", "y", "psi", "u", "v", "r"].iter().map(|s| format!("leader_{s}")));
    for i in 1..=n_agents {
        h.extend(["x", "y", "psi", "u", "v", "r"].iter().map(|s| format!("a{i}_{s}")));
        h.extend((0..6).map(|k| format!("a{i}_chihat{k}")));
        h.push(format!("a{i}_ahat_err"));
        for block in ["z1", "z2", "tau", "wnorm", "f", "nn"] {
            h.extend((0..3).map(|k| format!("a{i}_{block}_{k}")));
        }
    }
    h
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_lengths(trace: &SimTrace) -> Result<()> {
    let n = trace.len();
    let bad = |what: &str, i: usize, got: usize| {
        Err(CliError::DimensionMismatch { what: format!("agent {} {what} series", i + 1), expected: n, got })
    };
    if trace.leader.len() != n {
        return Err(CliError::DimensionMismatch { what: "leader series".into(), expected: n, got: trace.leader.len() });
    }
    for (i, a) in trace.agents.iter().enumerate() {
        for (what, len) in [
            ("eta", a.eta.len()),
            ("nu", a.nu.len()),
            ("chi_hat", a.chi_hat.len()),
            ("a_hat_error", a.a_hat_error.len()),
            ("z1", a.z1.len()),
            ("z2", a.z2.len()),
            ("tau", a.tau.len()),
            ("weight_norms", a.weight_norms.len()),
            ("oracle", a.oracle.len()),
            ("nn_output", a.nn_output.len()),
        ] {
            if len != n {
                return bad(what, i, len);
            }
        }
    }
    Ok(())
}

pub fn write_trace<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    check_lengths(trace)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| CliError::TraceFormat { path: "<output>".into(), message: e.to_string() };
    w.write_record(header(trace.agents.len())).map_err(io)?;
    let mut row = Vec::with_capacity(column_count(trace.agents.len()));
    for k in 0..trace.len() {
        row.clear();
        row.push(fmt(trace.times[k]));
        row.extend(trace.leader[k].iter().map(|&x| fmt(x)));
        for a in &trace.agents {
            row.extend(a.eta[k].iter().chain(a.nu[k].iter()).chain(a.chi_hat[k].iter()).map(|&x| fmt(x)));
            row.push(fmt(a.a_hat_error[k]));
            for v in [&a.z1[k], &a.z2[k], &a.tau[k]] {
                row.extend(v.iter().map(|&x| fmt(x)));
            }
            row.extend(a.weight_norms[k].iter().map(|&x| fmt(x)));
            for v in [&a.oracle[k], &a.nn_output[k]] {
                row.extend(v.iter().map(|&x| fmt(x)));
            }
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| io(e.into()))?;
    Ok(())
}

pub fn write_trace_csv(trace: &SimTrace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    write_trace(trace, BufWriter::new(file)).map_err(|e| match e {
        CliError::TraceFormat { message, .. } => CliError::TraceFormat { path: path.into(), message },
        e => e,
    })
}

/// Reads a trace back. Weight snapshots and final networks are not part of
/// the CSV and come back empty; `input` is taken from the caller.
pub fn read_trace<R: std::io::Read>(src: R, input: NnInput, path: &Path) -> Result<SimTrace> {
    let err = |message: String| CliError::TraceFormat { path: path.into(), message };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(src);
    let head: Vec<String> = r.headers().map_err(|e| err(e.to_string()))?.iter().map(String::from).collect();
    let cols = head.len();
    if cols < 1 + LEADER_COLUMNS || (cols - 1 - LEADER_COLUMNS) % AGENT_COLUMNS != 0 {
        return Err(err(format!("{cols} columns is not 1 + 6 + 31 N")));
    }
    let n = (cols - 1 - LEADER_COLUMNS) / AGENT_COLUMNS;
    if head != header(n) {
        return Err(err("header does not match the documented layout".into()));
    }
    let mut trace = SimTrace {
        times: Vec::new(),
        leader: Vec::new(),
        agents: vec![AgentTrace::default(); n],
        final_networks: Vec::new(),
        input,
        adaptation_evaluations: 0,
        warnings: Vec::new(),
    };
    let mut vals = Vec::with_capacity(cols);
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        vals.clear();
        for (c, field) in rec.iter().enumerate() {
            vals.push(field.parse::<f64>().map_err(|_| err(format!("row {}, column {}: {field:?}", line + 2, head[c])))?);
        }
        let mut it = vals.iter().copied();
        let mut next = || it.next().expect("record length checked by csv");
        let v3 = |f: &mut dyn FnMut() -> f64| Vector3::new(f(), f(), f());
        trace.times.push(next());
        trace.leader.push(Vector6::from_fn(|_, _| next()));
        for a in trace.agents.iter_mut() {
            a.eta.push(v3(&mut next));
            a.nu.push(v3(&mut next));
            a.chi_hat.push(Vector6::from_fn(|_, _| next()));
            a.a_hat_error.push(next());
            a.z1.push(v3(&mut next));
            a.z2.push(v3(&mut next));
            a.tau.push(v3(&mut next));
            a.weight_norms.push([next(), next(), next()]);
            a.oracle.push(v3(&mut next));
            a.nn_output.push(v3(&mut next));
        }
    }
    Ok(trace)
}

pub fn read_trace_csv(path: &Path, input: NnInput) -> Result<SimTrace> {
    let file = File::open(path).map_err(CliError::io(path))?;
    read_trace(std::io::BufReader::new(file), input, path)
}
