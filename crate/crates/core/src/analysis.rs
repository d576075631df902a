//! Post-hoc metrics computed from a [`SimTrace`] alone.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::dynamics::{mass_matrix, AgentState, VehicleParams};
use crate::rbf::{ChannelWeights, RbfNetwork, CHANNELS};
use crate::sim::SimTrace;
use crate::{Error, Result};

/// Mean and max of a series over its final quarter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailStats {
    pub mean: f64,
    pub max: f64,
}

/// Index of the first sample in the final 25% of `len` samples.
pub fn final_quarter_start(len: usize) -> usize {
    len - len.div_ceil(4).min(len)
}

pub fn tail_stats(series: &[f64]) -> TailStats {
    let tail = &series[final_quarter_start(series.len())..];
    if tail.is_empty() {
        return TailStats { mean: 0.0, max: 0.0 };
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let max = tail.iter().copied().fold(0.0, f64::max);
    TailStats { mean, max }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationErrors {
    /// `series[i][k] = |eta_i(t_k) - (eta0(t_k) + d_i)|`.
    pub series: Vec<Vec<f64>>,
    pub steady: Vec<TailStats>,
}

/// Formation error of every agent against its slot `eta0 + d_i`.
pub fn formation_error_series(trace: &SimTrace, offsets: &[Vector3<f64>]) -> FormationErrors {
    let series: Vec<Vec<f64>> = trace
        .agents
        .iter()
        .zip(offsets)
        .map(|(a, d)| {
            a.eta
                .iter()
                .zip(&trace.leader)
                .map(|(eta, l)| (eta - (l.fixed_rows::<3>(0) + d)).norm())
                .collect()
        })
        .collect();
    let steady = series.iter().map(|s| tail_stats(s)).collect();
    FormationErrors { series, steady }
}

/// First sample index after which `series` stays below `2 x` its final-quarter
/// mean.
pub fn transient_end(series: &[f64]) -> usize {
    let bound = 2.0 * tail_stats(series).mean;
    let mut k = series.len();
    while k > 0 && series[k - 1] <= bound {
        k -= 1;
    }
    k.min(series.len().saturating_sub(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    /// Slope of `ln y` against `t` (1/s).
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares line through `(t, ln y)`.
pub fn exponential_fit(times: &[f64], values: &[f64]) -> Result<ExponentialFit> {
    let n = times.len().min(values.len());
    if n < 3 {
        return Err(Error::DegenerateSegment("fewer than 3 samples"));
    }
    if values[..n].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateSegment("non-positive sample"));
    }
    let nf = n as f64;
    let tm = times[..n].iter().sum::<f64>() / nf;
    let logs: Vec<f64> = values[..n].iter().map(|v| libm::log(*v)).collect();
    let ym = logs.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (t, y) in times[..n].iter().zip(&logs) {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateSegment("zero time span"));
    }
    let rate = sxy / sxx;
    let intercept = ym - rate * tm;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ExponentialFit { rate, intercept, r_squared, samples: n })
}

/// Fit segment of a decaying error series: from where it first falls below
/// `10%` of its peak to where it first falls below `floor` times the peak
/// (or the end).
pub fn decay_segment(series: &[f64], floor: f64) -> (usize, usize) {
    let peak = series.iter().copied().fold(0.0, f64::max);
    let start = series.iter().position(|v| *v <= 0.1 * peak).unwrap_or(series.len());
    let end = series[start..].iter().position(|v| *v <= floor * peak).map_or(series.len(), |k| start + k);
    (start, end)
}

/// Relative floor below which the observer error is roundoff, not decay.
pub const DECAY_FLOOR: f64 = 1e-9;

/// Exponential fit of `|chi_hat_i - chi0|` per agent over its decay segment.
pub fn observer_decay_fit(trace: &SimTrace) -> Vec<Result<ExponentialFit>> {
    (0..trace.agents.len())
        .map(|i| {
            let e = trace.state_error_series(i);
            let (a, b) = decay_segment(&e, DECAY_FLOOR);
            exponential_fit(&trace.times[a..b], &e[a..b])
        })
        .collect()
}

/// Median and 95th percentile of a sample (nearest-rank).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    pub median: f64,
    pub p95: f64,
    pub rms_abs: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = libm::ceil(q * sorted.len() as f64) as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn stats(mut rel: Vec<f64>, abs_sq: f64) -> ErrorStats {
    let n = rel.len().max(1) as f64;
    rel.sort_by(|a, b| a.total_cmp(b));
    ErrorStats { median: percentile(&rel, 0.5), p95: percentile(&rel, 0.95), rms_abs: libm::sqrt(abs_sq / n) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproximationReport {
    /// `[agent][channel]` statistics of `|W_bar^T S - F| / (1 + |F|)`.
    pub frozen: Vec<[ErrorStats; CHANNELS]>,
    /// Same for the online prediction recorded along the run.
    pub online: Vec<[ErrorStats; CHANNELS]>,
}

/// Network input of agent `i` at sample `k`.
fn features(trace: &SimTrace, i: usize, k: usize) -> [f64; 6] {
    let a = &trace.agents[i];
    trace.input.features(&AgentState::new(a.eta[k], a.nu[k]))
}

/// Approximation accuracy of `frozen[i]` against the recorded oracle over
/// samples `from..`.
pub fn approximation_report(trace: &SimTrace, frozen: &[RbfNetwork], from: usize) -> Result<ApproximationReport> {
    let dim = trace.input.dim();
    let mut out = ApproximationReport { frozen: Vec::new(), online: Vec::new() };
    for (i, a) in trace.agents.iter().enumerate() {
        if a.oracle.len() != trace.len() {
            return Err(Error::MissingOracleSeries(i));
        }
        let net = frozen.get(i).ok_or(Error::DimensionMismatch { expected: trace.agents.len(), got: frozen.len() })?;
        let mut rel_f: [Vec<f64>; CHANNELS] = Default::default();
        let mut rel_o: [Vec<f64>; CHANNELS] = Default::default();
        let mut sq_f = [0.0; CHANNELS];
        let mut sq_o = [0.0; CHANNELS];
        let mut s = vec![0.0; net.n_nodes()];
        for k in from.min(trace.len())..trace.len() {
            let z = features(trace, i, k);
            net.regressor_into(&z[..dim], &mut s)?;
            let pred = net.output_from_regressor(&s);
            let f = a.oracle[k];
            for c in 0..CHANNELS {
                let den = 1.0 + f[c].abs();
                let ef = (pred[c] - f[c]).abs();
                let eo = (a.nn_output[k][c] - f[c]).abs();
                rel_f[c].push(ef / den);
                rel_o[c].push(eo / den);
                sq_f[c] += ef * ef;
                sq_o[c] += eo * eo;
            }
        }
        let [f0, f1, f2] = rel_f;
        let [o0, o1, o2] = rel_o;
        out.frozen.push([stats(f0, sq_f[0]), stats(f1, sq_f[1]), stats(f2, sq_f[2])]);
        out.online.push([stats(o0, sq_o[0]), stats(o1, sq_o[1]), stats(o2, sq_o[2])]);
    }
    Ok(out)
}

/// Statistics of the online prediction alone. Needs no network.
pub fn online_approximation(trace: &SimTrace, from: usize) -> Result<Vec<[ErrorStats; CHANNELS]>> {
    let mut out = Vec::with_capacity(trace.agents.len());
    for (i, a) in trace.agents.iter().enumerate() {
        if a.oracle.len() != trace.len() || a.nn_output.len() != trace.len() {
            return Err(Error::MissingOracleSeries(i));
        }
        let mut rel: [Vec<f64>; CHANNELS] = Default::default();
        let mut sq = [0.0; CHANNELS];
        for k in from.min(trace.len())..trace.len() {
            for c in 0..CHANNELS {
                let f = a.oracle[k][c];
                let e = (a.nn_output[k][c] - f).abs();
                rel[c].push(e / (1.0 + f.abs()));
                sq[c] += e * e;
            }
        }
        let [r0, r1, r2] = rel;
        out.push([stats(r0, sq[0]), stats(r1, sq[1]), stats(r2, sq[2])]);
    }
    Ok(out)
}

/// Offline oracle: per agent and channel, ridge least-squares weights on the
/// recorded `(S(Z(t_k)), F(t_k))` pairs, `k >= from`, on `lattice`.
pub fn least_squares_networks(trace: &SimTrace, lattice: &RbfNetwork, from: usize, ridge: f64) -> Result<Vec<RbfNetwork>> {
    let dim = trace.input.dim();
    let p = lattice.n_nodes();
    let mut nets = Vec::with_capacity(trace.agents.len());
    for (i, a) in trace.agents.iter().enumerate() {
        if a.oracle.len() != trace.len() {
            return Err(Error::MissingOracleSeries(i));
        }
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DMatrix::<f64>::zeros(p, CHANNELS);
        let mut s = vec![0.0; p];
        for k in from.min(trace.len())..trace.len() {
            let z = features(trace, i, k);
            lattice.regressor_into(&z[..dim], &mut s)?;
            let sv = DVector::from_column_slice(&s);
            gram.ger(1.0, &sv, &sv, 1.0);
            for c in 0..CHANNELS {
                rhs.column_mut(c).axpy(a.oracle[k][c], &sv, 1.0);
            }
        }
        for d in 0..p {
            gram[(d, d)] += ridge;
        }
        let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite { what: "regressor Gram matrix" })?;
        let sol = chol.solve(&rhs);
        let w: ChannelWeights = core::array::from_fn(|c| sol.column(c).iter().copied().collect());
        nets.push(lattice.with_weights(w)?);
    }
    Ok(nets)
}

/// Drift `|W(t_b) - W(t_a)| / |W(t_b)|` per agent and channel, using the first
/// and last weight snapshots at or after `t_a`.
pub fn weight_drift(trace: &SimTrace, t_a: f64) -> Vec<[f64; CHANNELS]> {
    trace
        .agents
        .iter()
        .map(|a| {
            let window: Vec<_> = a.weight_snapshots.iter().filter(|s| s.time >= t_a).collect();
            match (window.first(), window.last()) {
                (Some(first), Some(last)) => core::array::from_fn(|c| {
                    let mut diff = 0.0;
                    let mut norm = 0.0;
                    for (x, y) in first.weights[c].iter().zip(&last.weights[c]) {
                        diff += (y - x) * (y - x);
                        norm += y * y;
                    }
                    if norm == 0.0 {
                        if diff == 0.0 { 0.0 } else { f64::INFINITY }
                    } else {
                        libm::sqrt(diff / norm)
                    }
                }),
                _ => [f64::NAN; CHANNELS],
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    pub values: Vec<f64>,
    /// Fraction of consecutive sample pairs (from the given start) over
    /// which `V` did not increase.
    pub decreasing_fraction: f64,
}

/// `V = 1/2 z1'z1 + 1/2 z2' M z2` along the trace for one agent.
pub fn lyapunov_diagnostic(trace: &SimTrace, agent: usize, params: &VehicleParams, from: usize) -> Result<LyapunovSeries> {
    let m = mass_matrix(params)?;
    let a = &trace.agents[agent];
    let values: Vec<f64> = a.z1.iter().zip(&a.z2).map(|(z1, z2)| lyapunov_value(z1, z2, &m)).collect();
    let pairs = values[from.min(values.len())..].windows(2);
    let total = pairs.len();
    let down = values[from.min(values.len())..].windows(2).filter(|w| w[1] <= w[0]).count();
    let decreasing_fraction = if total == 0 { 1.0 } else { down as f64 / total as f64 };
    Ok(LyapunovSeries { values, decreasing_fraction })
}

pub fn lyapunov_value(z1: &Vector3<f64>, z2: &Vector3<f64>, m: &nalgebra::Matrix3<f64>) -> f64 {
    0.5 * z1.dot(z1) + 0.5 * z2.dot(&(m * z2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbf::build_grid_network;
    use crate::sim::{AgentTrace, NnInput};
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix3, Vector6};

    fn trace_with(times: Vec<f64>, leader: Vec<Vector6<f64>>, agents: Vec<AgentTrace>) -> SimTrace {
        let lattice = build_grid_network(&[(-1.0, 1.0); 3], &[3, 3, 3], 1.0).unwrap();
        SimTrace {
            times,
            leader,
            final_networks: vec![lattice; agents.len()],
            agents,
            input: NnInput::Velocity,
            adaptation_evaluations: 0,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn exact_exponential() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|t| libm::exp(-2.0 * t)).collect();
        let fit = exponential_fit(&t, &y).unwrap();
        assert_abs_diff_eq!(fit.rate, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_series_has_zero_rate() {
        let t: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let fit = exponential_fit(&t, &[3.0; 10]).unwrap();
        assert_eq!(fit.rate, 0.0);
    }

    #[test]
    fn degenerate_segments() {
        assert!(matches!(exponential_fit(&[0.0, 1.0], &[1.0, 0.5]), Err(Error::DegenerateSegment(_))));
        assert!(matches!(exponential_fit(&[0.0, 1.0, 2.0], &[1.0, 0.0, 0.5]), Err(Error::DegenerateSegment(_))));
    }

    #[test]
    fn decay_segment_bounds() {
        let s = [1.0, 0.5, 0.09, 0.01, 1e-12, 0.0];
        assert_eq!(decay_segment(&s, 1e-9), (2, 4));
    }

    fn on_slot_trace(shift: Vector3<f64>) -> (SimTrace, Vec<Vector3<f64>>) {
        let d = Vector3::new(1.0, -2.0, 0.0);
        let times: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let leader: Vec<Vector6<f64>> = times
            .iter()
            .map(|t| {
                let mut l = crate::dynamics::leader_closed_form(8.0, *t);
                l.fixed_rows_mut::<3>(0).add_assign(&shift);
                l
            })
            .collect();
        let eta = leader.iter().map(|l| l.fixed_rows::<3>(0) + d).collect();
        let agent = AgentTrace { eta, ..Default::default() };
        (trace_with(times, leader, vec![agent]), vec![d])
    }

    use core::ops::AddAssign;

    #[test]
    fn agent_on_its_slot_has_zero_error() {
        let (tr, d) = on_slot_trace(Vector3::zeros());
        let f = formation_error_series(&tr, &d);
        assert!(f.series[0].iter().all(|e| *e < 1e-12));
        assert!(f.steady[0].max < 1e-12);
    }

    #[test]
    fn translation_invariance() {
        let (mut tr, d) = on_slot_trace(Vector3::zeros());
        tr.agents[0].eta[3].x += 0.5;
        let a = formation_error_series(&tr, &d);
        let c = Vector3::new(100.0, -40.0, 0.0);
        let mut moved = tr.clone();
        for (e, l) in moved.agents[0].eta.iter_mut().zip(moved.leader.iter_mut()) {
            *e += c;
            l.fixed_rows_mut::<3>(0).add_assign(&c);
        }
        let b = formation_error_series(&moved, &d);
        for (x, y) in a.series[0].iter().zip(&b.series[0]) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn final_quarter() {
        assert_eq!(final_quarter_start(8), 6);
        assert_eq!(final_quarter_start(9), 6);
        assert_eq!(final_quarter_start(1), 0);
        let s = tail_stats(&[9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 1.0, 3.0]);
        assert_eq!(s, TailStats { mean: 2.0, max: 3.0 });
    }

    #[test]
    fn transient_boundary() {
        let s = [10.0, 5.0, 1.0, 0.5, 3.0, 0.5, 0.5, 0.5];
        // tail mean 0.5, bound 1.0: last excursion above is index 4
        assert_eq!(transient_end(&s), 5);
    }

    fn oracle_trace() -> SimTrace {
        let n = 40;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let nu: Vec<Vector3<f64>> = times.iter().map(|t| Vector3::new(libm::sin(*t), libm::cos(*t), 0.3 * libm::sin(2.0 * t))).collect();
        let oracle = nu.iter().map(|v| Vector3::new(2.0 * v.x, -v.y * v.y, 1.0)).collect();
        let agent = AgentTrace {
            eta: vec![Vector3::zeros(); n],
            nu,
            oracle,
            nn_output: vec![Vector3::zeros(); n],
            ..Default::default()
        };
        trace_with(times, vec![Vector6::zeros(); n], vec![agent])
    }

    #[test]
    fn zero_weights_give_relative_magnitude() {
        let tr = oracle_trace();
        let lattice = tr.lattice();
        let rep = approximation_report(&tr, &[lattice], 0).unwrap();
        let mut expect: Vec<f64> = tr.agents[0].oracle.iter().map(|f| f.x.abs() / (1.0 + f.x.abs())).collect();
        expect.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(rep.frozen[0][0].median, percentile(&expect, 0.5));
        assert_eq!(rep.frozen[0][2].median, 0.5);
        assert_eq!(rep.frozen, rep.online);
        assert_eq!(online_approximation(&tr, 0).unwrap(), rep.online);
    }

    #[test]
    fn least_squares_beats_perturbed_weights() {
        let tr = oracle_trace();
        let ls = least_squares_networks(&tr, &tr.lattice(), 0, 1e-10).unwrap();
        let best = approximation_report(&tr, &ls, 0).unwrap();
        let mut worse = ls[0].clone();
        for w in worse.weights.iter_mut() {
            w[5] += 0.1;
        }
        let other = approximation_report(&tr, &[worse], 0).unwrap();
        for c in 0..CHANNELS {
            assert!(best.frozen[0][c].rms_abs <= other.frozen[0][c].rms_abs);
        }
        assert!(best.frozen[0][2].rms_abs < 1e-3);
    }

    #[test]
    fn missing_oracle() {
        let mut tr = oracle_trace();
        tr.agents[0].oracle.clear();
        assert_eq!(approximation_report(&tr, &[tr.lattice()], 0), Err(Error::MissingOracleSeries(0)));
    }

    #[test]
    fn lyapunov_values() {
        let m = Matrix3::identity() * 4.0;
        assert_eq!(lyapunov_value(&Vector3::zeros(), &Vector3::zeros(), &m), 0.0);
        assert_eq!(lyapunov_value(&Vector3::x(), &Vector3::zeros(), &m), 0.5);
        assert_eq!(lyapunov_value(&Vector3::zeros(), &Vector3::x(), &m), 2.0);
    }
}
