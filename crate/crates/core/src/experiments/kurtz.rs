//! Distance between a finite-`m` simulation and the RLO mean-field ODE.

use crate::ctmc::{simulate_open_with, OpenOptions};
use crate::error::{Error, Result};
use crate::meanfield::{integrate, Field, OdeState};
use crate::model::{Policy, SystemConfig, SystemState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KurtzOptions {
    /// ODE truncation level (the initial measure is padded with zeros).
    pub b_cap: usize,
    pub dt: f64,
    /// Spacing of the comparison times.
    pub interval: f64,
}

impl Default for KurtzOptions {
    fn default() -> Self {
        KurtzOptions { b_cap: 60, dt: 1e-3, interval: 0.1 }
    }
}

/// Occupancy vector whose empirical measure is exactly `x0`: the first
/// `m x0_0` servers hold 0 clients, the next `m x0_1` hold 1, and so on.
pub fn realize_measure(m: usize, x0: &[f64]) -> Result<Vec<u32>> {
    let mut counts = Vec::with_capacity(m);
    for (k, &x) in x0.iter().enumerate() {
        let servers = x * m as f64;
        let r = servers.round();
        if (servers - r).abs() > 1e-9 || r < 0.0 {
            return Err(Error::invalid(format!(
                "m * x0_{k} = {servers} is not an integer; choose x0 representable with m = {m} servers"
            )));
        }
        counts.extend(std::iter::repeat_n(k as u32, r as usize));
    }
    if counts.len() != m {
        return Err(Error::invalid(format!("x0 assigns {} servers, expected {m}", counts.len())));
    }
    Ok(counts)
}

/// Runs one homogeneous RLO system with `m` servers from the state realising
/// `x0` and returns `sup_t Σ_k |X_k(t) - x_k(t)|` over the comparison times
/// in `[0, t_end]`.
pub fn kurtz_deviation(
    m: usize,
    lambda: f64,
    beta: f64,
    x0: &[f64],
    t_end: f64,
    seed: u64,
    opts: &KurtzOptions,
) -> Result<f64> {
    if x0.len() > opts.b_cap + 1 {
        return Err(Error::invalid(format!("x0 has more levels than B = {}", opts.b_cap)));
    }
    let counts = realize_measure(m, x0)?;
    let mut padded = x0.to_vec();
    padded.resize(opts.b_cap + 1, 0.0);
    let ode_x0 = OdeState::new(padded)?;

    let per_interval = (opts.interval / opts.dt).round();
    if per_interval < 1.0 || (per_interval * opts.dt - opts.interval).abs() > 1e-9 * opts.interval {
        return Err(Error::invalid("the comparison interval must be a multiple of dt"));
    }
    let ode = integrate(Field::Rlo { lambda, beta }, &ode_x0, t_end, opts.dt, per_interval as u64)?;

    let config = SystemConfig::homogeneous(m, lambda, beta, Policy::Rlo)?.with_sample_interval(opts.interval)?;
    let run = simulate_open_with(
        &config,
        &SystemState::new(counts),
        &OpenOptions { horizon: t_end, warmup: 0.0, record_sojourns: false, record_samples: true },
        seed,
    )?;
    if run.trajectory.samples.len() != ode.len() {
        return Err(Error::invalid(format!(
            "t_end must be a multiple of the comparison interval ({} snapshots vs {} ODE states)",
            run.trajectory.samples.len(),
            ode.len()
        )));
    }
    let mut sup: f64 = 0.0;
    let mut hist = Vec::new();
    for (sample, (_, x)) in run.trajectory.samples.iter().zip(&ode) {
        hist.clear();
        for &c in &sample.counts {
            let c = c as usize;
            if c >= hist.len() {
                hist.resize(c + 1, 0usize);
            }
            hist[c] += 1;
        }
        let levels = hist.len().max(x.x().len());
        let dist: f64 = (0..levels)
            .map(|k| {
                let sim = hist.get(k).map_or(0.0, |&h| h as f64 / m as f64);
                let det = x.x().get(k).copied().unwrap_or(0.0);
                (sim - det).abs()
            })
            .sum();
        sup = sup.max(dist);
    }
    Ok(sup)
}
