//! Simulated mean throughput (inverse mean sojourn) against the mean-field
//! prediction.

use serde::Serialize;

use super::cell_seeds;
use crate::ctmc::{mean_sojourn, simulate_open_with, OpenOptions};
use crate::error::{Error, Result};
use crate::meanfield::{equilibrium_rls, solve_fixed_point_rlo, throughput, RelaxOptions};
use crate::model::{Policy, SystemConfig, SystemState};
use crate::stats::{replicate, summarize};

/// Truncation level used for mean-field predictions.
pub const PREDICTION_B: usize = 100;
/// Fraction of the horizon discarded before sojourns are recorded.
pub const WARMUP_FRACTION: f64 = 0.2;
/// Minimum replications for CI-bearing outputs.
pub const MIN_REPS: usize = 20;

/// Where exogenous clients arrive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalLayout {
    /// Rate `λ` at every server.
    Homogeneous,
    /// Rate `m λ` at the first server only.
    SingleEntry,
}

impl ArrivalLayout {
    pub fn config(self, m: usize, lambda: f64, beta: f64, policy: Policy) -> Result<SystemConfig> {
        match self {
            ArrivalLayout::Homogeneous => SystemConfig::homogeneous(m, lambda, beta, policy),
            ArrivalLayout::SingleEntry => {
                let mut l = vec![0.0; m];
                l[0] = m as f64 * lambda;
                SystemConfig::new(vec![1.0; m], l, beta, policy)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputEstimate {
    /// `1 / mean sojourn`, with the sojourn CI inverted.
    pub throughput: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_sojourn: f64,
    pub sojourn_sd: f64,
    pub reps: usize,
    pub completed: usize,
}

/// Mean throughput over `seeds`, each an open run from empty with sojourns
/// recorded after the first 20% of the horizon. The point estimate inverts
/// the mean of the per-replication mean sojourns.
pub fn throughput_estimate(config: &SystemConfig, horizon: f64, seeds: &[u64], jobs: Option<usize>) -> Result<ThroughputEstimate> {
    throughput_estimate_with_warmup(config, horizon, WARMUP_FRACTION * horizon, seeds, jobs)
}

/// [`throughput_estimate`] with an explicit warm-up time instead of the
/// default fraction of the horizon.
pub fn throughput_estimate_with_warmup(
    config: &SystemConfig,
    horizon: f64,
    warmup: f64,
    seeds: &[u64],
    jobs: Option<usize>,
) -> Result<ThroughputEstimate> {
    if config.is_closed() {
        return Err(Error::invalid("throughput needs positive arrival rates"));
    }
    if config.total_lambda() >= config.total_mu() {
        return Err(Error::Infeasible(format!(
            "total arrival rate {} >= total service rate {}; sojourn times have no stationary mean",
            config.total_lambda(),
            config.total_mu()
        )));
    }
    let initial = SystemState::empty(config.m());
    let opts = OpenOptions { horizon, warmup, record_sojourns: true, record_samples: false };
    let per_rep = replicate(seeds, jobs, |seed| {
        let run = simulate_open_with(config, &initial, &opts, seed)?;
        let done = run.sojourns.iter().filter(|r| r.depart_t.is_some()).count();
        let mean = mean_sojourn(&run.sojourns).ok_or(Error::UndefinedThroughput)?;
        Ok((mean, done))
    })?;
    let means: Vec<f64> = per_rep.iter().map(|r| r.0).collect();
    let s = summarize(&means)?;
    Ok(ThroughputEstimate {
        throughput: 1.0 / s.mean,
        ci_lo: 1.0 / s.ci_hi,
        ci_hi: if s.ci_lo > 0.0 { 1.0 / s.ci_lo } else { f64::INFINITY },
        mean_sojourn: s.mean,
        sojourn_sd: s.sd,
        reps: s.n,
        completed: per_rep.iter().map(|r| r.1).sum(),
    })
}

/// Mean-field throughput `λ / y` for a homogeneous system.
pub fn predicted_throughput(lambda: f64, beta: f64, policy: Policy) -> Result<f64> {
    let y = match policy {
        Policy::Rlo => solve_fixed_point_rlo(lambda, beta, PREDICTION_B, 1e-8)?.y,
        Policy::Rls => equilibrium_rls(lambda, beta, PREDICTION_B, 1e-10, &RelaxOptions::default())?.y,
    };
    throughput(y, lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputGrid {
    pub m_list: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub beta: f64,
    pub policies: Vec<Policy>,
    pub layout: ArrivalLayout,
    pub horizon: f64,
    pub reps: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRow {
    pub m: usize,
    pub lambda: f64,
    pub beta: f64,
    pub policy: String,
    pub layout: ArrivalLayout,
    pub reps: usize,
    pub throughput: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_sojourn: f64,
    /// Mean-field value (homogeneous layouts only).
    pub prediction: Option<f64>,
    pub rel_error: Option<f64>,
}

/// One row per `(m, λ, policy)` cell, cells numbered in that nesting order
/// for seed assignment.
pub fn throughput_comparison(grid: &ThroughputGrid, jobs: Option<usize>) -> Result<Vec<ThroughputRow>> {
    if grid.reps < MIN_REPS {
        return Err(Error::invalid(format!("reps = {} is below the minimum of {MIN_REPS} for confidence intervals", grid.reps)));
    }
    if let Some(&l) = grid.lambda_grid.iter().find(|&&l| l >= 1.0) {
        return Err(Error::Infeasible(format!("lambda = {l} >= 1 is unstable; sojourn estimation is undefined")));
    }
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &m in &grid.m_list {
        for &lambda in &grid.lambda_grid {
            for &policy in &grid.policies {
                let config = grid.layout.config(m, lambda, grid.beta, policy)?;
                let seeds = cell_seeds(grid.base_seed, cell, grid.reps);
                cell += 1;
                let est = throughput_estimate(&config, grid.horizon, &seeds, jobs)?;
                let prediction = match grid.layout {
                    ArrivalLayout::Homogeneous => Some(predicted_throughput(lambda, grid.beta, policy)?),
                    ArrivalLayout::SingleEntry => None,
                };
                rows.push(ThroughputRow {
                    m,
                    lambda,
                    beta: grid.beta,
                    policy: policy.to_string(),
                    layout: grid.layout,
                    reps: est.reps,
                    throughput: est.throughput,
                    ci_lo: est.ci_lo,
                    ci_hi: est.ci_hi,
                    mean_sojourn: est.mean_sojourn,
                    prediction,
                    rel_error: prediction.map(|p| (est.throughput - p).abs() / p),
                });
            }
        }
    }
    Ok(rows)
}
