//! Balance predicates, the observables used in the time-to-balance analysis
//! and the closed-system replication harness.
//!
//! The target load `p = n/m` and the band `[(1-ε)p, (1+ε)p]` are handled as
//! exact rationals so that boundary occupancies are never misclassified.

use std::io::Write;

use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;

use crate::ctmc::{rng_from_seed, simulate_closed, StopRule};
use crate::error::{Error, Result};
use crate::model::{SystemConfig, SystemState};
use crate::output::write_comments;
use crate::scalar::Scalar;
use crate::stats::{replicate, summarize, Summary};
use crate::Rational;

/// `max - min <= 1`. An empty vector is vacuously balanced.
pub fn is_balanced(counts: &[u32]) -> bool {
    match (counts.iter().min(), counts.iter().max()) {
        (Some(lo), Some(hi)) => hi - lo <= 1,
        _ => true,
    }
}

fn check_eps(eps: f64) -> Result<Rational> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps = {eps} must lie in (0, 1)")));
    }
    Ok(Rational::of(eps))
}

fn target_load(n: u64, m: usize) -> Result<Rational> {
    if m == 0 {
        return Err(Error::invalid("need at least one server"));
    }
    Ok(Rational::new(n as i64, m as i64))
}

/// Integer occupancies inside `[(1-ε)p, (1+ε)p]` with `p = n/m`, or `None`
/// when the band contains no integer.
pub fn eps_band(n: u64, m: usize, eps: f64) -> Result<Option<(u32, u32)>> {
    let e = check_eps(eps)?;
    let p = target_load(n, m)?;
    let one = Rational::from_integer(1);
    let lo = ((one - e) * p).ceil().to_integer();
    let hi = ((one + e) * p).floor().to_integer();
    Ok((lo <= hi).then_some((lo as u32, hi as u32)))
}

/// Every occupancy lies in the closed band `[(1-ε)p, (1+ε)p]`.
pub fn is_eps_balanced(counts: &[u32], eps: f64) -> Result<bool> {
    let n = counts.iter().map(|&c| c as u64).sum();
    Ok(match eps_band(n, counts.len(), eps)? {
        Some((lo, hi)) => counts.iter().all(|&c| lo <= c && c <= hi),
        None => false,
    })
}

/// Observables of a closed configuration relative to its maximum load `V`
/// and to the ε-band around `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceDiagnostics {
    /// Target load `n/m`.
    pub p: Rational,
    /// Maximum occupancy.
    pub v: u32,
    /// Servers holding exactly `v` clients.
    pub c_v: usize,
    /// Servers holding exactly `v - 1` clients.
    pub b_v: usize,
    /// Servers holding fewer than `v - 1` clients.
    pub a_v: usize,
    /// Servers inside the ε-band.
    pub m_c: usize,
    /// Servers below `(1-ε)p`.
    pub m_u: usize,
    /// Servers above `(1+ε)p`.
    pub m_o: usize,
    /// Total underflow `Σ (p - N_i)^+`.
    pub underflow: Rational,
    /// Total overflow `Σ (N_i - p)^+`.
    pub overflow: Rational,
    /// Clients above `(1+ε)p` on overloaded servers.
    pub n_o: Rational,
    pub eps: Rational,
}

pub fn diagnostics(counts: &[u32], eps: f64) -> Result<BalanceDiagnostics> {
    if counts.is_empty() {
        return Err(Error::invalid("diagnostics need at least one server"));
    }
    let e = check_eps(eps)?;
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    let p = target_load(n, counts.len())?;
    let one = Rational::from_integer(1);
    let (lo, hi) = ((one - e) * p, (one + e) * p);
    let v = *counts.iter().max().expect("non-empty");
    let mut d = BalanceDiagnostics {
        p,
        v,
        c_v: 0,
        b_v: 0,
        a_v: 0,
        m_c: 0,
        m_u: 0,
        m_o: 0,
        underflow: Rational::zero(),
        overflow: Rational::zero(),
        n_o: Rational::zero(),
        eps: e,
    };
    for &c in counts {
        match v - c {
            0 => d.c_v += 1,
            1 => d.b_v += 1,
            _ => d.a_v += 1,
        }
        let x = Rational::from_integer(c as i64);
        if x < lo {
            d.m_u += 1;
        } else if x > hi {
            d.m_o += 1;
            d.n_o += x - hi;
        } else {
            d.m_c += 1;
        }
        if x > p {
            d.overflow += x - p;
        } else {
            d.underflow += p - x;
        }
    }
    assert_eq!(d.underflow, d.overflow, "underflow and overflow must agree");
    Ok(d)
}

/// `3 (1 + ln m) (m²/n + ln m + 1)`, the explicit upper bound on the mean
/// time to balance from any start (rate-1 resampling clock).
pub fn theorem1_bound(m: usize, n: u64) -> Result<f64> {
    if m < 2 || n < 1 {
        return Err(Error::invalid(format!("bound needs m >= 2 and n >= 1, got m = {m}, n = {n}")));
    }
    let (mf, nf) = (m as f64, n as f64);
    let lm = mf.ln();
    Ok(3.0 * (1.0 + lm) * (mf * mf / nf + lm + 1.0))
}

/// Reference lower bounds on the mean time to balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBounds {
    /// Mean time of the final move when `m` divides `n`: `m²/(m+n)`.
    pub last_move: f64,
    /// Order of the time to empty a server holding every client: `ln m`.
    pub all_at_one: f64,
}

pub fn lower_bound_estimates(m: usize, n: u64) -> Result<LowerBounds> {
    if m < 1 {
        return Err(Error::invalid("need at least one server"));
    }
    let (mf, nf) = (m as f64, n as f64);
    Ok(LowerBounds { last_move: mf * mf / (mf + nf), all_at_one: mf.ln() })
}

/// Starting layout for [`measure_balance_time`].
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLayout {
    AllAtOne,
    /// Each client on an independent uniform server, drawn per replication.
    UniformRandom,
    Custom(Vec<u32>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BalanceStop {
    Exact,
    Eps(f64),
}

impl BalanceStop {
    fn rule(self) -> StopRule {
        match self {
            BalanceStop::Exact => StopRule::Balanced,
            BalanceStop::Eps(e) => StopRule::EpsBalanced(e),
        }
    }

    /// CSV label: `exact` or the ε value.
    pub fn label(self) -> String {
        match self {
            BalanceStop::Exact => "exact".to_string(),
            BalanceStop::Eps(e) => e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct BalanceRunOptions {
    /// Defaults to `100 × theorem1_bound(m, n)`.
    pub horizon: Option<f64>,
    /// Worker threads; all cores when `None`.
    pub jobs: Option<usize>,
}


#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceTimeResult {
    pub m: usize,
    pub n: u64,
    pub reps: usize,
    pub base_seed: u64,
    /// Statistics over uncensored runs; `None` when fewer than two finished.
    pub summary: Option<Summary>,
    pub censored: usize,
    /// Stop time per replication, in seed order (the horizon when censored).
    pub times: Vec<f64>,
    pub horizon: f64,
}

impl BalanceTimeResult {
    pub fn mean(&self) -> Option<f64> {
        self.summary.map(|s| s.mean)
    }
}

fn layout(m: usize, n: u64, initial: &InitialLayout, seed: u64) -> Result<SystemState> {
    match initial {
        InitialLayout::AllAtOne => {
            let n = u32::try_from(n).map_err(|_| Error::invalid(format!("n = {n} exceeds the count range")))?;
            Ok(SystemState::all_at_one(m, n))
        }
        InitialLayout::UniformRandom => {
            let mut rng = rng_from_seed(seed);
            rng.set_stream(1);
            let mut counts = vec![0u32; m];
            for _ in 0..n {
                counts[rng.random_range(0..m)] += 1;
            }
            Ok(SystemState::new(counts))
        }
        InitialLayout::Custom(counts) => {
            let total: u64 = counts.iter().map(|&c| c as u64).sum();
            if counts.len() != m || total != n {
                return Err(Error::invalid(format!(
                    "custom layout has {} servers and {total} clients, expected {m} and {n}",
                    counts.len()
                )));
            }
            Ok(SystemState::new(counts.clone()))
        }
    }
}

/// Runs `reps` closed simulations with seeds `base_seed..base_seed+reps`
/// and summarises the stop times. Censored runs are counted and excluded
/// from the statistics.
pub fn measure_balance_time(
    config: &SystemConfig,
    n: u64,
    initial: &InitialLayout,
    stop: BalanceStop,
    reps: usize,
    base_seed: u64,
    opts: &BalanceRunOptions,
) -> Result<BalanceTimeResult> {
    if reps < 2 {
        return Err(Error::invalid(format!("reps = {reps}: at least 2 replications are needed for a variance estimate")));
    }
    if !config.is_closed() {
        return Err(Error::invalid("time to balance needs a closed configuration (zero arrival rates)"));
    }
    let m = config.m();
    let horizon = match opts.horizon {
        Some(h) => h,
        None => 100.0 * theorem1_bound(m.max(2), n.max(1))?,
    };
    let seeds: Vec<u64> = (0..reps as u64).map(|r| base_seed.wrapping_add(r)).collect();
    let runs = replicate(&seeds, opts.jobs, |seed| {
        let state = layout(m, n, initial, seed)?;
        let run = simulate_closed(config, &state, stop.rule(), horizon, seed)?;
        Ok((run.stop_time, run.censored))
    })?;
    let finished: Vec<f64> = runs.iter().filter(|r| !r.1).map(|r| r.0).collect();
    Ok(BalanceTimeResult {
        m,
        n,
        reps,
        base_seed,
        summary: summarize(&finished).ok(),
        censored: runs.len() - finished.len(),
        times: runs.iter().map(|r| r.0).collect(),
        horizon,
    })
}

/// One line of the balance results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceRow {
    pub m: usize,
    pub n: u64,
    pub policy: String,
    pub eps_or_exact: String,
    pub reps: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub bound: f64,
    pub lower_bound: f64,
    pub censored: usize,
}

impl BalanceRow {
    /// The lower bound column carries `ln m` for all-at-one starts and
    /// `m²/(m+n)` otherwise.
    pub fn new(result: &BalanceTimeResult, config: &SystemConfig, initial: &InitialLayout, stop: BalanceStop) -> Result<Self> {
        let lb = lower_bound_estimates(result.m, result.n)?;
        let s = result.summary;
        Ok(BalanceRow {
            m: result.m,
            n: result.n,
            policy: config.policy().to_string(),
            eps_or_exact: stop.label(),
            reps: result.reps,
            mean: s.map_or(f64::NAN, |s| s.mean),
            sd: s.map_or(f64::NAN, |s| s.sd),
            ci_lo: s.map_or(f64::NAN, |s| s.ci_lo),
            ci_hi: s.map_or(f64::NAN, |s| s.ci_hi),
            bound: theorem1_bound(result.m.max(2), result.n.max(1))?,
            lower_bound: if *initial == InitialLayout::AllAtOne { lb.all_at_one } else { lb.last_move },
            censored: result.censored,
        })
    }
}

pub fn write_balance_csv<W: Write>(rows: &[BalanceRow], seed: u64, mut w: W) -> Result<()> {
    write_comments(&mut w, &[("seed", seed.to_string())])?;
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Converts a rational diagnostic to `f64` for reporting.
pub fn approx(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
