//! Exact generator drift of `f(n) = Σ_i max(ε, n_i)` under RLS.

use num_traits::ToPrimitive;
use serde::Serialize;

use crate::ctmc::{transition_rates, Regime};
use crate::error::{Error, Result};
use crate::model::{Policy, SystemConfig};
use crate::scalar::Scalar;
use crate::Rational;

fn potential<T: Scalar>(counts: &[u32], eps: &T) -> T {
    counts.iter().fold(T::zero(), |acc, &c| {
        let v = T::of_count(c as u64);
        acc + if v > *eps { v } else { eps.clone() }
    })
}

fn lossy<T: ToPrimitive>(v: &T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Checks `0 < ε < 1` and `ε Σμ < Σ(μ - λ) - γ` with `γ > 0`.
fn check_constraint<T: Scalar + ToPrimitive>(config: &SystemConfig, eps: &T, gamma: &T) -> Result<()> {
    if config.policy() != Policy::Rls {
        return Err(Error::invalid("drift enumeration is defined for the RLS policy"));
    }
    if !(*eps > T::zero() && *eps < T::one()) || !(*gamma > T::zero()) {
        return Err(Error::invalid("need 0 < eps < 1 and gamma > 0"));
    }
    let sum = |v: &[f64]| v.iter().fold(T::zero(), |a, &x| a + T::of(x));
    let lhs = eps.clone() * sum(config.mu());
    let rhs = sum(config.mu()) - sum(config.lambda()) - gamma.clone();
    if !(lhs < rhs) {
        return Err(Error::DriftConstraint { eps: lossy(eps), lhs: lossy(&lhs), rhs: lossy(&rhs) });
    }
    Ok(())
}

/// `Δf(n) = Σ_{n'} q(n, n') (f(n') - f(n))` over arrivals, departures and
/// accepted RLS migrations out of `counts`.
pub fn lyapunov_drift<T: Scalar + ToPrimitive>(counts: &[u32], config: &SystemConfig, eps: T, gamma: T) -> Result<T> {
    check_constraint(config, &eps, &gamma)?;
    let f0 = potential(counts, &eps);
    let rates = transition_rates::<T>(counts, config, Regime::Open)?;
    Ok(rates.into_iter().fold(T::zero(), |acc, (tr, rate)| {
        let f1 = potential(&tr.apply(counts), &eps);
        acc + rate * (f1 - f0.clone())
    }))
}

/// Smallest maximum load `K` beyond which every state with an empty server
/// has drift below `-γ`.
///
/// With an empty server, `Δf <= Σλ - (1-ε) μ_min - ε Y(n)` and a client on a
/// most loaded server (load `p`) moving to an empty server gives
/// `Y(n) >= β p / m` once such a move is accepted, i.e. `p > μ_max/μ_min`.
pub fn drift_threshold(config: &SystemConfig, eps: f64, gamma: f64) -> Result<u64> {
    let e = Rational::of(eps);
    let g = Rational::of(gamma);
    check_constraint(config, &e, &g)?;
    if config.beta() <= 0.0 {
        return Err(Error::invalid("drift threshold needs beta > 0"));
    }
    let mu_min = config.mu().iter().copied().fold(f64::INFINITY, f64::min);
    let mu_max = config.mu().iter().copied().fold(0.0, f64::max);
    let one = Rational::from_integer(1);
    let m = Rational::from_integer(config.m() as i64);
    let total_lambda = config.lambda().iter().fold(Rational::from_integer(0), |a, &x| a + Rational::of(x));
    let bound0 = total_lambda - (one - e) * Rational::of(mu_min);
    let k = (m * (bound0 + g) / (e * Rational::of(config.beta()))).floor().to_integer() + 1;
    let k_accept = (Rational::of(mu_max) / Rational::of(mu_min)).floor().to_integer() + 1;
    Ok(k.max(k_accept).max(1) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    /// Occupancies joined by spaces.
    pub state: String,
    pub k0: usize,
    pub p: u32,
    /// The case analysis guarantees negative drift here.
    pub checked: bool,
    pub drift: f64,
    pub drift_exact: String,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftSummary {
    pub states: usize,
    pub checked: usize,
    /// Checked states with `Δf >= 0`.
    pub violations: usize,
    /// Checked states with `Δf >= -γ`.
    pub gamma_violations: usize,
    pub k: u64,
    pub max_checked_drift: f64,
}

impl DriftSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Exact drift of every state with `max_i n_i <= max_n`, in lexicographic
/// order.
pub fn drift_table(config: &SystemConfig, eps: f64, gamma: f64, max_n: u32) -> Result<(Vec<DriftRow>, DriftSummary)> {
    let k = drift_threshold(config, eps, gamma)?;
    let (e, g) = (Rational::of(eps), Rational::of(gamma));
    let m = config.m();
    let mut counts = vec![0u32; m];
    let mut rows = Vec::new();
    let mut summary = DriftSummary {
        states: 0,
        checked: 0,
        violations: 0,
        gamma_violations: 0,
        k,
        max_checked_drift: f64::NEG_INFINITY,
    };
    loop {
        let drift = lyapunov_drift(&counts, config, e, g)?;
        let k0 = counts.iter().filter(|&&c| c == 0).count();
        let p = *counts.iter().max().expect("m >= 1");
        let checked = k0 == 0 || p as u64 >= k;
        let negative = drift < Rational::from_integer(0);
        let d = lossy(&drift);
        summary.states += 1;
        if checked {
            summary.checked += 1;
            summary.violations += usize::from(!negative);
            summary.gamma_violations += usize::from(drift >= -g);
            summary.max_checked_drift = summary.max_checked_drift.max(d);
        }
        rows.push(DriftRow {
            state: counts.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
            k0,
            p,
            checked,
            drift: d,
            drift_exact: drift.to_string(),
            negative,
        });
        // Odometer increment, last server fastest.
        let mut i = m;
        loop {
            if i == 0 {
                return Ok((rows, summary));
            }
            i -= 1;
            if counts[i] < max_n {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
        }
    }
}
