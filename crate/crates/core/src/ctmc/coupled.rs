//! Three-colour particle system coupling the open RLO process with
//! arrival-only processes.
//!
//! Every particle performs an independent random walk with jump rates
//! `q_ij`. At the epochs of a Poisson process of rate `‖ℓ‖` a blue particle
//! is added at server `i` with probability `ℓ_i / ‖ℓ‖`. At the epochs of a
//! Poisson process of rate `‖ρ‖` a server `i` is drawn with probability
//! `ρ_i / ‖ρ‖`; one of its blue particles turns red, or a green particle is
//! added there when it holds no blue particle.

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use super::rng_from_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoupledState {
    pub blue: Vec<u64>,
    pub red: Vec<u64>,
    pub green: Vec<u64>,
}

impl CoupledState {
    fn new(blue: Vec<u64>) -> Self {
        let m = blue.len();
        CoupledState { blue, red: vec![0; m], green: vec![0; m] }
    }

    pub fn total_blue(&self) -> u64 {
        self.blue.iter().sum()
    }

    pub fn total_red(&self) -> u64 {
        self.red.iter().sum()
    }

    pub fn total_green(&self) -> u64 {
        self.green.iter().sum()
    }

    fn at(&self, i: usize) -> u64 {
        self.blue[i] + self.red[i] + self.green[i]
    }

    fn colour_mut(&mut self, c: usize) -> &mut Vec<u64> {
        match c {
            0 => &mut self.blue,
            1 => &mut self.red,
            _ => &mut self.green,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledSample {
    pub t: f64,
    pub state: CoupledState,
    /// `ℓ`-arrivals up to `t`.
    pub ell_events: u64,
    /// `ρ`-events (recolourings and green additions) up to `t`.
    pub rho_events: u64,
}

fn check_rates(name: &str, v: &[f64], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(Error::invalid(format!("{name} has {} entries, expected {m}", v.len())));
    }
    if v.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
        return Err(Error::invalid(format!("{name} must be finite and non-negative")));
    }
    Ok(())
}

/// Picks an index with probability proportional to `weights` given a uniform
/// `u` scaled to their sum.
fn pick(weights: impl Iterator<Item = f64>, mut u: f64) -> usize {
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

/// Simulates the coupled system and records it at each of `times`
/// (non-decreasing, non-negative). `q` holds walk rates; its diagonal is
/// ignored.
pub fn simulate_coupled(
    initial_blue: &[u64],
    ell: &[f64],
    rho: &[f64],
    q: &[Vec<f64>],
    times: &[f64],
    seed: u64,
) -> Result<Vec<CoupledSample>> {
    let m = initial_blue.len();
    if m == 0 {
        return Err(Error::invalid("coupled system needs at least one server"));
    }
    check_rates("ell", ell, m)?;
    check_rates("rho", rho, m)?;
    if q.len() != m {
        return Err(Error::invalid(format!("q has {} rows, expected {m}", q.len())));
    }
    for row in q {
        check_rates("q row", row, m)?;
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("sample times must be finite, non-negative and non-decreasing"));
    }

    let out_rate: Vec<f64> = (0..m).map(|i| (0..m).filter(|&j| j != i).map(|j| q[i][j]).sum()).collect();
    let ell_total: f64 = ell.iter().sum();
    let rho_total: f64 = rho.iter().sum();
    let mut rng = rng_from_seed(seed);
    let mut state = CoupledState::new(initial_blue.to_vec());
    let (mut ell_events, mut rho_events) = (0u64, 0u64);
    let mut t = 0.0;
    let mut samples = Vec::with_capacity(times.len());
    let mut pending = times.iter().copied().peekable();

    loop {
        let walk_total: f64 = (0..m).map(|i| state.at(i) as f64 * out_rate[i]).sum();
        let rate = walk_total + ell_total + rho_total;
        let t_next = if rate > 0.0 { t + rng.sample::<f64, _>(Exp1) / rate } else { f64::INFINITY };
        while let Some(&ts) = pending.peek() {
            if ts >= t_next {
                break;
            }
            samples.push(CoupledSample { t: ts, state: state.clone(), ell_events, rho_events });
            pending.next();
        }
        if pending.peek().is_none() {
            return Ok(samples);
        }
        t = t_next;
        let u = rng.random::<f64>() * rate;
        if u < ell_total {
            let i = pick(ell.iter().copied(), u);
            state.blue[i] += 1;
            ell_events += 1;
        } else if u < ell_total + rho_total {
            let i = pick(rho.iter().copied(), u - ell_total);
            if state.blue[i] > 0 {
                state.blue[i] -= 1;
                state.red[i] += 1;
            } else {
                state.green[i] += 1;
            }
            rho_events += 1;
        } else {
            let v = u - ell_total - rho_total;
            let i = pick((0..m).map(|i| state.at(i) as f64 * out_rate[i]), v);
            let c = pick([state.blue[i], state.red[i], state.green[i]].into_iter().map(|c| c as f64), rng.random::<f64>() * state.at(i) as f64);
            let j = pick((0..m).map(|j| if j == i { 0.0 } else { q[i][j] }), rng.random::<f64>() * out_rate[i]);
            let colour = state.colour_mut(c);
            colour[i] -= 1;
            colour[j] += 1;
        }
    }
}
