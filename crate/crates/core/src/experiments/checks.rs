//! Distributional identities of the coupled particle system and the
//! monotonicity of the RLO mean-field flow.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use crate::ctmc::{rng_from_seed, simulate_coupled};
use crate::error::{Error, Result};
use crate::meanfield::{integrate, l1_distance, solve_fixed_point_rlo, st_leq, Field, Integrator, OdeState};
use crate::stats::{chi_square_gof, replicate, summarize};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub seeds: usize,
    pub t: f64,
    /// Empirical law of `‖R + G‖(t)` against Poisson(`‖ρ‖ t`).
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub mean_blue_red: f64,
    pub se_blue_red: f64,
    /// `‖n‖ + ‖ℓ‖ t`.
    pub expected_blue_red: f64,
    /// Runs where `‖B + R‖` differed from the initial count plus ℓ-arrivals.
    pub identity_failures: usize,
}

impl CouplingReport {
    pub fn passed(&self) -> bool {
        self.p_value > 0.01
            && (self.mean_blue_red - self.expected_blue_red).abs() <= 3.0 * self.se_blue_red
            && self.identity_failures == 0
    }
}

/// Runs the coupled system once per seed and tests the identities at time
/// `t`. `q` holds walk rates.
pub fn coupling_check(
    initial_blue: &[u64],
    ell: &[f64],
    rho: &[f64],
    q: &[Vec<f64>],
    t: f64,
    seeds: &[u64],
    jobs: Option<usize>,
) -> Result<CouplingReport> {
    let n0: u64 = initial_blue.iter().sum();
    let per_seed = replicate(seeds, jobs, |seed| {
        let s = simulate_coupled(initial_blue, ell, rho, q, &[t], seed)?;
        let s = &s[0];
        let br = s.state.total_blue() + s.state.total_red();
        let rg = s.state.total_red() + s.state.total_green();
        Ok((br, rg, br == n0 + s.ell_events))
    })?;
    let rho_t: f64 = rho.iter().sum::<f64>() * t;
    let rg_max = per_seed.iter().map(|r| r.1).max().unwrap_or(0).max((rho_t * 3.0 + 10.0) as u64) as usize;
    let mut observed = vec![0u64; rg_max + 1];
    for r in &per_seed {
        observed[r.1 as usize] += 1;
    }
    let pois = Poisson::new(rho_t).map_err(|e| Error::invalid(e.to_string()))?;
    let mut probs: Vec<f64> = (0..rg_max as u64).map(|k| pois.pmf(k)).collect();
    probs.push(1.0 - pois.cdf(rg_max as u64 - 1));
    let (chi_square, dof, p_value) = chi_square_gof(&observed, &probs, 5.0)?;
    let br: Vec<f64> = per_seed.iter().map(|r| r.0 as f64).collect();
    let s = summarize(&br)?;
    Ok(CouplingReport {
        seeds: seeds.len(),
        t,
        chi_square,
        dof,
        p_value,
        mean_blue_red: s.mean,
        se_blue_red: s.std_error(),
        expected_blue_red: n0 as f64 + ell.iter().sum::<f64>() * t,
        identity_failures: per_seed.iter().filter(|r| !r.2).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub pairs: usize,
    /// Sampled times where an ordered pair lost its order.
    pub order_violations: usize,
    /// Sampled times where the empty-start path was not increasing.
    pub empty_path_violations: usize,
    /// Sampled times where the full-start path was not decreasing.
    pub full_path_violations: usize,
    pub l1_empty_to_fixed_point: f64,
    pub l1_full_to_fixed_point: f64,
    pub converged_at: f64,
}

impl MonotonicityReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.order_violations == 0
            && self.empty_path_violations == 0
            && self.full_path_violations == 0
            && self.l1_empty_to_fixed_point < tol
            && self.l1_full_to_fixed_point < tol
    }
}

/// Random probability vector and a stochastically larger companion obtained
/// by pushing a random fraction of each level's mass one level up.
fn ordered_pair<R: Rng>(rng: &mut R, b_cap: usize) -> (Vec<f64>, Vec<f64>) {
    let w: Vec<f64> = (0..=b_cap).map(|_| rng.random::<f64>().powi(3)).collect();
    let s: f64 = w.iter().sum();
    let x: Vec<f64> = w.iter().map(|v| v / s).collect();
    let mut y = x.clone();
    for k in (0..b_cap).rev() {
        let moved = rng.random::<f64>() * x[k];
        y[k] -= moved;
        y[k + 1] += moved;
    }
    (x, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicitySetup {
    pub lambda: f64,
    pub beta: f64,
    pub b_cap: usize,
    pub pairs: usize,
    pub t_pairs: f64,
    pub dt: f64,
    /// Convergence target for the two extreme starts.
    pub tol: f64,
    pub max_time: f64,
}

impl Default for MonotonicitySetup {
    fn default() -> Self {
        MonotonicitySetup { lambda: 0.8, beta: 0.5, b_cap: 30, pairs: 100, t_pairs: 10.0, dt: 0.01, tol: 1e-6, max_time: 2000.0 }
    }
}

/// Checks that the RLO flow preserves `≤_st` for random ordered pairs, and
/// that the empty and full starts approach the fixed point monotonically.
pub fn monotonicity_check(setup: &MonotonicitySetup, seed: u64) -> Result<MonotonicityReport> {
    let field = Field::Rlo { lambda: setup.lambda, beta: setup.beta };
    let mut rng = rng_from_seed(seed);
    let mut order_violations = 0;
    for _ in 0..setup.pairs {
        let (x, y) = ordered_pair(&mut rng, setup.b_cap);
        let tx = integrate(field, &OdeState::new(x)?, setup.t_pairs, setup.dt, 10)?;
        let ty = integrate(field, &OdeState::new(y)?, setup.t_pairs, setup.dt, 10)?;
        order_violations += tx.iter().zip(&ty).filter(|((_, a), (_, b))| !st_leq(a.x(), b.x())).count();
    }

    let xi = solve_fixed_point_rlo(setup.lambda, setup.beta, setup.b_cap, 1e-8)?.xi;
    let mut empty = Integrator::new(field, &OdeState::empty(setup.b_cap), setup.dt)?;
    let mut full = Integrator::new(field, &OdeState::full(setup.b_cap), setup.dt)?;
    let (mut empty_bad, mut full_bad) = (0, 0);
    loop {
        let (pe, pf) = (empty.x().to_vec(), full.x().to_vec());
        let de = l1_distance(empty.x(), &xi);
        let df = l1_distance(full.x(), &xi);
        if (de < setup.tol && df < setup.tol) || empty.time() >= setup.max_time {
            return Ok(MonotonicityReport {
                pairs: setup.pairs,
                order_violations,
                empty_path_violations: empty_bad,
                full_path_violations: full_bad,
                l1_empty_to_fixed_point: de,
                l1_full_to_fixed_point: df,
                converged_at: empty.time(),
            });
        }
        empty.step()?;
        full.step()?;
        empty_bad += usize::from(!st_leq(&pe, empty.x()));
        full_bad += usize::from(!st_leq(full.x(), &pf));
    }
}
