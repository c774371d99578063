//! Domain types shared by all modules, the two migration decision rules, and
//! basic transforms of occupancy vectors.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

/// Default spacing of trajectory snapshots, in time units.
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 0.1;

const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Random local search: move only if the service rate strictly improves.
    Rls,
    /// Random load-oblivious: jump along a fixed random walk.
    Rlo,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Rls => "rls",
            Policy::Rlo => "rlo",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rls" => Ok(Policy::Rls),
            "rlo" => Ok(Policy::Rlo),
            other => Err(Error::config("policy", format!("expected `rls` or `rlo`, got `{other}`"))),
        }
    }
}

/// Destination law of an RLO jump, resolved once at construction.
#[derive(Debug, Clone, PartialEq)]
enum JumpLaw {
    Uniform { include_self: bool },
    Matrix { cdf: Vec<Vec<f64>> },
}

/// Full parameterization of a system instance.
///
/// Immutable after construction; the `with_*` methods return validated copies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    m: usize,
    mu: Vec<f64>,
    lambda: Vec<f64>,
    beta: f64,
    policy: Policy,
    q_matrix: Option<Vec<Vec<f64>>>,
    self_jumps: bool,
    cap: Option<u32>,
    sample_interval: f64,
    #[serde(skip)]
    jumps: JumpLaw,
}

impl SystemConfig {
    pub fn new(mu: Vec<f64>, lambda: Vec<f64>, beta: f64, policy: Policy) -> Result<Self> {
        let m = mu.len();
        if m == 0 {
            return Err(Error::config("mu", "at least one server is required"));
        }
        if lambda.len() != m {
            return Err(Error::config(
                "lambda",
                format!("expected {m} arrival rates (one per server), got {}", lambda.len()),
            ));
        }
        if let Some((i, v)) = mu.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::config("mu", format!("capacity of server {i} must be positive, got {v}")));
        }
        if let Some((i, v)) = lambda.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::config("lambda", format!("arrival rate of server {i} must be non-negative, got {v}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::config("beta", format!("must be non-negative, got {beta}")));
        }
        Ok(SystemConfig {
            m,
            mu,
            lambda,
            beta,
            policy,
            q_matrix: None,
            self_jumps: true,
            cap: None,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            jumps: JumpLaw::Uniform { include_self: true },
        })
    }

    /// `m` unit-capacity servers each receiving arrivals at rate `lambda`.
    pub fn homogeneous(m: usize, lambda: f64, beta: f64, policy: Policy) -> Result<Self> {
        Self::new(vec![1.0; m], vec![lambda; m], beta, policy)
    }

    /// Closed system: `m` unit-capacity servers, no arrivals.
    pub fn closed(m: usize, beta: f64, policy: Policy) -> Result<Self> {
        Self::homogeneous(m, 0.0, beta, policy)
    }

    /// Sets an explicit RLO jump-destination matrix (row-stochastic, irreducible).
    pub fn with_q_matrix(mut self, q: Vec<Vec<f64>>) -> Result<Self> {
        validate_q_matrix(&q, self.m)?;
        let cdf = q
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        self.jumps = JumpLaw::Matrix { cdf };
        self.q_matrix = Some(q);
        Ok(self)
    }

    /// Whether a uniform RLO jump may land on the current server.
    pub fn with_self_jumps(mut self, include_self: bool) -> Result<Self> {
        if !include_self && self.m < 2 {
            return Err(Error::config("self_jumps", "excluding self-jumps needs at least two servers"));
        }
        self.self_jumps = include_self;
        if self.q_matrix.is_none() {
            self.jumps = JumpLaw::Uniform { include_self };
        }
        Ok(self)
    }

    pub fn with_cap(mut self, cap: u32) -> Result<Self> {
        if cap < 1 {
            return Err(Error::config("cap", "must be at least 1"));
        }
        self.cap = Some(cap);
        Ok(self)
    }

    pub fn with_sample_interval(mut self, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("sample_interval", format!("must be positive, got {dt}")));
        }
        self.sample_interval = dt;
        Ok(self)
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_lambda(self, lambda: Vec<f64>) -> Result<Self> {
        let mut next = Self::new(self.mu.clone(), lambda, self.beta, self.policy)?;
        next.q_matrix = self.q_matrix;
        next.self_jumps = self.self_jumps;
        next.cap = self.cap;
        next.sample_interval = self.sample_interval;
        next.jumps = self.jumps;
        Ok(next)
    }

    /// Parses a TOML document whose keys mirror the field names.
    ///
    /// `mu` and `lambda` accept either a scalar (broadcast to all servers) or
    /// a list; `m` may be omitted when a list fixes it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: ConfigFile = toml::from_str(text)?;
        raw.into_config()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn policy(&self) -> Policy {
        self.policy
    }
    pub fn q_matrix(&self) -> Option<&[Vec<f64>]> {
        self.q_matrix.as_deref()
    }
    pub fn self_jumps(&self) -> bool {
        self.self_jumps
    }
    pub fn cap(&self) -> Option<u32> {
        self.cap
    }
    pub fn sample_interval(&self) -> f64 {
        self.sample_interval
    }

    pub fn total_lambda(&self) -> f64 {
        self.lambda.iter().sum()
    }

    pub fn total_mu(&self) -> f64 {
        self.mu.iter().sum()
    }

    pub fn is_closed(&self) -> bool {
        self.lambda.iter().all(|&l| l == 0.0)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.mu.iter().all(|&v| v == self.mu[0])
    }

    /// Probability that an RLO jump from `from` lands on `to`.
    pub fn jump_probability(&self, from: usize, to: usize) -> f64 {
        match &self.q_matrix {
            Some(q) => q[from][to],
            None if self.self_jumps => 1.0 / self.m as f64,
            None if from == to => 0.0,
            None => 1.0 / (self.m - 1) as f64,
        }
    }

    /// Draws the destination of an RLO jump from server `from`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        match &self.jumps {
            JumpLaw::Uniform { include_self: true } => rng.random_range(0..self.m),
            JumpLaw::Uniform { include_self: false } => {
                let j = rng.random_range(0..self.m - 1);
                if j >= from {
                    j + 1
                } else {
                    j
                }
            }
            JumpLaw::Matrix { cdf } => pick_from_cdf(&cdf[from], rng.random::<f64>()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    m: Option<i64>,
    mu: Option<ScalarOrList>,
    lambda: Option<ScalarOrList>,
    beta: Option<f64>,
    policy: Option<String>,
    q_matrix: Option<Vec<Vec<f64>>>,
    self_jumps: Option<bool>,
    cap: Option<i64>,
    sample_interval: Option<f64>,
}

impl ConfigFile {
    fn into_config(self) -> Result<SystemConfig> {
        let list_len = |v: &Option<ScalarOrList>| match v {
            Some(ScalarOrList::List(l)) => Some(l.len()),
            _ => None,
        };
        let m = match self.m {
            Some(m) if m < 1 => return Err(Error::config("m", format!("must be positive, got {m}"))),
            Some(m) => m as usize,
            None => list_len(&self.mu)
                .or(list_len(&self.lambda))
                .ok_or_else(|| Error::config("m", "missing (required unless mu or lambda is a list)"))?,
        };
        let expand = |key: &str, v: Option<ScalarOrList>, default: Option<f64>| -> Result<Vec<f64>> {
            match v {
                Some(ScalarOrList::Scalar(x)) => Ok(vec![x; m]),
                Some(ScalarOrList::List(l)) if l.len() == m => Ok(l),
                Some(ScalarOrList::List(l)) => {
                    Err(Error::config(key, format!("list has {} entries but m = {m}", l.len())))
                }
                None => default.map(|d| vec![d; m]).ok_or_else(|| Error::config(key, "missing")),
            }
        };
        let mu = expand("mu", self.mu, Some(1.0))?;
        let lambda = expand("lambda", self.lambda, Some(0.0))?;
        let beta = self.beta.ok_or_else(|| Error::config("beta", "missing"))?;
        let policy: Policy = self.policy.ok_or_else(|| Error::config("policy", "missing"))?.parse()?;
        let mut cfg = SystemConfig::new(mu, lambda, beta, policy)?;
        if let Some(include_self) = self.self_jumps {
            cfg = cfg.with_self_jumps(include_self)?;
        }
        if let Some(q) = self.q_matrix {
            if policy == Policy::Rls {
                return Err(Error::config("q_matrix", "only meaningful for policy = \"rlo\""));
            }
            cfg = cfg.with_q_matrix(q)?;
        }
        if let Some(cap) = self.cap {
            if cap < 1 || cap > u32::MAX as i64 {
                return Err(Error::config("cap", format!("must be a positive integer, got {cap}")));
            }
            cfg = cfg.with_cap(cap as u32)?;
        }
        if let Some(dt) = self.sample_interval {
            cfg = cfg.with_sample_interval(dt)?;
        }
        Ok(cfg)
    }
}

fn validate_q_matrix(q: &[Vec<f64>], m: usize) -> Result<()> {
    if q.len() != m {
        return Err(Error::config("q_matrix", format!("expected {m} rows, got {}", q.len())));
    }
    for (i, row) in q.iter().enumerate() {
        if row.len() != m {
            return Err(Error::config("q_matrix", format!("row {i} has {} entries, expected {m}", row.len())));
        }
        if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::config("q_matrix", format!("row {i} has invalid entry {v}")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::config("q_matrix", format!("row {i} sums to {s}, expected 1")));
        }
    }
    let unreachable = unreachable_servers(q);
    if !unreachable.is_empty() {
        return Err(Error::config(
            "q_matrix",
            format!("reducible: servers {unreachable:?} do not communicate with server 0"),
        ));
    }
    Ok(())
}

fn pick_from_cdf(cdf: &[f64], u: f64) -> usize {
    let j = cdf.partition_point(|&c| c <= u);
    if j < cdf.len() {
        return j;
    }
    // u beyond the rounded total: last cell with positive mass.
    (1..cdf.len()).rev().find(|&k| cdf[k] > cdf[k - 1]).unwrap_or(0)
}

/// Occupancy vector N(t) and the simulation clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub t: f64,
    pub counts: Vec<u32>,
}

impl SystemState {
    pub fn new(counts: Vec<u32>) -> Self {
        SystemState { t: 0.0, counts }
    }

    pub fn at(t: f64, counts: Vec<u32>) -> Self {
        SystemState { t, counts }
    }

    pub fn empty(m: usize) -> Self {
        Self::new(vec![0; m])
    }

    /// All `n` clients on server 0.
    pub fn all_at_one(m: usize, n: u32) -> Self {
        let mut counts = vec![0; m];
        counts[0] = n;
        Self::new(counts)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn m(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Checks the state against a configuration (server count and cap).
    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        if self.counts.len() != config.m() {
            return Err(Error::invalid(format!(
                "state has {} servers, config has {}",
                self.counts.len(),
                config.m()
            )));
        }
        if let Some(cap) = config.cap() {
            if let Some((i, &c)) = self.counts.iter().enumerate().find(|(_, &c)| c > cap) {
                return Err(Error::Truncation { server: i, count: c, cap });
            }
        }
        if !(self.time().is_finite() && self.time() >= 0.0) {
            return Err(Error::invalid(format!("state time {} must be non-negative", self.time())));
        }
        Ok(())
    }
}

/// Fractions `x_k` of servers holding exactly `k` clients, `k = 0..=B`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<T> {
    x: Vec<T>,
}

impl<T: Real> EmpiricalMeasure<T> {
    /// Wraps a vector of fractions, checking non-negativity and unit mass.
    pub fn new(x: Vec<T>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("measure needs at least one cell"));
        }
        if let Some((k, v)) = x.iter().enumerate().find(|(_, v)| !(**v >= T::zero())) {
            return Err(Error::invalid(format!("x[{k}] = {v} is negative")));
        }
        let total: T = x.iter().copied().sum();
        let tol = T::of(1e-12).max(T::epsilon() * T::of(x.len() as f64));
        if (total - T::one()).abs() > tol {
            return Err(Error::invalid(format!("fractions sum to {total}, expected 1")));
        }
        Ok(EmpiricalMeasure { x })
    }

    /// Point mass at `k` on `0..=b_cap`.
    pub fn point_mass(k: usize, b_cap: usize) -> Self {
        let mut x = vec![T::zero(); b_cap + 1];
        x[k] = T::one();
        EmpiricalMeasure { x }
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn into_inner(self) -> Vec<T> {
        self.x
    }

    pub fn b_cap(&self) -> usize {
        self.x.len() - 1
    }
}

/// Server capacity ordering for RLS: does a client on server `i` (with `n_i`
/// residents including itself) gain by moving to server `j` (with `n_j`)?
///
/// Evaluated as `mu_j * n_i > mu_i * (n_j + 1)`; ties never migrate. A full
/// destination (`n_j == cap`) always refuses.
pub fn rls_accepts<T: Scalar>(mu_i: T, n_i: u32, mu_j: T, n_j: u32, cap: Option<u32>) -> Result<bool> {
    if n_i == 0 {
        return Err(Error::invalid("rls_accepts: the deciding server must hold the client (n_i >= 1)"));
    }
    if !(mu_i > T::zero() && mu_j > T::zero()) {
        return Err(Error::invalid("rls_accepts: capacities must be positive"));
    }
    if cap.is_some_and(|b| n_j >= b) {
        return Ok(false);
    }
    Ok(mu_j * T::of_count(n_i as u64) > mu_i * T::of_count(n_j as u64 + 1))
}

/// Inverse-CDF draw of the next RLO server from `q_row` with uniform `u`.
///
/// `from` identifies the current server; it only matters through `q_row`.
pub fn rlo_next_server(from: usize, q_row: &[f64], u: f64) -> Result<usize> {
    if from >= q_row.len() {
        return Err(Error::invalid(format!("server {from} out of range for row of length {}", q_row.len())));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(Error::invalid(format!("u = {u} not in [0, 1)")));
    }
    let total: f64 = q_row.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOLERANCE || q_row.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid("q_row must be a probability vector"));
    }
    let mut acc = 0.0;
    let cdf: Vec<f64> = q_row
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    Ok(pick_from_cdf(&cdf, u))
}

/// Fractions of servers at each occupancy level `0..=b_cap`.
///
/// Counts are tallied as integers and divided once, so the result sums to one
/// up to a single rounding per cell.
pub fn empirical_measure<T: Real>(state: &SystemState, b_cap: u32) -> Result<EmpiricalMeasure<T>> {
    let mut tally = vec![0usize; b_cap as usize + 1];
    for (i, &c) in state.counts.iter().enumerate() {
        if c > b_cap {
            return Err(Error::Truncation { server: i, count: c, cap: b_cap });
        }
        tally[c as usize] += 1;
    }
    let m = T::of_count(state.m() as u64);
    let x = tally.into_iter().map(|c| T::of_count(c as u64) / m).collect();
    Ok(EmpiricalMeasure { x })
}

/// Tail sums `s_k = Σ_{l≥k} x_l`.
pub fn tail_sums<T: Real>(x: &EmpiricalMeasure<T>) -> Vec<T> {
    tail_sums_of(x.x())
}

pub(crate) fn tail_sums_of<T: Real>(x: &[T]) -> Vec<T> {
    let mut s = vec![T::zero(); x.len()];
    let mut acc = T::zero();
    for k in (0..x.len()).rev() {
        acc = acc + x[k];
        s[k] = acc;
    }
    s
}

/// Servers that do not communicate with server 0 under the positive entries
/// of `q` (off-diagonal), i.e. the complement of its communicating class.
pub fn unreachable_servers<T: Scalar>(q: &[Vec<T>]) -> Vec<usize> {
    let m = q.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..m {
                let w = if forward { &q[i][j] } else { &q[j][i] };
                if !seen[j] && *w > T::zero() {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    };
    if m == 0 {
        return Vec::new();
    }
    let fwd = reach(true);
    let bwd = reach(false);
    (0..m).filter(|&i| !(fwd[i] && bwd[i])).collect()
}

/// Stationary law `π` of the jump chain with row-stochastic matrix `q`.
///
/// Solves `π (Q - I) = 0`, `Σ π = 1` by Gaussian elimination with partial
/// pivoting, then polishes with a few power-iteration sweeps.
pub fn stationary_distribution<T: Real>(q: &[Vec<T>]) -> Result<Vec<T>> {
    let m = q.len();
    if m == 0 || q.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("transition matrix must be square and non-empty"));
    }
    let unreachable = unreachable_servers(q);
    if !unreachable.is_empty() {
        return Err(Error::Reducible { unreachable });
    }
    // Row r of the system: Σ_i π_i (q_{i r} - δ_{i r}) = 0, last row replaced
    // by normalisation.
    let mut a: Vec<Vec<T>> = (0..m)
        .map(|r| {
            let mut row: Vec<T> = (0..m)
                .map(|i| if i == r { q[i][r] - T::one() } else { q[i][r] })
                .collect();
            row.push(T::zero());
            row
        })
        .collect();
    for v in a[m - 1].iter_mut() {
        *v = T::one();
    }
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).expect("finite matrix"))
            .expect("non-empty range");
        a.swap(col, pivot);
        let p = a[col][col];
        if p.abs() <= T::epsilon() {
            return Err(Error::invalid("singular system while solving for the stationary law"));
        }
        for r in (col + 1)..m {
            let f = a[r][col] / p;
            if f != T::zero() {
                for c in col..=m {
                    let v = a[col][c];
                    a[r][c] = a[r][c] - f * v;
                }
            }
        }
    }
    let mut pi = vec![T::zero(); m];
    for r in (0..m).rev() {
        let tail: T = ((r + 1)..m).map(|c| a[r][c] * pi[c]).sum();
        pi[r] = (a[r][m] - tail) / a[r][r];
    }
    for _ in 0..4 {
        let next: Vec<T> = (0..m).map(|j| (0..m).map(|i| pi[i] * q[i][j]).sum()).collect();
        let total: T = next.iter().copied().sum();
        pi = next.into_iter().map(|v| (v / total).max(T::zero())).collect();
    }
    Ok(pi)
}
